#pragma once

#include <Eigen/Dense>
#include <vector>

#include "flowba/ba_core.hpp"

namespace flowba {

// Diagonal-information summary of a solved problem. All quantities come from
// the undamped Gauss-Newton Hessian of the reprojection term alone; the
// disparity prior is excluded so poorly observed variables stay visibly
// uncertain instead of being propped up by their anchor.
struct ObservabilityReport {
  std::vector<GridD> disp_sigma2;   // per frame, 1 / (diag + eps) on valid pixels
  std::vector<MaskU8> sigma_valid;  // the frame's disparity validity
  Eigen::VectorXd cam_sigma2;       // per free camera parameter, problem order
  double median_hd = 0.0;           // median reprojection information of disparity
  // Focal information left after every other unknown absorbs what it can (the
  // Schur complement onto the focal column), per unit of f / max(W, H). The
  // raw diagonal would only measure flow magnitude: a rotation-dominant
  // sequence moves pixels a lot while constraining the focal almost not at
  // all, because its focal response is nearly a pose rotation in disguise.
  double focal_h = 0.0;
  double w_d = 0.0;                 // gamma_d exp(-beta_d median_hd)
  bool focal_enabled = false;       // focal_h >= tau_f
  double eps = 0.0;
};

// gamma_d at zero information, decaying as disparity becomes well observed.
inline double depth_reg_weight(double median_hd, double gamma_d, double beta_d) {
  return gamma_d * std::exp(-beta_d * median_hd);
}

inline bool focal_gate(double focal_h, double tau_f) { return focal_h >= tau_f; }

// Lower median: the element at index (n-1)/2 of the sorted values.
double median(std::vector<double> values);

ObservabilityReport assess_observability(const BAProblem& p, double gamma_d, double beta_d,
                                         double tau_f, double eps = 1e-8);

}  // namespace flowba
