#include "flowba/uncertainty.hpp"

#include <algorithm>

#include "flowba/errors.hpp"

namespace flowba {

double median(std::vector<double> values) {
  if (values.empty()) throw NoValidPixels("median of an empty set");
  const size_t idx = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + idx, values.end());
  return values[idx];
}

namespace {

// Information of the last camera column once poses and disparities may move
// freely: eliminate the disparity block, then Schur-complement the remaining
// pose columns away. Pose directions carrying no information (rank-deficient
// h_pp) are dropped by a spectral pseudo-inverse instead of absorbing focal.
double marginal_focal_information(const BlockSystem& sys) {
  Eigen::MatrixXd h = sys.h_cam;
  for (int f = 0; f < static_cast<int>(sys.pattern.size()); ++f) {
    const std::vector<int>& cols = sys.pattern[f];
    if (cols.empty()) continue;
    const Eigen::MatrixXd& c = sys.coupling[f];
    const int first = sys.frame_first_disp[f];
    for (int u = 0; u < c.cols(); ++u) {
      const double hd = sys.h_d(first + u);
      if (hd <= 1e-12) continue;
      const Eigen::VectorXd col = c.col(u) / hd;
      for (size_t a = 0; a < cols.size(); ++a)
        for (size_t b = 0; b < cols.size(); ++b) h(cols[a], cols[b]) -= col(a) * c(b, u);
    }
  }
  const int fc = sys.focal_col;
  const int np = sys.n_cam - 1;  // focal is the last column
  if (np == 0) return std::max(0.0, h(fc, fc));
  const Eigen::MatrixXd p = h.topLeftCorner(np, np);
  const Eigen::VectorXd cross = h.topRightCorner(np, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double cutoff = 1e-10 * std::max(ev(np - 1), 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(np);
  for (int i = 0; i < np; ++i)
    if (ev(i) > cutoff && ev(i) > 0.0) inv(i) = 1.0 / ev(i);
  const Eigen::VectorXd rotated = es.eigenvectors().transpose() * cross;
  const double absorbed = (rotated.array().square() * inv.array()).sum();
  return std::max(0.0, h(fc, fc) - absorbed);
}

}  // namespace

ObservabilityReport assess_observability(const BAProblem& p, double gamma_d, double beta_d,
                                         double tau_f, double eps) {
  BAProblem probe = p;  // measure focal and disparity information regardless of what is optimized
  probe.optimize_focal = true;
  probe.optimize_disparity = true;
  const BlockSystem sys = build_system(probe, /*include_prior=*/false);

  ObservabilityReport rep;
  rep.eps = eps;

  rep.cam_sigma2.resize(sys.n_cam);
  for (int c = 0; c < sys.n_cam; ++c) rep.cam_sigma2(c) = 1.0 / (sys.h_cam(c, c) + eps);

  const double max_side = static_cast<double>(std::max(probe.k.width, probe.k.height));
  const double f_norm = probe.focal / max_side;
  rep.focal_h = marginal_focal_information(sys) / (f_norm * f_norm);
  rep.focal_enabled = focal_gate(rep.focal_h, tau_f);

  std::vector<double> hd(sys.h_d.data(), sys.h_d.data() + sys.h_d.size());
  rep.median_hd = hd.empty() ? 0.0 : median(std::move(hd));
  rep.w_d = depth_reg_weight(rep.median_hd, gamma_d, beta_d);

  rep.disp_sigma2.reserve(probe.n_frames());
  rep.sigma_valid.reserve(probe.n_frames());
  for (int f = 0; f < probe.n_frames(); ++f) {
    const DisparityGrid& d = probe.disp[f];
    GridD sigma(d.values.width, d.values.height, 0.0);
    for (int i = 0; i < d.values.size(); ++i) {
      const int id = sys.disp_id[f][i];
      if (id >= 0) sigma[i] = 1.0 / (sys.h_d(id) + eps);
    }
    rep.disp_sigma2.push_back(std::move(sigma));
    rep.sigma_valid.push_back(d.valid);
  }
  return rep;
}

}  // namespace flowba
