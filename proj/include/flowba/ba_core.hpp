#pragma once

#include <Eigen/Dense>
#include <vector>

#include "flowba/frame_graph.hpp"
#include "flowba/geometry.hpp"
#include "flowba/raster.hpp"

namespace flowba {

// A directed flow observation between two frames of the problem. Pixel grids
// of target/weight must match the source frame's disparity grid.
struct BAEdge {
  int i = 0;  // source frame (owns the pixels and disparities)
  int j = 0;  // target frame
  EdgeObservation obs;
};

// Nonlinear least squares over camera poses, per-pixel disparities of each
// frame, and optionally a shared focal length. Poses map world to camera.
// The focal unknown is parameterized as log(f); k.fx and k.fy mirror `focal`
// and are refreshed whenever the focal moves.
struct BAProblem {
  std::vector<RigidTransform> poses;
  std::vector<DisparityGrid> disp;
  std::vector<uint8_t> pose_fixed;  // gauge: fixed poses receive no update
  Intrinsics k;
  double focal = 0.0;
  std::vector<BAEdge> edges;

  bool optimize_disparity = true;
  bool optimize_focal = false;

  // Quadratic pull of each disparity toward a per-pixel anchor, weight w_d.
  // Empty vectors disable the prior.
  std::vector<GridD> prior_disp;
  std::vector<MaskU8> prior_valid;
  double w_d = 0.0;

  int n_frames() const { return static_cast<int>(poses.size()); }
  void set_focal(double f);
  void check_consistent() const;
};

// Linearization at the current state. Camera parameters are ordered as six
// twist coordinates per free pose (problem order) followed by one log-focal
// column when enabled. Disparity blocks stay per frame: the Hessian there is
// diagonal and each frame's coupling to the camera block is a dense matrix
// over that frame's own column pattern (source pose, poses of all edge
// targets, focal), which is what keeps the Schur step cheap.
struct BlockSystem {
  int n_cam = 0;
  std::vector<int> pose_col;  // frame -> first of its 6 columns, -1 if fixed
  int focal_col = -1;

  Eigen::MatrixXd h_cam;
  Eigen::VectorXd b_cam;

  bool has_disp = false;
  std::vector<std::vector<int>> disp_id;  // frame -> pixel -> unknown id, -1 invalid
  std::vector<int> frame_first_disp;      // frame -> first unknown id
  Eigen::VectorXd h_d;                    // diagonal blocks, reprojection part
  Eigen::VectorXd h_d_prior;              // prior contribution to the diagonal
  Eigen::VectorXd b_d;
  std::vector<std::vector<int>> pattern;  // frame -> coupled camera columns
  std::vector<Eigen::MatrixXd> coupling;  // frame -> (pattern size) x (frame unknowns)

  int n_disp() const { return static_cast<int>(h_d.size()); }
};

// Weighted squared reprojection cost plus, when enabled, the disparity prior.
// Pixels with weight <= 0, invalid disparity, or a masked projection
// contribute nothing.
double total_cost(const BAProblem& p, bool include_prior = true);

// Gauss-Newton normal equations at the current state. include_prior folds the
// disparity prior into h_d_prior / b_d; pass false to inspect the pure
// reprojection information (used for observability assessment).
BlockSystem build_system(const BAProblem& p, bool include_prior = true);

struct StepResult {
  bool ok = false;
  Eigen::VectorXd d_cam;
  Eigen::VectorXd d_disp;
};

// Solve (H + lambda diag H) step = b via the Schur complement on the camera
// block. Disparity unknowns whose damped diagonal is <= 1e-12 are held still
// and excluded from the complement.
StepResult solve_damped(const BlockSystem& sys, double lambda);

// Same step assembled densely, no Schur elimination. Test oracle.
StepResult solve_damped_dense(const BlockSystem& sys, double lambda);

// Left-multiplicative retraction: G <- exp(dxi) G, d <- max(d + dd, d_min),
// f <- f exp(dlogf). Fixed poses and invalid pixels stay put.
void apply_step(const BlockSystem& sys, const StepResult& step, double d_min, BAProblem* p);

struct LMOptions {
  int max_iters = 30;
  double lambda0 = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 5.0;
  int max_rejects = 8;          // consecutive rejected steps before giving up
  double cost_rel_tol = 1e-10;  // stop when an accepted step improves less
  double step_tol = 1e-10;      // exhausted rejects count as convergence, not a
                                // stall, when a lightly damped step is this small
  double d_min = 1e-4;
};

struct LMRecord {
  double cost = 0.0;
  double lambda = 0.0;
  bool accepted = false;
};

struct LMTrace {
  std::vector<LMRecord> steps;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool no_progress = false;  // hit max_rejects; best state is kept
};

// Levenberg-Marquardt outer loop. Accepted costs are non-increasing; a
// non-finite trial cost counts as a rejection.
LMTrace lm_solve(BAProblem* p, const LMOptions& opts = {});

// Pose-only refinement: disparities and focal are left bit-identical.
LMTrace motion_only_ba(BAProblem* p, const LMOptions& opts = {});

// 98th percentile (index floor(0.98 (n-1)) of the sorted valid values) of all
// disparities in the problem.
double disparity_percentile_98(const std::vector<DisparityGrid>& disp);

// Rescale so the 98th percentile of disparity becomes 2.0: d <- s d with
// s = 2 / pct98, translations t <- t / s, prior anchors scaled along. The
// induced flow of every edge is invariant. Returns s.
double normalize_disparity(BAProblem* p);

// Focal measured in units of the longer image side.
inline double normalize_focal(double f_pixels, int width, int height) {
  return f_pixels / static_cast<double>(std::max(width, height));
}

}  // namespace flowba
