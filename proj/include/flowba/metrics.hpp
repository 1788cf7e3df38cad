#pragma once

#include <vector>

#include "flowba/geometry.hpp"
#include "flowba/raster.hpp"

namespace flowba {

// Trajectory accuracy after the standard normalization protocol:
//   1. scale ground truth so its total path length (sum of consecutive camera
//      center distances) is 1; zero path length throws DegenerateTrajectory,
//   2. align the estimate onto the normalized ground truth with a similarity
//      transform (umeyama_sim3 over camera centers),
//   3. ate: RMSE of camera-center distances over all frames,
//      rte: RMSE of consecutive relative-translation errors,
//      rre: mean consecutive relative-rotation geodesic angle in degrees.
// Both inputs are camera-to-world poses for the same frame set, in order.
struct TrajectoryMetrics {
  double ate = 0.0;
  double rte = 0.0;
  double rre_deg = 0.0;
};
TrajectoryMetrics ate_rte_rre(const std::vector<RigidTransform>& estimate_cam_to_world,
                              const std::vector<RigidTransform>& gt_cam_to_world);

// Depth accuracy. The estimate is disparity; ground truth is metric depth.
// A single global (scale, shift) is least-squares fit in disparity space over
// every valid pixel of every frame jointly (disabled when fit_scale_shift is
// false), then per-pixel metrics are computed on depth. Pixels with invalid
// entries on either side or with ground-truth depth > max_depth are excluded;
// throws EmptyOverlap when nothing remains.
struct DepthMetrics {
  double abs_rel = 0.0;
  double log_rmse = 0.0;
  double delta_125 = 0.0;  // percent of pixels with max(d/gt, gt/d) < 1.25
  long n_pixels = 0;
};
DepthMetrics depth_metrics(const std::vector<DisparityGrid>& estimate_disparity,
                           const std::vector<GridD>& gt_depth, bool fit_scale_shift = true,
                           double max_depth = 100.0);

}  // namespace flowba
