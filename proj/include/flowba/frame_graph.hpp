#pragma once

#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "flowba/geometry.hpp"
#include "flowba/raster.hpp"

namespace flowba {

// One directed observation: where each pixel of the source frame is seen in
// the target frame, with a per-pixel weight already combined from the flow
// confidence and the source frame's probability-of-static map.
struct EdgeObservation {
  FlowGrid target;  // observed target coordinates
  GridD weight;     // in [0, 1]
};

// weight = confidence * prob_static, clamped to [0, 1]. prob_static uses the
// convention 1 = static, 0 = moving; pass an all-ones grid to ignore motion.
GridD combine_weights(const GridD& confidence, const GridD& prob_static);

// Mean over valid pixels of || induced_target(p) - p ||_2 under the current
// pose/disparity estimates; the magnitude of predicted image motion from i
// to j. Throws NoValidPixels when nothing projects.
double mean_flow_distance(const RigidTransform& g_i, const RigidTransform& g_j,
                          const DisparityGrid& disp_i, const Intrinsics& k);

// Keyframe rule: admit when predicted motion reaches the threshold.
inline bool should_add_keyframe(double mean_distance, double threshold_px) {
  return mean_distance >= threshold_px;
}

// Pair selection over an ordered keyframe set. Includes every ordered pair
// within window_radius positions in the keyframe sequence, plus both
// directions of any remaining pair whose mean_flow_distance (either way)
// falls below proximity_px. Pairs are kept only when has_obs approves both
// directions, so the result is symmetric: (a,b) present iff (b,a) present.
// Returned pairs are positions into the input vectors.
std::vector<std::pair<int, int>> build_edges(
    const std::vector<RigidTransform>& poses, const std::vector<DisparityGrid>& disps,
    const Intrinsics& k, int window_radius, double proximity_px,
    const std::function<bool(int, int)>& has_obs);

}  // namespace flowba
