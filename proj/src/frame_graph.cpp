#include "flowba/frame_graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "flowba/errors.hpp"

namespace flowba {

GridD combine_weights(const GridD& confidence, const GridD& prob_static) {
  if (!confidence.same_shape(prob_static))
    throw ShapeMismatch("combine_weights: confidence and motion grids differ in shape");
  GridD out(confidence.width, confidence.height);
  for (int i = 0; i < confidence.size(); ++i) {
    const double w = confidence[i] * prob_static[i];
    out[i] = std::clamp(w, 0.0, 1.0);
  }
  return out;
}

double mean_flow_distance(const RigidTransform& g_i, const RigidTransform& g_j,
                          const DisparityGrid& disp_i, const Intrinsics& k) {
  const EdgeGeometry edge(g_i, g_j);
  double sum = 0.0;
  int count = 0;
  for (int y = 0; y < disp_i.values.height; ++y) {
    for (int x = 0; x < disp_i.values.width; ++x) {
      if (!disp_i.valid.at(x, y)) continue;
      const Vec2 p(static_cast<double>(x), static_cast<double>(y));
      Vec2 q;
      if (!induced_point(p, disp_i.values.at(x, y), edge.g_ij, k, &q)) continue;
      sum += (q - p).norm();
      ++count;
    }
  }
  if (count == 0) throw NoValidPixels("mean_flow_distance: no pixel projects into the target");
  return sum / count;
}

std::vector<std::pair<int, int>> build_edges(
    const std::vector<RigidTransform>& poses, const std::vector<DisparityGrid>& disps,
    const Intrinsics& k, int window_radius, double proximity_px,
    const std::function<bool(int, int)>& has_obs) {
  const int n = static_cast<int>(poses.size());
  if (static_cast<int>(disps.size()) != n)
    throw ShapeMismatch("build_edges: poses and disparities count differently");

  std::set<std::pair<int, int>> selected;
  auto admit_pair = [&](int a, int b) {
    if (has_obs(a, b) && has_obs(b, a)) {
      selected.emplace(a, b);
      selected.emplace(b, a);
    }
  };

  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b <= std::min(n - 1, a + window_radius); ++b) admit_pair(a, b);

  for (int a = 0; a < n; ++a) {
    for (int b = a + window_radius + 1; b < n; ++b) {
      if (selected.count({a, b})) continue;
      bool close = false;
      try {
        close = mean_flow_distance(poses[a], poses[b], disps[a], k) < proximity_px ||
                mean_flow_distance(poses[b], poses[a], disps[b], k) < proximity_px;
      } catch (const NoValidPixels&) {
        continue;
      }
      if (close) admit_pair(a, b);
    }
  }

  return {selected.begin(), selected.end()};
}

}  // namespace flowba
