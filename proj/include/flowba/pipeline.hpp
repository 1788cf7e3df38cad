#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "flowba/config.hpp"
#include "flowba/dataset.hpp"
#include "flowba/synth.hpp"
#include "flowba/uncertainty.hpp"

namespace flowba {

// What the solver consumes: low-resolution flow observations plus the
// full-resolution mono disparity channels. Backed by a dataset on disk or by
// an in-memory synthetic bundle.
class ObservationSource {
 public:
  virtual ~ObservationSource() = default;
  virtual int n_frames() const = 0;
  virtual int lowres_factor() const = 0;
  virtual Intrinsics intrinsics_full() const = 0;
  virtual bool has_edge(int i, int j) const = 0;
  virtual FlowGrid flow(int i, int j) const = 0;  // low res, target coordinates
  virtual GridD confidence(int i, int j) const = 0;
  virtual GridD motion(int frame) const = 0;         // low res, P(static)
  virtual DisparityGrid mono_rel(int frame) const = 0;  // full res
  virtual DisparityGrid mono_abs(int frame) const = 0;  // full res
};

class DatasetSource : public ObservationSource {
 public:
  explicit DatasetSource(const Dataset& ds) : ds_(ds) {}
  int n_frames() const override { return ds_.meta().n_frames; }
  int lowres_factor() const override { return ds_.meta().lowres_factor; }
  Intrinsics intrinsics_full() const override { return ds_.meta().intrinsics; }
  bool has_edge(int i, int j) const override { return ds_.has_edge(i, j); }
  FlowGrid flow(int i, int j) const override { return ds_.flow(i, j); }
  GridD confidence(int i, int j) const override { return ds_.confidence(i, j); }
  GridD motion(int frame) const override { return ds_.motion(frame); }
  DisparityGrid mono_rel(int frame) const override { return ds_.mono_rel(frame); }
  DisparityGrid mono_abs(int frame) const override { return ds_.mono_abs(frame); }

 private:
  const Dataset& ds_;
};

// Requires a bundle generated with keep_full (the mono channels live there).
class BundleSource : public ObservationSource {
 public:
  explicit BundleSource(const SceneBundle& b) : b_(b) {}
  int n_frames() const override { return b_.spec.n_frames; }
  int lowres_factor() const override { return b_.spec.lowres_factor; }
  Intrinsics intrinsics_full() const override { return b_.intr_full; }
  bool has_edge(int i, int j) const override { return b_.edges_low.count({i, j}) > 0; }
  FlowGrid flow(int i, int j) const override { return b_.edges_low.at({i, j}).target; }
  GridD confidence(int i, int j) const override { return b_.edges_low.at({i, j}).confidence; }
  GridD motion(int frame) const override { return b_.motion_low[frame]; }
  DisparityGrid mono_rel(int frame) const override { return b_.mono_rel_full[frame]; }
  DisparityGrid mono_abs(int frame) const override { return b_.mono_abs_full[frame]; }

 private:
  const SceneBundle& b_;
};

// Affine alignment of the relative mono channel onto the metric one, robust
// to outliers: per-frame scale from the ratio of median absolute deviations,
// alpha = median of those, beta = median over all pixels of the remaining
// offset. Pooled to solver resolution with the validity-aware average.
struct MonoAlignment {
  double alpha = 1.0;
  double beta = 0.0;
  std::vector<GridD> prior_low;
  std::vector<MaskU8> prior_valid_low;
};
MonoAlignment align_mono_depth(const ObservationSource& src, double d_min);

// Geodesic blend: exp(alpha log(G_b G_a^-1)) G_a. alpha outside [0, 1]
// extrapolates.
RigidTransform interpolate_pose(const RigidTransform& g_a, const RigidTransform& g_b,
                                double alpha);

struct SolveResult {
  std::vector<RigidTransform> poses;  // world->cam, every frame
  std::vector<int> keyframes;
  std::vector<DisparityGrid> kf_disp;  // low res, solved, parallel to keyframes
  ObservabilityReport report;          // at the final keyframe state
  Intrinsics k_low;                    // with the solved focal
  double focal_low = 0.0;
  double align_alpha = 1.0, align_beta = 0.0;
  double disp_scale = 1.0;  // solved disparity = disp_scale * metric-aligned disparity
  // Observability gate, measured before the global pass.
  double gate_median_hd = 0.0, gate_w_d = 0.0, gate_focal_h = 0.0;
  bool focal_used = false;
};

// Full pose/depth solve: keyframe initialization, sliding-window tracking,
// observability-gated global refinement, non-keyframe registration, final
// all-frames pass. Throws InsufficientMotion when initialization cannot
// gather enough keyframes and TrackingLost when the frontend stalls twice in
// a row. timings, when given, receives per-stage wall-clock seconds.
SolveResult solve_video(const ObservationSource& src, const RunConfig& cfg,
                        std::map<std::string, double>* timings = nullptr);

// Writes trajectory.txt, disp/, sigma/, report.txt, intrinsics_solved.txt,
// manifest.txt (resolved config + alignment constants) and timings.txt.
void write_solve_outputs(const std::string& out_dir, const SolveResult& res,
                         const RunConfig& cfg, const ObservationSource& src,
                         const std::map<std::string, double>& timings);

}  // namespace flowba
