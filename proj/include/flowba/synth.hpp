#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowba/dataset.hpp"
#include "flowba/geometry.hpp"
#include "flowba/raster.hpp"

namespace flowba {

// Deterministic counter-based generator: every draw is a pure function of
// (seed, a, b, c, d), so outputs are reproducible regardless of evaluation
// order or thread count.
class Prng {
 public:
  explicit Prng(uint64_t seed) : seed_(seed) {}
  double uniform(uint64_t a, uint64_t b = 0, uint64_t c = 0, uint64_t d = 0) const;
  double normal(uint64_t a, uint64_t b = 0, uint64_t c = 0, uint64_t d = 0) const;

 private:
  uint64_t seed_;
};

enum class TrajectoryFamily { kStatic, kRotational, kForward, kOrbit, kLateral };

TrajectoryFamily trajectory_from_string(const std::string& s);
std::string to_string(TrajectoryFamily t);

// Axis-aligned box in its own frame, moving with a constant per-frame twist:
// pose at frame n is (exp(n * [angular_vel]), center + n * linear_vel).
struct MoverSpec {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
  Vec3 angular_vel = Vec3::Zero();  // radians per frame
  Vec3 linear_vel = Vec3::Zero();   // world units per frame
};

struct SceneSpec {
  uint64_t seed = 1;
  TrajectoryFamily trajectory = TrajectoryFamily::kForward;
  int n_frames = 40;
  int width = 512, height = 384;  // full resolution, divisible by lowres_factor
  int lowres_factor = 8;
  double focal = 500.0;  // full-res pixels; principal point at the image center

  // Background: a sphere of radius base_depth centered at the world origin,
  // perturbed by a smooth random field of amplitude depth_amp and angular
  // frequency depth_freq. Cameras must stay well inside it.
  double base_depth = 4.0;
  double depth_amp = 0.6;
  double depth_freq = 1.0;

  double step = 0.1;          // units/frame (forward, lateral) or rad/frame (rotational, orbit)
  double orbit_radius = 1.0;  // orbit circle radius around the origin

  std::vector<MoverSpec> movers;

  double flow_sigma = 0.0;  // Gaussian pixel noise added to stored flows
  double mono_a_min = 1.0, mono_a_max = 1.0;  // per-frame affine corruption of disp_rel
  double mono_b_min = 0.0, mono_b_max = 0.0;
  double mono_sigma = 0.0;        // additive disparity noise on both mono channels
  double mover_confidence = 1.0;  // stored confidence on mover pixels
  bool enforce_flow_range = false;  // reject scenes with adjacent mean flow outside [0.5, 64] px

  int max_gap = 16;  // low-res edges: all ordered pairs with |i-j| <= max_gap
  std::vector<int> full_offsets = {1, 2, 4, 8, 15};  // full-res forward pairs (i, i+k)
  bool full_products = true;  // emit full-res rasters (priors, gt depth, full flows)
};

SceneSpec parse_scene_spec(const std::string& path);           // rejects unknown keys
void write_scene_spec(const std::string& path, const SceneSpec& spec);

// Ground-truth world-to-camera poses for a trajectory family.
std::vector<RigidTransform> make_trajectory(const SceneSpec& spec);

// Analytic scene: evaluates the background radius field, ray-casts pixels and
// produces every ground-truth product. All queries are deterministic in spec.
class Scene {
 public:
  explicit Scene(const SceneSpec& spec);

  const SceneSpec& spec() const { return spec_; }
  const std::vector<RigidTransform>& gt_world_to_cam() const { return poses_; }
  Intrinsics intrinsics_full() const;
  Intrinsics intrinsics_low() const;

  RigidTransform mover_pose(int mover, int frame) const;  // local-to-world
  double background_radius(const Vec3& unit_dir) const;

  struct HitBuffer {
    Raster<Vec3> world;     // hit point, world coordinates
    GridD depth;            // camera-frame z of the hit
    Raster<int16_t> id;     // -1 background, otherwise mover index
  };
  // Casts one ray per pixel of frame `frame` at the given intrinsics.
  void raycast(int frame, const Intrinsics& k, HitBuffer* out) const;

  // Ground-truth correspondence for pixels of frame i into frame j, given the
  // hit buffer of frame i (same resolution as k). Mover pixels follow the
  // mover's rigid motion. valid is 0 where the target is behind camera j.
  void gt_flow(int i, int j, const HitBuffer& hits_i, const Intrinsics& k, FlowGrid* target,
               MaskU8* valid) const;

 private:
  SceneSpec spec_;
  std::vector<RigidTransform> poses_;
  Vec3 wave_vec_[4];
  double wave_phase_[4];
};

// Low-resolution products kept in memory for direct solver construction.
struct EdgeData {
  FlowGrid target;  // target coordinates, with noise applied
  GridD confidence;
};

struct SceneBundle {
  SceneSpec spec;
  Intrinsics intr_full, intr_low;
  std::vector<RigidTransform> gt_world_to_cam;
  std::vector<DisparityGrid> gt_disp_low;
  std::vector<GridD> motion_low;  // P(static)
  std::map<std::pair<int, int>, EdgeData> edges_low;
  // Full-resolution products, populated only when requested.
  std::vector<DisparityGrid> mono_rel_full, mono_abs_full;
  std::vector<DisparityGrid> gt_disp_full;
  std::vector<GridD> gt_depth_full;
  std::vector<GridD> motion_full;
  std::map<std::pair<int, int>, FlowGrid> flow_full;
};

// Generates the scene. Low-res products are always returned in the bundle.
// Full-res products are streamed to `writer` when given (one frame in memory
// at a time) and kept in the bundle when keep_full is set. Throws
// SpecInfeasible when enforce_flow_range is set and any adjacent pair's mean
// flow magnitude falls outside [0.5, 64] px at low resolution.
SceneBundle generate_scene(const SceneSpec& spec, DatasetWriter* writer = nullptr,
                           bool keep_full = false);

// Full dataset emission: generates and writes everything under root.
void write_scene_dataset(const SceneSpec& spec, const std::string& root);

constexpr double kFlowRangeMin = 0.5;   // px, feasibility window for adjacent pairs
constexpr double kFlowRangeMax = 64.0;

}  // namespace flowba
