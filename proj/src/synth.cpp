#include "flowba/synth.hpp"

#include <algorithm>
#include <cmath>

namespace flowba {

namespace {

// splitmix64 finalizer
uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t mix_key(uint64_t seed, uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  uint64_t h = mix64(seed ^ 0x8f1bbcdcbfa53e0bull);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  h = mix64(h ^ d);
  return h;
}

// RNG stream ids
constexpr uint64_t kStreamField = 1;
constexpr uint64_t kStreamFlow = 2;
constexpr uint64_t kStreamMonoAffine = 3;
constexpr uint64_t kStreamMonoNoise = 4;

}  // namespace

double Prng::uniform(uint64_t a, uint64_t b, uint64_t c, uint64_t d) const {
  return static_cast<double>(mix_key(seed_, a, b, c, d) >> 11) * 0x1.0p-53;
}

double Prng::normal(uint64_t a, uint64_t b, uint64_t c, uint64_t d) const {
  // Box-Muller on two decorrelated uniforms from the same key.
  const uint64_t h = mix_key(seed_, a, b, c, d);
  const double u1 =
      std::max(static_cast<double>(h >> 11) * 0x1.0p-53, 1e-300);
  const double u2 = static_cast<double>(mix64(h ^ 0xa5a5a5a5a5a5a5a5ull) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

TrajectoryFamily trajectory_from_string(const std::string& s) {
  if (s == "static") return TrajectoryFamily::kStatic;
  if (s == "rotational") return TrajectoryFamily::kRotational;
  if (s == "forward") return TrajectoryFamily::kForward;
  if (s == "orbit") return TrajectoryFamily::kOrbit;
  if (s == "lateral") return TrajectoryFamily::kLateral;
  throw ConfigError("unknown trajectory family '" + s + "'");
}

std::string to_string(TrajectoryFamily t) {
  switch (t) {
    case TrajectoryFamily::kStatic: return "static";
    case TrajectoryFamily::kRotational: return "rotational";
    case TrajectoryFamily::kForward: return "forward";
    case TrajectoryFamily::kOrbit: return "orbit";
    case TrajectoryFamily::kLateral: return "lateral";
  }
  throw ConfigError("bad trajectory enum");
}

std::vector<RigidTransform> make_trajectory(const SceneSpec& spec) {
  std::vector<RigidTransform> out(spec.n_frames);
  for (int n = 0; n < spec.n_frames; ++n) {
    Vec3 center = Vec3::Zero();
    Mat3 r_cw = Mat3::Identity();  // camera-to-world basis
    switch (spec.trajectory) {
      case TrajectoryFamily::kStatic:
        break;
      case TrajectoryFamily::kRotational:
        r_cw = Eigen::AngleAxisd(spec.step * n, Vec3::UnitY()).toRotationMatrix();
        break;
      case TrajectoryFamily::kForward:
        center = Vec3(0, 0, spec.step * n);
        break;
      case TrajectoryFamily::kLateral:
        center = Vec3(spec.step * n, 0, 0);
        break;
      case TrajectoryFamily::kOrbit: {
        const double phi = spec.step * n;
        center = spec.orbit_radius * Vec3(std::sin(phi), 0.0, -std::cos(phi));
        const Vec3 view = (-center).normalized();  // look at the origin
        const Vec3 up(0, 1, 0);
        const Vec3 right = up.cross(view).normalized();
        r_cw.col(0) = right;
        r_cw.col(1) = view.cross(right);
        r_cw.col(2) = view;
        break;
      }
    }
    out[n].rotation = Eigen::Quaterniond(r_cw.transpose()).normalized();
    out[n].translation = -(out[n].rotation * center);
  }
  return out;
}

Scene::Scene(const SceneSpec& spec) : spec_(spec), poses_(make_trajectory(spec)) {
  if (spec.width % spec.lowres_factor != 0 || spec.height % spec.lowres_factor != 0)
    throw DimensionMismatch("scene resolution not divisible by lowres_factor");
  if (spec.depth_amp > 0.3 * spec.base_depth)
    throw SpecInfeasible("depth_amp too large relative to base_depth for single-hit ray casts");
  const Prng rng(spec.seed);
  for (int k = 0; k < 4; ++k) {
    for (int dim = 0; dim < 3; ++dim)
      wave_vec_[k][dim] = 2.5 * spec.depth_freq * rng.normal(kStreamField, k, dim);
    wave_phase_[k] = 2.0 * M_PI * rng.uniform(kStreamField, k, 7);
  }
  // Every camera center must stay well inside the background sphere.
  for (const auto& g : poses_) {
    const Vec3 c = -(g.rotation.conjugate() * g.translation);
    if (c.norm() > 0.6 * (spec.base_depth - spec.depth_amp))
      throw SpecInfeasible("camera trajectory leaves the background interior");
  }
}

Intrinsics Scene::intrinsics_full() const {
  Intrinsics k;
  k.fx = k.fy = spec_.focal;
  k.cx = 0.5 * (spec_.width - 1);
  k.cy = 0.5 * (spec_.height - 1);
  k.width = spec_.width;
  k.height = spec_.height;
  return k;
}

Intrinsics Scene::intrinsics_low() const {
  return intrinsics_full().scaled(1.0 / spec_.lowres_factor);
}

RigidTransform Scene::mover_pose(int mover, int frame) const {
  const MoverSpec& m = spec_.movers[mover];
  Vec6 twist = Vec6::Zero();
  twist.head<3>() = m.angular_vel * frame;
  RigidTransform pose = se3_exp(twist);  // rotation part only; translation set below
  pose.translation = m.center + m.linear_vel * frame;
  return pose;
}

double Scene::background_radius(const Vec3& u) const {
  double s = 0.0;
  for (int k = 0; k < 4; ++k) s += std::sin(wave_vec_[k].dot(u) + wave_phase_[k]);
  return spec_.base_depth + spec_.depth_amp * 0.25 * s;
}

namespace {

// Slab test for a ray against an axis-aligned box centered at the local origin.
// Returns the nearest positive hit parameter or +inf.
double ray_box(const Vec3& o, const Vec3& v, const Vec3& half) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(v[a]) < 1e-15) {
      if (std::abs(o[a]) > half[a]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double lo = (-half[a] - o[a]) / v[a];
    double hi = (half[a] - o[a]) / v[a];
    if (lo > hi) std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
    if (t0 > t1) return std::numeric_limits<double>::infinity();
  }
  if (t1 < 1e-9) return std::numeric_limits<double>::infinity();
  return t0 > 1e-9 ? t0 : t1;
}

}  // namespace

void Scene::raycast(int frame, const Intrinsics& k, HitBuffer* out) const {
  const RigidTransform& g = poses_[frame];               // world -> camera
  const RigidTransform g_inv = inverse(g);               // camera -> world
  const Mat3 r_cw = g_inv.rmat();
  const Vec3 origin = g_inv.translation;                 // camera center

  std::vector<RigidTransform> mover_inv;                 // world -> mover local
  std::vector<RigidTransform> mover_fwd;
  for (size_t m = 0; m < spec_.movers.size(); ++m) {
    mover_fwd.push_back(mover_pose(static_cast<int>(m), frame));
    mover_inv.push_back(inverse(mover_fwd.back()));
  }

  out->world = Raster<Vec3>(k.width, k.height, Vec3::Zero());
  out->depth = GridD(k.width, k.height, 0.0);
  out->id = Raster<int16_t>(k.width, k.height, -1);

  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 v = (r_cw * dir_cam).normalized();

      // Background: start from the unperturbed sphere crossing, then Newton on
      // g(t) = |o + t v| - R(dir). The field is a small perturbation, so the
      // derivative is dominated by the radial term x_hat . v.
      const double ov = origin.dot(v);
      double t = -ov + std::sqrt(std::max(ov * ov + spec_.base_depth * spec_.base_depth -
                                              origin.squaredNorm(),
                                          0.0));
      for (int it = 0; it < 12; ++it) {
        const Vec3 x = origin + t * v;
        const double r = x.norm();
        const double gval = r - background_radius(x / r);
        const double slope = std::max(x.dot(v) / r, 0.15);
        t -= gval / slope;
        if (std::abs(gval) < 1e-13) break;
      }
      double best_t = t;
      int16_t best_id = -1;

      for (size_t m = 0; m < spec_.movers.size(); ++m) {
        const Vec3 o_l = mover_inv[m].apply(origin);
        const Vec3 v_l = mover_inv[m].rotation * v;
        const double tm = ray_box(o_l, v_l, spec_.movers[m].half_extents);
        if (tm < best_t) {
          best_t = tm;
          best_id = static_cast<int16_t>(m);
        }
      }

      const Vec3 hit = origin + best_t * v;
      out->world.at(x, y) = hit;
      out->depth.at(x, y) = g.apply(hit).z();
      out->id.at(x, y) = best_id;
    }
  }
}

void Scene::gt_flow(int i, int j, const HitBuffer& hits_i, const Intrinsics& k, FlowGrid* target,
                    MaskU8* valid) const {
  const RigidTransform& g_j = poses_[j];
  std::vector<RigidTransform> mover_ij;  // local motion i -> j in world coordinates
  for (size_t m = 0; m < spec_.movers.size(); ++m)
    mover_ij.push_back(
        compose(mover_pose(static_cast<int>(m), j), inverse(mover_pose(static_cast<int>(m), i))));

  *target = FlowGrid(k.width, k.height, Vec2::Zero());
  *valid = MaskU8(k.width, k.height, 0);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      Vec3 xw = hits_i.world.at(x, y);
      const int16_t id = hits_i.id.at(x, y);
      if (id >= 0) xw = mover_ij[id].apply(xw);
      Vec2 uv;
      if (project(g_j.apply(xw), k, &uv)) {
        target->at(x, y) = uv;
        valid->at(x, y) = 1;
      } else {
        target->at(x, y) = Vec2(x, y);  // zero displacement, masked by confidence 0
      }
    }
  }
}

namespace {

DisparityGrid disparity_from_depth(const GridD& depth, Level level) {
  DisparityGrid d(depth.width, depth.height, level);
  for (int i = 0; i < depth.size(); ++i) {
    if (depth[i] > 0.0 && std::isfinite(depth[i])) {
      d.values[i] = 1.0 / depth[i];
      d.valid[i] = 1;
    }
  }
  return d;
}

GridD motion_from_ids(const Raster<int16_t>& ids) {
  GridD m(ids.width, ids.height, 1.0);
  for (int i = 0; i < ids.size(); ++i)
    if (ids[i] >= 0) m[i] = 0.0;  // mover: probability-of-static zero
  return m;
}

}  // namespace

SceneBundle generate_scene(const SceneSpec& spec, DatasetWriter* writer, bool keep_full) {
  const Scene scene(spec);
  const Prng rng(spec.seed);
  SceneBundle bundle;
  bundle.spec = spec;
  bundle.intr_full = scene.intrinsics_full();
  bundle.intr_low = scene.intrinsics_low();
  bundle.gt_world_to_cam = scene.gt_world_to_cam();

  const int n = spec.n_frames;
  const Intrinsics klow = bundle.intr_low;
  const Intrinsics kfull = bundle.intr_full;

  bundle.gt_disp_low.resize(n);
  bundle.motion_low.resize(n);
  if (keep_full) {
    bundle.mono_rel_full.resize(n);
    bundle.mono_abs_full.resize(n);
    bundle.gt_disp_full.resize(n);
    bundle.gt_depth_full.resize(n);
    bundle.motion_full.resize(n);
  }

  // Per-frame affine corruption of the relative mono channel.
  std::vector<double> mono_a(n), mono_b(n);
  for (int f = 0; f < n; ++f) {
    mono_a[f] =
        spec.mono_a_min + (spec.mono_a_max - spec.mono_a_min) * rng.uniform(kStreamMonoAffine, f, 0);
    mono_b[f] =
        spec.mono_b_min + (spec.mono_b_max - spec.mono_b_min) * rng.uniform(kStreamMonoAffine, f, 1);
  }

  double worst_adjacent_low = -1.0, worst_adjacent_high = -1.0;

  Scene::HitBuffer hits_low, hits_full;
  for (int i = 0; i < n; ++i) {
    // ---- low resolution ----
    scene.raycast(i, klow, &hits_low);
    bundle.gt_disp_low[i] = disparity_from_depth(hits_low.depth, Level::kLow);
    bundle.motion_low[i] = motion_from_ids(hits_low.id);
    if (writer) writer->write_motion(i, bundle.motion_low[i]);

    for (int j = std::max(0, i - spec.max_gap); j <= std::min(n - 1, i + spec.max_gap); ++j) {
      if (j == i) continue;
      FlowGrid target;
      MaskU8 valid;
      scene.gt_flow(i, j, hits_low, klow, &target, &valid);
      EdgeData edge;
      edge.confidence = GridD(klow.width, klow.height, 0.0);
      for (int y = 0; y < klow.height; ++y) {
        for (int x = 0; x < klow.width; ++x) {
          double conf = 0.0;
          if (valid.at(x, y)) {
            if (spec.flow_sigma > 0.0) {
              const uint64_t px = static_cast<uint64_t>(y) * klow.width + x;
              const uint64_t pair = static_cast<uint64_t>(i) * 1000003ull + j;
              const Vec2 noise(spec.flow_sigma * rng.normal(kStreamFlow, pair, px, 0),
                               spec.flow_sigma * rng.normal(kStreamFlow, pair, px, 1));
              target.at(x, y) += noise;
              conf = std::exp(-noise.norm() / spec.flow_sigma);
            } else {
              conf = 1.0;
            }
            if (hits_low.id.at(x, y) >= 0) conf = spec.mover_confidence;
          }
          edge.confidence.at(x, y) = conf;
        }
      }
      edge.target = std::move(target);

      if (j == i + 1) {  // feasibility window is defined on adjacent pairs
        double sum = 0.0;
        long cnt = 0;
        for (int y = 0; y < klow.height; ++y)
          for (int x = 0; x < klow.width; ++x)
            if (valid.at(x, y)) {
              sum += (edge.target.at(x, y) - Vec2(x, y)).norm();
              ++cnt;
            }
        const double mean = cnt > 0 ? sum / cnt : 0.0;
        worst_adjacent_low = worst_adjacent_low < 0 ? mean : std::min(worst_adjacent_low, mean);
        worst_adjacent_high = std::max(worst_adjacent_high, mean);
      }

      if (writer) {
        writer->write_flow(i, j, edge.target);
        writer->write_confidence(i, j, edge.confidence);
      }
      bundle.edges_low[{i, j}] = std::move(edge);
    }

    // ---- full resolution ----
    if (!spec.full_products) continue;
    scene.raycast(i, kfull, &hits_full);
    DisparityGrid disp_full = disparity_from_depth(hits_full.depth, Level::kFull);

    DisparityGrid mono_rel(kfull.width, kfull.height, Level::kFull);
    DisparityGrid mono_abs(kfull.width, kfull.height, Level::kFull);
    for (int y = 0; y < kfull.height; ++y) {
      for (int x = 0; x < kfull.width; ++x) {
        if (!disp_full.valid.at(x, y)) continue;
        const double d = disp_full.values.at(x, y);
        const uint64_t px = static_cast<uint64_t>(y) * kfull.width + x;
        double nr = 0.0, na = 0.0;
        if (spec.mono_sigma > 0.0) {
          nr = spec.mono_sigma * rng.normal(kStreamMonoNoise, i, px, 0);
          na = spec.mono_sigma * rng.normal(kStreamMonoNoise, i, px, 1);
        }
        const double rel = mono_a[i] * d + mono_b[i] + nr;
        const double abs = d + na;
        if (rel > 0.0) {
          mono_rel.values.at(x, y) = rel;
          mono_rel.valid.at(x, y) = 1;
        }
        if (abs > 0.0) {
          mono_abs.values.at(x, y) = abs;
          mono_abs.valid.at(x, y) = 1;
        }
      }
    }

    if (writer) {
      writer->write_mono_rel(i, mono_rel);
      writer->write_mono_abs(i, mono_abs);
      writer->write_depth_gt(i, hits_full.depth);
      writer->write_motion_full(i, motion_from_ids(hits_full.id));
    }
    for (int off : spec.full_offsets) {
      const int j = i + off;
      if (j >= n) continue;
      FlowGrid target;
      MaskU8 valid;
      scene.gt_flow(i, j, hits_full, kfull, &target, &valid);
      if (spec.flow_sigma > 0.0) {
        for (int y = 0; y < kfull.height; ++y)
          for (int x = 0; x < kfull.width; ++x) {
            if (!valid.at(x, y)) continue;
            const uint64_t px = static_cast<uint64_t>(y) * kfull.width + x;
            const uint64_t pair = static_cast<uint64_t>(i) * 1000003ull + j;
            target.at(x, y) += Vec2(spec.flow_sigma * rng.normal(kStreamFlow, pair, px, 2),
                                    spec.flow_sigma * rng.normal(kStreamFlow, pair, px, 3));
          }
      }
      if (writer) writer->write_flow_full(i, j, target);
      if (keep_full) bundle.flow_full[{i, j}] = std::move(target);
    }
    if (keep_full) {
      bundle.mono_rel_full[i] = std::move(mono_rel);
      bundle.mono_abs_full[i] = std::move(mono_abs);
      bundle.gt_depth_full[i] = hits_full.depth;
      bundle.motion_full[i] = motion_from_ids(hits_full.id);
      bundle.gt_disp_full[i] = std::move(disp_full);
    }
  }

  if (spec.enforce_flow_range && n > 1) {
    if (worst_adjacent_low < kFlowRangeMin || worst_adjacent_high > kFlowRangeMax)
      throw SpecInfeasible("adjacent mean flow outside [" + std::to_string(kFlowRangeMin) + ", " +
                           std::to_string(kFlowRangeMax) + "] px: min " +
                           std::to_string(worst_adjacent_low) + ", max " +
                           std::to_string(worst_adjacent_high));
  }
  return bundle;
}

void write_scene_dataset(const SceneSpec& spec, const std::string& root) {
  DatasetMeta meta;
  meta.n_frames = spec.n_frames;
  meta.lowres_factor = spec.lowres_factor;
  {
    const Scene scene(spec);
    meta.intrinsics = scene.intrinsics_full();
  }
  for (int i = 0; i < spec.n_frames; ++i)
    for (int j = std::max(0, i - spec.max_gap); j <= std::min(spec.n_frames - 1, i + spec.max_gap);
         ++j)
      if (j != i) meta.edges.emplace_back(i, j);
  if (spec.full_products)
    for (int i = 0; i < spec.n_frames; ++i)
      for (int off : spec.full_offsets)
        if (i + off < spec.n_frames) meta.edges_full.emplace_back(i, i + off);

  DatasetWriter writer(root, meta);
  SceneBundle bundle = generate_scene(spec, &writer, false);

  std::vector<TrajectoryEntry> gt;
  for (int i = 0; i < spec.n_frames; ++i) gt.push_back(to_entry(i, bundle.gt_world_to_cam[i]));
  writer.write_gt_poses(gt);

  if (!spec.full_products) {
    // Low-res-only bundles still need mono priors; store them at low res is not
    // allowed by the layout, so full products are mandatory for datasets.
    throw ConfigError("write_scene_dataset requires full_products=true");
  }
  writer.finalize();
}

namespace {

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(parse_int(cur, what));
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (out.empty()) throw ConfigError("empty list for " + what);
  return out;
}

MoverSpec parse_mover(const std::string& v) {
  std::istringstream ss(v);
  MoverSpec m;
  if (!(ss >> m.center.x() >> m.center.y() >> m.center.z() >> m.half_extents.x() >>
        m.half_extents.y() >> m.half_extents.z() >> m.angular_vel.x() >> m.angular_vel.y() >>
        m.angular_vel.z() >> m.linear_vel.x() >> m.linear_vel.y() >> m.linear_vel.z()))
    throw ConfigError("mover needs 12 numbers: center, half_extents, angular_vel, linear_vel");
  return m;
}

}  // namespace

SceneSpec parse_scene_spec(const std::string& path) {
  const KeyValueFile kv = read_key_value(path);
  SceneSpec s;
  for (const auto& [k, v] : kv.entries) {
    if (k == "seed") s.seed = static_cast<uint64_t>(std::stoull(v));
    else if (k == "trajectory") s.trajectory = trajectory_from_string(v);
    else if (k == "n_frames") s.n_frames = parse_int(v, k);
    else if (k == "width") s.width = parse_int(v, k);
    else if (k == "height") s.height = parse_int(v, k);
    else if (k == "lowres_factor") s.lowres_factor = parse_int(v, k);
    else if (k == "focal") s.focal = parse_double(v, k);
    else if (k == "base_depth") s.base_depth = parse_double(v, k);
    else if (k == "depth_amp") s.depth_amp = parse_double(v, k);
    else if (k == "depth_freq") s.depth_freq = parse_double(v, k);
    else if (k == "step") s.step = parse_double(v, k);
    else if (k == "orbit_radius") s.orbit_radius = parse_double(v, k);
    else if (k == "mover") s.movers.push_back(parse_mover(v));
    else if (k == "flow_sigma") s.flow_sigma = parse_double(v, k);
    else if (k == "mono_a_min") s.mono_a_min = parse_double(v, k);
    else if (k == "mono_a_max") s.mono_a_max = parse_double(v, k);
    else if (k == "mono_b_min") s.mono_b_min = parse_double(v, k);
    else if (k == "mono_b_max") s.mono_b_max = parse_double(v, k);
    else if (k == "mono_sigma") s.mono_sigma = parse_double(v, k);
    else if (k == "mover_confidence") s.mover_confidence = parse_double(v, k);
    else if (k == "enforce_flow_range") s.enforce_flow_range = parse_bool(v, k);
    else if (k == "max_gap") s.max_gap = parse_int(v, k);
    else if (k == "full_offsets") s.full_offsets = parse_int_list(v, k);
    else if (k == "full_products") s.full_products = parse_bool(v, k);
    else throw ConfigError("unknown scene key '" + k + "' in " + path);
  }
  if (s.n_frames < 1) throw ConfigError("n_frames must be >= 1");
  return s;
}

void write_scene_spec(const std::string& path, const SceneSpec& s) {
  KeyValueFile kv;
  kv.entries.emplace_back("seed", std::to_string(s.seed));
  kv.entries.emplace_back("trajectory", to_string(s.trajectory));
  kv.entries.emplace_back("n_frames", std::to_string(s.n_frames));
  kv.entries.emplace_back("width", std::to_string(s.width));
  kv.entries.emplace_back("height", std::to_string(s.height));
  kv.entries.emplace_back("lowres_factor", std::to_string(s.lowres_factor));
  kv.entries.emplace_back("focal", format_double(s.focal));
  kv.entries.emplace_back("base_depth", format_double(s.base_depth));
  kv.entries.emplace_back("depth_amp", format_double(s.depth_amp));
  kv.entries.emplace_back("depth_freq", format_double(s.depth_freq));
  kv.entries.emplace_back("step", format_double(s.step));
  kv.entries.emplace_back("orbit_radius", format_double(s.orbit_radius));
  for (const auto& m : s.movers) {
    std::string v;
    for (double x : {m.center.x(), m.center.y(), m.center.z(), m.half_extents.x(),
                     m.half_extents.y(), m.half_extents.z(), m.angular_vel.x(), m.angular_vel.y(),
                     m.angular_vel.z(), m.linear_vel.x(), m.linear_vel.y(), m.linear_vel.z()})
      v += format_double(x) + " ";
    kv.entries.emplace_back("mover", v);
  }
  kv.entries.emplace_back("flow_sigma", format_double(s.flow_sigma));
  kv.entries.emplace_back("mono_a_min", format_double(s.mono_a_min));
  kv.entries.emplace_back("mono_a_max", format_double(s.mono_a_max));
  kv.entries.emplace_back("mono_b_min", format_double(s.mono_b_min));
  kv.entries.emplace_back("mono_b_max", format_double(s.mono_b_max));
  kv.entries.emplace_back("mono_sigma", format_double(s.mono_sigma));
  kv.entries.emplace_back("mover_confidence", format_double(s.mover_confidence));
  kv.entries.emplace_back("enforce_flow_range", s.enforce_flow_range ? "true" : "false");
  kv.entries.emplace_back("max_gap", std::to_string(s.max_gap));
  std::string offsets;
  for (size_t i = 0; i < s.full_offsets.size(); ++i)
    offsets += (i ? "," : "") + std::to_string(s.full_offsets[i]);
  kv.entries.emplace_back("full_offsets", offsets);
  kv.entries.emplace_back("full_products", s.full_products ? "true" : "false");
  write_key_value(path, kv);
}

}  // namespace flowba
