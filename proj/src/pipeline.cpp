#include "flowba/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "flowba/ba_core.hpp"
#include "flowba/errors.hpp"
#include "flowba/frame_graph.hpp"

namespace flowba {

namespace {

double mad(std::vector<double> values) {
  const double m = median(values);
  for (double& v : values) v = std::abs(v - m);
  return median(std::move(values));
}

class StageClock {
 public:
  explicit StageClock(std::map<std::string, double>* timings) : timings_(timings) {}
  void mark(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    if (timings_) (*timings_)[stage] = std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }

 private:
  std::map<std::string, double>* timings_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

MonoAlignment align_mono_depth(const ObservationSource& src, double d_min) {
  const int n = src.n_frames();
  if (n == 0) throw ConfigError("align_mono_depth: empty video");

  std::vector<double> alphas;
  alphas.reserve(n);
  for (int f = 0; f < n; ++f) {
    const DisparityGrid rel = src.mono_rel(f);
    const DisparityGrid abs = src.mono_abs(f);
    if (!rel.values.same_shape(abs.values))
      throw ShapeMismatch("align_mono_depth: mono channels differ in shape");
    std::vector<double> rv, av;
    for (int i = 0; i < rel.values.size(); ++i) {
      if (!rel.valid[i] || !abs.valid[i]) continue;
      rv.push_back(rel.values[i]);
      av.push_back(abs.values[i]);
    }
    if (rv.empty()) throw NoValidPixels("align_mono_depth: no jointly valid mono pixels");
    const double mad_rel = mad(rv);
    if (mad_rel <= 0.0)
      throw DegenerateScale("align_mono_depth: relative disparity has no spread");
    alphas.push_back(mad(std::move(av)) / mad_rel);
  }
  MonoAlignment out;
  out.alpha = median(std::move(alphas));

  std::vector<double> residuals;
  for (int f = 0; f < n; ++f) {
    const DisparityGrid rel = src.mono_rel(f);
    const DisparityGrid abs = src.mono_abs(f);
    for (int i = 0; i < rel.values.size(); ++i)
      if (rel.valid[i] && abs.valid[i])
        residuals.push_back(abs.values[i] - out.alpha * rel.values[i]);
  }
  out.beta = median(std::move(residuals));

  const int factor = src.lowres_factor();
  for (int f = 0; f < n; ++f) {
    const DisparityGrid rel = src.mono_rel(f);
    GridD aligned(rel.values.width, rel.values.height, 0.0);
    for (int i = 0; i < rel.values.size(); ++i)
      if (rel.valid[i]) aligned[i] = std::max(out.alpha * rel.values[i] + out.beta, d_min);
    GridD low;
    MaskU8 low_valid;
    avg_pool(aligned, rel.valid, factor, &low, &low_valid);
    out.prior_low.push_back(std::move(low));
    out.prior_valid_low.push_back(std::move(low_valid));
  }
  return out;
}

RigidTransform interpolate_pose(const RigidTransform& g_a, const RigidTransform& g_b,
                                double alpha) {
  const Vec6 xi = se3_log(relative_pose(g_a, g_b));
  return compose(se3_exp(alpha * xi), g_a);
}

namespace {

class Solver {
 public:
  Solver(const ObservationSource& src, const RunConfig& cfg) : src_(src), cfg_(cfg) {
    n_ = src.n_frames();
    const Intrinsics full = src.intrinsics_full();
    k_low_ = full.scaled(1.0 / src.lowres_factor());
    focal_ = k_low_.fx * cfg.focal_init_scale;
    k_low_.fx = k_low_.fy = focal_;
    pose_.assign(n_, RigidTransform{});
    kf_of_frame_.assign(n_, -1);
  }

  SolveResult run(std::map<std::string, double>* timings) {
    StageClock clock(timings);
    align_ = align_mono_depth(src_, cfg_.d_min);
    normalize_priors();
    clock.mark("align");
    initialize();
    clock.mark("initialize");
    frontend();
    clock.mark("frontend");
    backend_global();
    clock.mark("backend_global");
    register_nonkeyframes();
    clock.mark("register");
    final_all_frames();
    clock.mark("final_ba");
    SolveResult res = finish();
    clock.mark("report");
    return res;
  }

 private:
  // ---- observations ----

  const EdgeObservation& edge_obs(int i, int j) {
    const auto key = std::make_pair(i, j);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    EdgeObservation obs;
    obs.target = src_.flow(i, j);
    const GridD conf = src_.confidence(i, j);
    if (cfg_.use_motion) {
      obs.weight = combine_weights(conf, motion(i));
    } else {
      GridD ones(conf.width, conf.height, 1.0);
      obs.weight = combine_weights(conf, ones);
    }
    return cache_.emplace(key, std::move(obs)).first->second;
  }

  const GridD& motion(int frame) {
    auto it = motion_.find(frame);
    if (it != motion_.end()) return it->second;
    return motion_.emplace(frame, src_.motion(frame)).first->second;
  }

  DisparityGrid prior_grid(int frame) const {
    DisparityGrid d;
    d.values = align_.prior_low[frame];
    d.valid = align_.prior_valid_low[frame];
    d.level = Level::kLow;
    return d;
  }

  DisparityGrid frame_disp(int frame) const {
    return kf_of_frame_[frame] >= 0 ? kf_disp_[kf_of_frame_[frame]] : prior_grid(frame);
  }

  void normalize_priors() {
    std::vector<double> values;
    for (int f = 0; f < n_; ++f)
      for (int i = 0; i < align_.prior_low[f].size(); ++i)
        if (align_.prior_valid_low[f][i]) values.push_back(align_.prior_low[f][i]);
    if (values.empty()) throw NoValidPixels("solve: no valid prior disparities");
    const size_t idx = static_cast<size_t>(0.98 * (values.size() - 1));
    std::nth_element(values.begin(), values.begin() + idx, values.end());
    const double pct = values[idx];
    if (!(pct > 0.0)) throw DegenerateScale("solve: nonpositive disparity percentile");
    disp_scale_ = 2.0 / pct;
    for (GridD& g : align_.prior_low)
      for (int i = 0; i < g.size(); ++i) g[i] *= disp_scale_;
  }

  // ---- problem assembly ----

  struct Sub {
    std::vector<int> frames;                 // frame ids in problem order
    std::vector<uint8_t> fixed;              // per position
    std::vector<std::pair<int, int>> pairs;  // positions, directed
    double w_d = 0.0;
    bool opt_disp = false;
    bool opt_focal = false;
  };

  BAProblem make_problem(const Sub& sub) {
    BAProblem p;
    p.k = k_low_;
    p.set_focal(focal_);
    p.optimize_disparity = sub.opt_disp;
    p.optimize_focal = sub.opt_focal;
    p.w_d = sub.w_d;
    for (size_t a = 0; a < sub.frames.size(); ++a) {
      const int f = sub.frames[a];
      p.poses.push_back(pose_[f]);
      p.disp.push_back(frame_disp(f));
      p.pose_fixed.push_back(sub.fixed[a]);
      p.prior_disp.push_back(align_.prior_low[f]);
      p.prior_valid.push_back(align_.prior_valid_low[f]);
    }
    for (const auto& [a, b] : sub.pairs)
      p.edges.push_back(BAEdge{a, b, edge_obs(sub.frames[a], sub.frames[b])});
    return p;
  }

  void adopt(const Sub& sub, const BAProblem& p) {
    for (size_t a = 0; a < sub.frames.size(); ++a) {
      const int f = sub.frames[a];
      pose_[f] = p.poses[a];
      if (sub.opt_disp && kf_of_frame_[f] >= 0) kf_disp_[kf_of_frame_[f]] = p.disp[a];
    }
    if (sub.opt_focal) set_focal(p.focal);
  }

  void set_focal(double f) {
    focal_ = f;
    k_low_.fx = k_low_.fy = f;
  }

  LMOptions lm_opts(int iters) const {
    LMOptions o;
    o.max_iters = iters;
    o.lambda0 = cfg_.lm_lambda0;
    o.d_min = cfg_.d_min;
    return o;
  }

  // Both directions of (a, b) that the source actually has.
  void add_available(int fa, int fb, int pa, int pb, std::vector<std::pair<int, int>>* pairs) {
    if (src_.has_edge(fa, fb)) pairs->emplace_back(pa, pb);
    if (src_.has_edge(fb, fa)) pairs->emplace_back(pb, pa);
  }

  // Pose-only refinement of frame f against up to two keyframes.
  void refine_against(int f, const std::vector<int>& kfs) {
    Sub sub;
    sub.frames = kfs;
    sub.frames.push_back(f);
    sub.fixed.assign(sub.frames.size(), 1);
    sub.fixed.back() = 0;
    for (size_t a = 0; a < kfs.size(); ++a)
      add_available(kfs[a], f, static_cast<int>(a), static_cast<int>(sub.frames.size()) - 1,
                    &sub.pairs);
    if (sub.pairs.empty()) return;
    BAProblem p = make_problem(sub);
    motion_only_ba(&p, lm_opts(cfg_.lm_iters_frontend));
    adopt(sub, p);
  }

  void add_keyframe(int f) {
    kf_of_frame_[f] = static_cast<int>(keyframes_.size());
    keyframes_.push_back(f);
    kf_disp_.push_back(prior_grid(f));
  }

  double distance_from_kf(int kf, int f) {
    try {
      return mean_flow_distance(pose_[kf], pose_[f], kf_disp_[kf_of_frame_[kf]], k_low_);
    } catch (const NoValidPixels&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  // Keyframe graph over a subset of keyframe positions; pairs in kf-local
  // positions of `members`.
  std::vector<std::pair<int, int>> kf_graph(const std::vector<int>& members) {
    std::vector<RigidTransform> poses;
    std::vector<DisparityGrid> disps;
    for (int m : members) {
      poses.push_back(pose_[keyframes_[m]]);
      disps.push_back(kf_disp_[m]);
    }
    auto has = [&](int a, int b) {
      return src_.has_edge(keyframes_[members[a]], keyframes_[members[b]]);
    };
    return build_edges(poses, disps, k_low_, cfg_.window_radius, cfg_.proximity_px, has);
  }

  void window_ba(const std::vector<int>& members, double w_d, int iters, bool opt_focal,
                 LMTrace* trace_out = nullptr) {
    Sub sub;
    for (int m : members) sub.frames.push_back(keyframes_[m]);
    sub.fixed.assign(sub.frames.size(), 0);
    sub.fixed[0] = 1;
    sub.pairs = kf_graph(members);
    sub.w_d = w_d;
    sub.opt_disp = true;
    sub.opt_focal = opt_focal;
    BAProblem p = make_problem(sub);
    LMTrace trace = lm_solve(&p, lm_opts(iters));
    adopt(sub, p);
    if (trace_out) *trace_out = trace;
  }

  // ---- stages ----

  void initialize() {
    pose_[0] = RigidTransform{};
    add_keyframe(0);
    vel_ = RigidTransform{};
    int f = 1;
    for (; f < n_ && static_cast<int>(keyframes_.size()) < cfg_.n_init; ++f) {
      const int kf = keyframes_.back();
      pose_[f] = compose(vel_, pose_[f - 1]);
      refine_against(f, {kf});
      vel_ = compose(pose_[f], inverse(pose_[f - 1]));
      const bool force = f + 1 < n_ && !src_.has_edge(kf, f + 1);
      if (should_add_keyframe(distance_from_kf(kf, f), cfg_.keyframe_thresh_px) || force)
        add_keyframe(f);
    }
    if (static_cast<int>(keyframes_.size()) < cfg_.n_init)
      throw InsufficientMotion("initialization gathered " + std::to_string(keyframes_.size()) +
                               " keyframes, needs " + std::to_string(cfg_.n_init));
    next_frame_ = f;

    // Joint pose-only pass over the initial keyframe set.
    Sub sub;
    sub.frames = keyframes_;
    sub.fixed.assign(sub.frames.size(), 0);
    sub.fixed[0] = 1;
    std::vector<int> members(keyframes_.size());
    for (size_t i = 0; i < members.size(); ++i) members[i] = static_cast<int>(i);
    sub.pairs = kf_graph(members);
    BAProblem p = make_problem(sub);
    motion_only_ba(&p, lm_opts(cfg_.lm_iters_backend));
    adopt(sub, p);
  }

  void frontend() {
    int consecutive_stalls = 0;
    for (int f = next_frame_; f < n_; ++f) {
      const int kf = keyframes_.back();
      pose_[f] = compose(vel_, pose_[f - 1]);
      refine_against(f, {kf});
      vel_ = compose(pose_[f], inverse(pose_[f - 1]));
      const bool force = f + 1 < n_ && !src_.has_edge(kf, f + 1);
      if (!should_add_keyframe(distance_from_kf(kf, f), cfg_.keyframe_thresh_px) && !force)
        continue;
      add_keyframe(f);
      const int n_kf = static_cast<int>(keyframes_.size());
      const int first = std::max(0, n_kf - cfg_.frontend_window);
      std::vector<int> members;
      for (int m = first; m < n_kf; ++m) members.push_back(m);
      LMTrace trace;
      window_ba(members, cfg_.w_d_frontend, cfg_.lm_iters_frontend, false, &trace);
      consecutive_stalls = trace.no_progress ? consecutive_stalls + 1 : 0;
      if (consecutive_stalls >= 2)
        throw TrackingLost("local refinement stalled twice, last at frame " + std::to_string(f));
    }
  }

  void backend_global() {
    std::vector<int> members(keyframes_.size());
    for (size_t i = 0; i < members.size(); ++i) members[i] = static_cast<int>(i);

    Sub sub;
    sub.frames = keyframes_;
    sub.fixed.assign(sub.frames.size(), 0);
    sub.fixed[0] = 1;
    sub.pairs = kf_graph(members);
    sub.opt_disp = true;
    BAProblem probe = make_problem(sub);
    const ObservabilityReport gate =
        assess_observability(probe, cfg_.gamma_d, cfg_.beta_d, cfg_.tau_f, cfg_.sigma_eps);
    gate_ = gate;
    w_d_gate_ = gate.w_d;
    focal_on_ = cfg_.opt_focal && gate.focal_enabled;

    window_ba(members, w_d_gate_, cfg_.lm_iters_backend, focal_on_);
  }

  void register_nonkeyframes() {
    for (int f = 1; f < n_; ++f) {
      if (kf_of_frame_[f] >= 0) continue;
      int below = -1, above = -1;
      for (int kf : keyframes_) {
        if (kf < f) below = kf;
        if (kf > f) {
          above = kf;
          break;
        }
      }
      int a = below, b = above;
      if (b < 0) {  // past the last keyframe: extrapolate from the last two
        if (keyframes_.size() < 2)
          throw NoNeighborKeyframe("frame " + std::to_string(f) +
                                   " has no keyframe pair to register against");
        b = a;
        a = keyframes_[kf_of_frame_[b] - 1];
      }
      const double alpha = static_cast<double>(f - a) / static_cast<double>(b - a);
      pose_[f] = interpolate_pose(pose_[a], pose_[b], alpha);
      refine_against(f, {a, b});
    }
  }

  void final_all_frames() {
    Sub sub;
    sub.frames.resize(n_);
    for (int f = 0; f < n_; ++f) sub.frames[f] = f;
    sub.fixed.assign(n_, 0);
    sub.fixed[0] = 1;
    std::set<std::pair<int, int>> pairs;
    for (int i = 0; i < n_; ++i) {
      for (int j = i + 1; j <= std::min(n_ - 1, i + cfg_.global_radius); ++j) {
        if (src_.has_edge(i, j)) pairs.emplace(i, j);
        if (src_.has_edge(j, i)) pairs.emplace(j, i);
      }
    }
    std::vector<int> members(keyframes_.size());
    for (size_t i = 0; i < members.size(); ++i) members[i] = static_cast<int>(i);
    for (const auto& [ma, mb] : kf_graph(members)) pairs.emplace(keyframes_[ma], keyframes_[mb]);
    sub.pairs.assign(pairs.begin(), pairs.end());
    sub.w_d = w_d_gate_;
    sub.opt_disp = true;
    sub.opt_focal = focal_on_;
    BAProblem p = make_problem(sub);
    lm_solve(&p, lm_opts(cfg_.lm_iters_backend));
    adopt(sub, p);
  }

  SolveResult finish() {
    SolveResult res;
    res.poses = pose_;
    res.keyframes = keyframes_;
    res.kf_disp = kf_disp_;
    res.k_low = k_low_;
    res.focal_low = focal_;
    res.align_alpha = align_.alpha;
    res.align_beta = align_.beta;
    res.disp_scale = disp_scale_;
    res.gate_median_hd = gate_.median_hd;
    res.gate_w_d = gate_.w_d;
    res.gate_focal_h = gate_.focal_h;
    res.focal_used = focal_on_;

    Sub sub;
    sub.frames = keyframes_;
    sub.fixed.assign(sub.frames.size(), 0);
    sub.fixed[0] = 1;
    std::vector<int> members(keyframes_.size());
    for (size_t i = 0; i < members.size(); ++i) members[i] = static_cast<int>(i);
    sub.pairs = kf_graph(members);
    sub.opt_disp = true;
    BAProblem p = make_problem(sub);
    res.report = assess_observability(p, cfg_.gamma_d, cfg_.beta_d, cfg_.tau_f, cfg_.sigma_eps);
    return res;
  }

  const ObservationSource& src_;
  const RunConfig& cfg_;
  int n_ = 0;
  Intrinsics k_low_;
  double focal_ = 0.0;
  MonoAlignment align_;
  double disp_scale_ = 1.0;
  std::vector<RigidTransform> pose_;
  std::vector<int> kf_of_frame_;
  std::vector<int> keyframes_;
  std::vector<DisparityGrid> kf_disp_;
  RigidTransform vel_;
  int next_frame_ = 1;
  ObservabilityReport gate_;
  double w_d_gate_ = 0.0;
  bool focal_on_ = false;
  std::map<std::pair<int, int>, EdgeObservation> cache_;
  std::map<int, GridD> motion_;
};

}  // namespace

SolveResult solve_video(const ObservationSource& src, const RunConfig& cfg,
                        std::map<std::string, double>* timings) {
  const auto start = std::chrono::steady_clock::now();
  Solver solver(src, cfg);
  SolveResult res = solver.run(timings);
  if (timings)
    (*timings)["total"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

void write_solve_outputs(const std::string& out_dir, const SolveResult& res,
                         const RunConfig& cfg, const ObservationSource& src,
                         const std::map<std::string, double>& timings) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/disp");
  fs::create_directories(out_dir + "/sigma");

  std::vector<TrajectoryEntry> entries;
  for (size_t f = 0; f < res.poses.size(); ++f)
    entries.push_back(to_entry(static_cast<int>(f), res.poses[f]));
  write_trajectory(out_dir + "/trajectory.txt", entries);

  for (size_t i = 0; i < res.keyframes.size(); ++i) {
    const std::string name = frame_name(res.keyframes[i]) + ".pfm";
    write_disparity_pfm(out_dir + "/disp/" + name, res.kf_disp[i]);
    write_pfm(out_dir + "/sigma/" + name, res.report.disp_sigma2[i]);
  }

  const Intrinsics full = src.intrinsics_full();
  Intrinsics solved = full;
  solved.fx = solved.fy = res.focal_low * src.lowres_factor();
  write_intrinsics(out_dir + "/intrinsics_solved.txt", solved);

  KeyValueFile report;
  report.set("n_keyframes", std::to_string(res.keyframes.size()));
  std::string kf_list;
  for (size_t i = 0; i < res.keyframes.size(); ++i) {
    if (i) kf_list += ",";
    kf_list += std::to_string(res.keyframes[i]);
  }
  report.set("keyframes", kf_list);
  report.set("gate_median_hd", format_double(res.gate_median_hd));
  report.set("gate_w_d", format_double(res.gate_w_d));
  report.set("gate_focal_h", format_double(res.gate_focal_h));
  report.set("focal_enabled", res.focal_used ? "true" : "false");
  report.set("final_median_hd", format_double(res.report.median_hd));
  report.set("final_w_d", format_double(res.report.w_d));
  report.set("final_focal_h", format_double(res.report.focal_h));
  report.set("focal_low_px", format_double(res.focal_low));
  report.set("focal_full_px", format_double(res.focal_low * src.lowres_factor()));
  report.set("f_norm",
             format_double(normalize_focal(solved.fx, full.width, full.height)));
  report.set("tau_f", format_double(cfg.tau_f));
  write_key_value(out_dir + "/report.txt", report);

  KeyValueFile manifest;
  for (const auto& [k, v] : dump_run_config(cfg)) manifest.set(k, v);
  manifest.set("n_frames", std::to_string(res.poses.size()));
  manifest.set("lowres_factor", std::to_string(src.lowres_factor()));
  manifest.set("align_alpha", format_double(res.align_alpha));
  manifest.set("align_beta", format_double(res.align_beta));
  manifest.set("disp_scale", format_double(res.disp_scale));
  write_key_value(out_dir + "/manifest.txt", manifest);

  KeyValueFile times;
  for (const auto& [stage, seconds] : timings) times.set(stage, format_double(seconds));
  write_key_value(out_dir + "/timings.txt", times);
}

}  // namespace flowba
