#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowba/config.hpp"
#include "flowba/cvd.hpp"
#include "flowba/dataset.hpp"
#include "flowba/errors.hpp"
#include "flowba/io.hpp"
#include "flowba/metrics.hpp"
#include "flowba/pipeline.hpp"
#include "flowba/synth.hpp"

namespace {

using namespace flowba;

constexpr int kExitInfeasible = 2;    // requested scene/configuration cannot exist
constexpr int kExitTracking = 3;      // too little motion or tracking lost
constexpr int kExitNonFinite = 4;     // optimization diverged

void apply_overrides(RunConfig* cfg, const std::string& config_path,
                     const std::vector<std::string>& sets, int threads, long long seed) {
  if (!config_path.empty()) load_run_config(config_path, cfg);
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + kv);
    set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (threads > 0) cfg->threads = threads;
  if (seed >= 0) cfg->seed = static_cast<uint64_t>(seed);
}

void write_diagnostic(const std::string& out_dir, const std::string& message) {
  if (out_dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::ofstream f(out_dir + "/diagnostic.txt");
  f << message << "\n";
}

// A rerun into the same directory must not keep a failure report from an
// earlier attempt alive.
void clear_diagnostic(const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::remove(out_dir + "/diagnostic.txt", ec);
}

int run_synth(const std::string& spec_path, const std::string& out, long long seed) {
  SceneSpec spec = parse_scene_spec(spec_path);
  if (seed >= 0) spec.seed = static_cast<uint64_t>(seed);
  write_scene_dataset(spec, out);
  std::cout << "wrote dataset: " << out << " (" << spec.n_frames << " frames, "
            << to_string(spec.trajectory) << ")\n";
  return 0;
}

int run_solve(const std::string& data, const std::string& out, const RunConfig& cfg) {
  clear_diagnostic(out);
  const Dataset ds = Dataset::open(data);
  const DatasetSource src(ds);
  std::map<std::string, double> timings;
  const SolveResult res = solve_video(src, cfg, &timings);
  write_solve_outputs(out, res, cfg, src, timings);
  std::cout << "solved " << res.poses.size() << " frames, " << res.keyframes.size()
            << " keyframes, focal " << res.focal_low * src.lowres_factor()
            << " px (focal optimization " << (res.focal_used ? "on" : "off") << ")\n";
  return 0;
}

int run_cvd(const std::string& data, const std::string& solve_dir, const std::string& out,
            const RunConfig& cfg) {
  clear_diagnostic(out);
  const Dataset ds = Dataset::open(data);
  const CvdInputs inputs = load_cvd_inputs(ds, solve_dir, cfg);
  std::filesystem::create_directories(out);
  std::filesystem::create_directories(out + "/disp");
  std::filesystem::create_directories(out + "/unc");

  std::vector<CvdTraceRow> trace;
  DepthState st;
  try {
    st = refine_depth(inputs, cfg, &trace);
  } catch (const NonFiniteLoss&) {
    write_loss_trace(out + "/loss_trace.csv", trace);
    throw;
  }
  write_loss_trace(out + "/loss_trace.csv", trace);

  const int n = static_cast<int>(st.disp.size());
  for (int f = 0; f < n; ++f) {
    DisparityGrid d(st.disp[f].width, st.disp[f].height, Level::kFull);
    d.values = st.disp[f];
    d.valid = st.valid[f];
    write_disparity_pfm(out + "/disp/" + frame_name(f) + ".pfm", d);
    write_pfm(out + "/unc/" + frame_name(f) + ".pfm", st.unc[f]);
  }

  KeyValueFile manifest;
  for (const auto& [k, v] : dump_run_config(cfg)) manifest.set(k, v);
  manifest.set("n_frames", std::to_string(n));
  manifest.set("n_pairs", std::to_string(inputs.flows.size()));
  write_key_value(out + "/manifest.txt", manifest);
  std::cout << "refined " << n << " frames over " << inputs.flows.size() << " pairs, "
            << trace.size() << " steps\n";
  return 0;
}

int run_eval_traj(const std::string& est_path, const std::string& gt_path,
                  const std::string& out) {
  const auto est = read_trajectory(est_path);
  const auto gt = read_trajectory(gt_path);
  std::map<int, RigidTransform> gt_by_index;
  for (const auto& e : gt) gt_by_index[e.index] = e.cam_to_world;
  std::vector<RigidTransform> est_poses, gt_poses;
  for (const auto& e : est) {
    const auto it = gt_by_index.find(e.index);
    if (it == gt_by_index.end()) continue;
    est_poses.push_back(e.cam_to_world);
    gt_poses.push_back(it->second);
  }
  const TrajectoryMetrics m = ate_rte_rre(est_poses, gt_poses);
  KeyValueFile kv;
  kv.set("n_frames", std::to_string(est_poses.size()));
  kv.set("ate", format_double(m.ate));
  kv.set("rte", format_double(m.rte));
  kv.set("rre_deg", format_double(m.rre_deg));
  for (const auto& [k, v] : kv.entries) std::cout << k << " = " << v << "\n";
  if (!out.empty()) write_key_value(out, kv);
  return 0;
}

int run_eval_depth(const std::string& est_dir, const std::string& data, bool no_fit,
                   const std::string& out) {
  const Dataset ds = Dataset::open(data);
  if (!ds.meta().has_gt_depth) throw IoError("dataset has no ground-truth depth");
  std::vector<DisparityGrid> est;
  std::vector<GridD> gt;
  for (int f = 0; f < ds.meta().n_frames; ++f) {
    const std::string path = est_dir + "/" + frame_name(f) + ".pfm";
    if (!std::filesystem::exists(path)) continue;
    est.push_back(read_disparity_pfm(path, Level::kFull));
    gt.push_back(ds.depth_gt(f));
  }
  if (est.empty()) throw IoError("no estimate frames found under " + est_dir);
  const DepthMetrics m = depth_metrics(est, gt, !no_fit);
  KeyValueFile kv;
  kv.set("n_frames", std::to_string(est.size()));
  kv.set("n_pixels", std::to_string(m.n_pixels));
  kv.set("abs_rel", format_double(m.abs_rel));
  kv.set("log_rmse", format_double(m.log_rmse));
  kv.set("delta_125", format_double(m.delta_125));
  for (const auto& [k, v] : kv.entries) std::cout << k << " = " << v << "\n";
  if (!out.empty()) write_key_value(out, kv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video pose, focal and depth solver over dense flow"};
  app.require_subcommand(1);

  std::string spec_path, data, out, solve_dir, config_path, est, gt;
  std::vector<std::string> sets;
  long long seed = -1;
  int threads = 0;
  bool no_fit = false;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--spec", spec_path, "scene spec file")->required();
  synth->add_option("--out", out, "output dataset directory")->required();
  synth->add_option("--seed", seed, "override the spec seed");

  CLI::App* solve = app.add_subcommand("solve", "solve poses, focal and keyframe depth");
  solve->add_option("--data", data, "dataset directory")->required();
  solve->add_option("--out", out, "output directory")->required();
  solve->add_option("--config", config_path, "run config file");
  solve->add_option("--set", sets, "override one config key (key=value)");
  solve->add_option("--seed", seed, "override the config seed");
  solve->add_option("--threads", threads, "worker threads");

  CLI::App* cvd = app.add_subcommand("cvd", "refine full-resolution video depth");
  cvd->add_option("--data", data, "dataset directory")->required();
  cvd->add_option("--solve", solve_dir, "solve output directory")->required();
  cvd->add_option("--out", out, "output directory")->required();
  cvd->add_option("--config", config_path, "run config file");
  cvd->add_option("--set", sets, "override one config key (key=value)");
  cvd->add_option("--seed", seed, "override the config seed");
  cvd->add_option("--threads", threads, "worker threads");

  CLI::App* etraj = app.add_subcommand("eval-traj", "trajectory error vs ground truth");
  etraj->add_option("--est", est, "estimated trajectory file")->required();
  etraj->add_option("--gt", gt, "ground-truth trajectory file")->required();
  etraj->add_option("--out", out, "also write metrics to this file");

  CLI::App* edepth = app.add_subcommand("eval-depth", "depth error vs ground truth");
  edepth->add_option("--est", est, "directory of estimated disparity PFMs")->required();
  edepth->add_option("--data", data, "dataset directory with ground-truth depth")->required();
  edepth->add_flag("--no-fit", no_fit, "skip the global scale/shift fit");
  edepth->add_option("--out", out, "also write metrics to this file");

  CLI11_PARSE(app, argc, argv);

  const std::string diag_dir =
      (solve->parsed() || cvd->parsed()) ? out : std::string{};
  try {
    if (synth->parsed()) return run_synth(spec_path, out, seed);
    if (solve->parsed() || cvd->parsed()) {
      RunConfig cfg;
      apply_overrides(&cfg, config_path, sets, threads, seed);
      return solve->parsed() ? run_solve(data, out, cfg) : run_cvd(data, solve_dir, out, cfg);
    }
    if (etraj->parsed()) return run_eval_traj(est, gt, out);
    return run_eval_depth(est, data, no_fit, out);
  } catch (const SpecInfeasible& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    write_diagnostic(diag_dir, std::string("infeasible: ") + e.what());
    return kExitInfeasible;
  } catch (const InsufficientMotion& e) {
    std::cerr << "tracking: " << e.what() << "\n";
    write_diagnostic(diag_dir, std::string("tracking: ") + e.what());
    return kExitTracking;
  } catch (const TrackingLost& e) {
    std::cerr << "tracking: " << e.what() << "\n";
    write_diagnostic(diag_dir, std::string("tracking: ") + e.what());
    return kExitTracking;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    write_diagnostic(diag_dir, std::string("diverged: ") + e.what());
    return kExitNonFinite;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    write_diagnostic(diag_dir, std::string("error: ") + e.what());
    return 1;
  }
}
