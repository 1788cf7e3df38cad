#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace flowba {

// Every tunable of the solver and the depth refiner, with the defaults the
// tools run under. Key names in config files match the field names.
struct RunConfig {
  uint64_t seed = 1;  // recorded in output manifests; the solve itself draws nothing
  int threads = 1;

  bool use_motion = true;  // weight flow residuals by the probability-of-static map
  bool opt_focal = true;   // allow focal optimization when observability permits
  double focal_init_scale = 1.0;  // deliberate miscalibration of the initial focal

  double keyframe_thresh_px = 16.0;  // mean predicted flow that opens a new keyframe
  double proximity_px = 24.0;        // extra graph edges below this predicted motion
  int window_radius = 3;             // keyframe-order neighborhood for graph edges
  int n_init = 8;                    // keyframes accumulated before tracking starts
  int frontend_window = 8;           // active keyframes in the sliding window
  int global_radius = 2;             // frame-index neighborhood in the final pass

  double w_d_frontend = 0.05;  // disparity anchor weight during tracking
  double gamma_d = 1e-4;       // anchor weight ceiling for the global passes
  double beta_d = 0.05;        // decay of the anchor weight with disparity information
  double tau_f = 50.0;         // focal information required to unlock focal
  double sigma_eps = 1e-8;     // variance regularizer, sigma^2 = 1/(h + eps)
  double d_min = 1e-4;         // disparity floor

  int lm_iters_frontend = 12;
  int lm_iters_backend = 40;
  double lm_lambda0 = 1e-4;

  double cvd_w_flow = 1.0;
  double cvd_w_temp = 0.2;
  double cvd_w_prior = 1.0;
  double cvd_w_grad = 1.0;    // inside the prior term
  double cvd_w_normal = 4.0;  // inside the prior term
  double cvd_beta_grad = 5.0;
  int cvd_warmup_steps = 100;
  int cvd_main_steps = 400;
  double cvd_lr_warmup = 1e-2;
  double cvd_lr_disp = 5e-3;
  double cvd_lr_unc = 1e-2;
  double cvd_m_floor = 1e-3;
  double cvd_m_ceil = 1e3;
  std::vector<int> cvd_pair_offsets = {1, 2, 4, 8, 15};
};

// Applies one key. Unknown keys throw ConfigError; values are parsed strictly.
void set_config_key(RunConfig* cfg, const std::string& key, const std::string& value);

// Applies key=value lines from path on top of *cfg.
void load_run_config(const std::string& path, RunConfig* cfg);

// The resolved configuration as ordered key/value pairs, ready for a manifest.
std::vector<std::pair<std::string, std::string>> dump_run_config(const RunConfig& cfg);

}  // namespace flowba
