#include "flowba/config.hpp"

#include <sstream>

#include "flowba/errors.hpp"
#include "flowba/io.hpp"

namespace flowba {

namespace {

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    out.push_back(parse_int(item, what));
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

void set_config_key(RunConfig* cfg, const std::string& key, const std::string& value) {
  {
    if (key == "seed")
      cfg->seed = static_cast<uint64_t>(std::stoull(value));
    else if (key == "threads")
      cfg->threads = parse_int(value, key);
    else if (key == "use_motion")
      cfg->use_motion = parse_bool(value, key);
    else if (key == "opt_focal")
      cfg->opt_focal = parse_bool(value, key);
    else if (key == "focal_init_scale")
      cfg->focal_init_scale = parse_double(value, key);
    else if (key == "keyframe_thresh_px")
      cfg->keyframe_thresh_px = parse_double(value, key);
    else if (key == "proximity_px")
      cfg->proximity_px = parse_double(value, key);
    else if (key == "window_radius")
      cfg->window_radius = parse_int(value, key);
    else if (key == "n_init")
      cfg->n_init = parse_int(value, key);
    else if (key == "frontend_window")
      cfg->frontend_window = parse_int(value, key);
    else if (key == "global_radius")
      cfg->global_radius = parse_int(value, key);
    else if (key == "w_d_frontend")
      cfg->w_d_frontend = parse_double(value, key);
    else if (key == "gamma_d")
      cfg->gamma_d = parse_double(value, key);
    else if (key == "beta_d")
      cfg->beta_d = parse_double(value, key);
    else if (key == "tau_f")
      cfg->tau_f = parse_double(value, key);
    else if (key == "sigma_eps")
      cfg->sigma_eps = parse_double(value, key);
    else if (key == "d_min")
      cfg->d_min = parse_double(value, key);
    else if (key == "lm_iters_frontend")
      cfg->lm_iters_frontend = parse_int(value, key);
    else if (key == "lm_iters_backend")
      cfg->lm_iters_backend = parse_int(value, key);
    else if (key == "lm_lambda0")
      cfg->lm_lambda0 = parse_double(value, key);
    else if (key == "cvd_w_flow")
      cfg->cvd_w_flow = parse_double(value, key);
    else if (key == "cvd_w_temp")
      cfg->cvd_w_temp = parse_double(value, key);
    else if (key == "cvd_w_prior")
      cfg->cvd_w_prior = parse_double(value, key);
    else if (key == "cvd_w_grad")
      cfg->cvd_w_grad = parse_double(value, key);
    else if (key == "cvd_w_normal")
      cfg->cvd_w_normal = parse_double(value, key);
    else if (key == "cvd_beta_grad")
      cfg->cvd_beta_grad = parse_double(value, key);
    else if (key == "cvd_warmup_steps")
      cfg->cvd_warmup_steps = parse_int(value, key);
    else if (key == "cvd_main_steps")
      cfg->cvd_main_steps = parse_int(value, key);
    else if (key == "cvd_lr_warmup")
      cfg->cvd_lr_warmup = parse_double(value, key);
    else if (key == "cvd_lr_disp")
      cfg->cvd_lr_disp = parse_double(value, key);
    else if (key == "cvd_lr_unc")
      cfg->cvd_lr_unc = parse_double(value, key);
    else if (key == "cvd_m_floor")
      cfg->cvd_m_floor = parse_double(value, key);
    else if (key == "cvd_m_ceil")
      cfg->cvd_m_ceil = parse_double(value, key);
    else if (key == "cvd_pair_offsets")
      cfg->cvd_pair_offsets = parse_int_list(value, key);
    else
      throw ConfigError("unknown config key: " + key);
  }
}

void load_run_config(const std::string& path, RunConfig* cfg) {
  const KeyValueFile kv = read_key_value(path);
  for (const auto& [key, value] : kv.entries) set_config_key(cfg, key, value);
}

std::vector<std::pair<std::string, std::string>> dump_run_config(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  auto d = [&](const std::string& k, double v) { out.emplace_back(k, format_double(v)); };
  auto i = [&](const std::string& k, long long v) { out.emplace_back(k, std::to_string(v)); };
  auto b = [&](const std::string& k, bool v) { out.emplace_back(k, v ? "true" : "false"); };
  i("seed", static_cast<long long>(cfg.seed));
  i("threads", cfg.threads);
  b("use_motion", cfg.use_motion);
  b("opt_focal", cfg.opt_focal);
  d("focal_init_scale", cfg.focal_init_scale);
  d("keyframe_thresh_px", cfg.keyframe_thresh_px);
  d("proximity_px", cfg.proximity_px);
  i("window_radius", cfg.window_radius);
  i("n_init", cfg.n_init);
  i("frontend_window", cfg.frontend_window);
  i("global_radius", cfg.global_radius);
  d("w_d_frontend", cfg.w_d_frontend);
  d("gamma_d", cfg.gamma_d);
  d("beta_d", cfg.beta_d);
  d("tau_f", cfg.tau_f);
  d("sigma_eps", cfg.sigma_eps);
  d("d_min", cfg.d_min);
  i("lm_iters_frontend", cfg.lm_iters_frontend);
  i("lm_iters_backend", cfg.lm_iters_backend);
  d("lm_lambda0", cfg.lm_lambda0);
  d("cvd_w_flow", cfg.cvd_w_flow);
  d("cvd_w_temp", cfg.cvd_w_temp);
  d("cvd_w_prior", cfg.cvd_w_prior);
  d("cvd_w_grad", cfg.cvd_w_grad);
  d("cvd_w_normal", cfg.cvd_w_normal);
  d("cvd_beta_grad", cfg.cvd_beta_grad);
  i("cvd_warmup_steps", cfg.cvd_warmup_steps);
  i("cvd_main_steps", cfg.cvd_main_steps);
  d("cvd_lr_warmup", cfg.cvd_lr_warmup);
  d("cvd_lr_disp", cfg.cvd_lr_disp);
  d("cvd_lr_unc", cfg.cvd_lr_unc);
  d("cvd_m_floor", cfg.cvd_m_floor);
  d("cvd_m_ceil", cfg.cvd_m_ceil);
  out.emplace_back("cvd_pair_offsets", format_int_list(cfg.cvd_pair_offsets));
  return out;
}

}  // namespace flowba
