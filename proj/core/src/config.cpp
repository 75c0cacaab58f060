#include "svf/config.hpp"

#include <vector>

namespace svf {

namespace {

using nlohmann::json;

double want_number(const json& v, const std::string& key) {
  if (!v.is_number()) {
    throw ConfigError("config key '" + key + "' must be a number");
  }
  return v.get<double>();
}

int want_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) {
    throw ConfigError("config key '" + key + "' must be an integer");
  }
  return v.get<int>();
}

bool want_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) {
    throw ConfigError("config key '" + key + "' must be a boolean");
  }
  return v.get<bool>();
}

std::string want_string(const json& v, const std::string& key) {
  if (!v.is_string()) {
    throw ConfigError("config key '" + key + "' must be a string");
  }
  return v.get<std::string>();
}

std::vector<int> want_int_list(const json& v, const std::string& key) {
  if (!v.is_array() || v.empty()) {
    throw ConfigError("config key '" + key + "' must be a non-empty array of integers");
  }
  std::vector<int> out;
  for (const auto& e : v) {
    out.push_back(want_int(e, key));
  }
  return out;
}

void require_object(const json& j, const char* what) {
  if (!j.is_object()) {
    throw ConfigError(std::string(what) + " config must be a JSON object");
  }
}

EikonalMode parse_eikonal_mode(const std::string& s) {
  if (s == "uniform") return EikonalMode::kUniform;
  if (s == "distance-adjusted") return EikonalMode::kDistanceAdjusted;
  throw ConfigError("unknown eikonal mode '" + s +
                    "' (expected 'uniform' or 'distance-adjusted')");
}

RenderMode parse_render_mode(const std::string& s) {
  if (s == "proposal") return RenderMode::kVolumetricProposal;
  if (s == "occupancy") return RenderMode::kVolumetricOccupancy;
  if (s == "dense") return RenderMode::kVolumetricDense;
  if (s == "hybrid") return RenderMode::kHybrid;
  throw ConfigError("unknown render mode '" + s +
                    "' (expected 'proposal', 'occupancy', 'dense' or 'hybrid')");
}

} // namespace

std::string eikonal_mode_name(EikonalMode mode) {
  return mode == EikonalMode::kUniform ? "uniform" : "distance-adjusted";
}

std::string render_mode_name(RenderMode mode) {
  switch (mode) {
    case RenderMode::kVolumetricProposal: return "proposal";
    case RenderMode::kVolumetricOccupancy: return "occupancy";
    case RenderMode::kVolumetricDense: return "dense";
    case RenderMode::kHybrid: return "hybrid";
  }
  return "proposal";
}

TrainConfig parse_train_config(const nlohmann::json& j) {
  require_object(j, "train");
  TrainConfig cfg;
  for (const auto& [key, v] : j.items()) {
    if (key == "iters") cfg.iters = want_int(v, key);
    else if (key == "rays_per_batch") cfg.rays_per_batch = want_int(v, key);
    else if (key == "lr") cfg.lr = want_number(v, key);
    else if (key == "lambda_eik") cfg.lambda_eik = want_number(v, key);
    else if (key == "beta_increment") cfg.beta_increment = want_number(v, key);
    else if (key == "gamma_bar") cfg.gamma_bar = want_number(v, key);
    else if (key == "window") cfg.window = want_int(v, key);
    else if (key == "occ_threshold") cfg.occ_threshold = want_number(v, key);
    else if (key == "distill_iters") cfg.distill_iters = want_int(v, key);
    else if (key == "eik_mode") cfg.eik_mode = parse_eikonal_mode(want_string(v, key));
    else if (key == "n_coarse") cfg.n_coarse = want_int(v, key);
    else if (key == "n_fine") cfg.n_fine = want_int(v, key);
    else if (key == "eik_samples_per_ray") cfg.eik_samples_per_ray = want_int(v, key);
    else if (key == "stage2_step_m") cfg.stage2_step_m = want_number(v, key);
    else if (key == "stage2_max_samples") cfg.stage2_max_samples = want_int(v, key);
    else if (key == "bake_n_coarse") cfg.bake_n_coarse = want_int(v, key);
    else if (key == "bake_n_fine") cfg.bake_n_fine = want_int(v, key);
    else if (key == "interlevel_eps") cfg.interlevel_eps = want_number(v, key);
    else if (key == "log_every") cfg.log_every = want_int(v, key);
    else throw ConfigError("unknown train config key '" + key + "'");
  }
  if (cfg.iters < 0 || cfg.rays_per_batch <= 0 || cfg.window <= 0) {
    throw ConfigError("train config needs iters >= 0, rays_per_batch > 0, window > 0");
  }
  if (cfg.n_coarse <= 0 || cfg.n_fine < 0) {
    throw ConfigError("train config needs n_coarse > 0 and n_fine >= 0");
  }
  return cfg;
}

ModelConfig parse_model_config(const nlohmann::json& j) {
  require_object(j, "model");
  ModelConfig cfg;
  for (const auto& [key, v] : j.items()) {
    if (key == "sdf_grid_res") cfg.sdf_grid_res = want_int_list(v, key);
    else if (key == "sdf_plane_res") cfg.sdf_plane_res = want_int_list(v, key);
    else if (key == "color_grid_res") cfg.color_grid_res = want_int_list(v, key);
    else if (key == "color_plane_res") cfg.color_plane_res = want_int_list(v, key);
    else if (key == "sdf_width") cfg.sdf_width = want_int(v, key);
    else if (key == "sdf_hidden") cfg.sdf_hidden = want_int(v, key);
    else if (key == "sdf_student_width") cfg.sdf_student_width = want_int(v, key);
    else if (key == "color_width") cfg.color_width = want_int(v, key);
    else if (key == "color_hidden") cfg.color_hidden = want_int(v, key);
    else if (key == "proposal_grid_res") cfg.proposal_grid_res = want_int(v, key);
    else if (key == "proposal_mlp_width") cfg.proposal_mlp_width = want_int(v, key);
    else if (key == "surfaceness_res") cfg.surfaceness_res = want_int(v, key);
    else if (key == "beta_init") cfg.beta_init = want_number(v, key);
    else if (key == "feature_init_scale") cfg.feature_init_scale = want_number(v, key);
    else if (key == "fd_epsilon") cfg.fd_epsilon = want_number(v, key);
    else if (key == "direct_density") cfg.direct_density = want_bool(v, key);
    else if (key == "sphere_init") cfg.sphere_init = want_bool(v, key);
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(want_int(v, key));
    else throw ConfigError("unknown model config key '" + key + "'");
  }
  if (cfg.color_width != 64) {
    throw ConfigError("color_width is pinned to 64 (students provide 32 and 16)");
  }
  if (cfg.beta_init <= 0.0) {
    throw ConfigError("beta_init must be positive");
  }
  return cfg;
}

RenderConfig parse_render_config(const nlohmann::json& j) {
  require_object(j, "render");
  RenderConfig cfg;
  for (const auto& [key, v] : j.items()) {
    if (key == "mode") cfg.mode = parse_render_mode(want_string(v, key));
    else if (key == "n_coarse") cfg.n_coarse = want_int(v, key);
    else if (key == "n_fine") cfg.n_fine = want_int(v, key);
    else if (key == "restrict_to_occupancy") cfg.restrict_to_occupancy = want_bool(v, key);
    else if (key == "march_step_m") cfg.march_step_m = want_number(v, key);
    else if (key == "dense_step_m") cfg.dense_step_m = want_number(v, key);
    else if (key == "hit_epsilon") cfg.trace.hit_epsilon = want_number(v, key);
    else if (key == "step_scale") cfg.trace.step_scale = want_number(v, key);
    else if (key == "beta_gate") cfg.trace.beta_gate = want_number(v, key);
    else if (key == "max_steps") cfg.trace.max_steps = want_int(v, key);
    else if (key == "fallback_step_m") cfg.trace.fallback_step_m = want_number(v, key);
    else if (key == "post_hit_samples") cfg.post_hit_samples = want_int(v, key);
    else if (key == "post_hit_spacing_m") cfg.post_hit_spacing_m = want_number(v, key);
    else if (key == "stop_optical_depth") cfg.stop_optical_depth = want_number(v, key);
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(want_int(v, key));
    else throw ConfigError("unknown render config key '" + key + "'");
  }
  return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return json{{"iters", cfg.iters},
              {"rays_per_batch", cfg.rays_per_batch},
              {"lr", cfg.lr},
              {"lambda_eik", cfg.lambda_eik},
              {"beta_increment", cfg.beta_increment},
              {"gamma_bar", cfg.gamma_bar},
              {"window", cfg.window},
              {"occ_threshold", cfg.occ_threshold},
              {"distill_iters", cfg.distill_iters},
              {"eik_mode", eikonal_mode_name(cfg.eik_mode)},
              {"n_coarse", cfg.n_coarse},
              {"n_fine", cfg.n_fine},
              {"eik_samples_per_ray", cfg.eik_samples_per_ray},
              {"stage2_step_m", cfg.stage2_step_m},
              {"stage2_max_samples", cfg.stage2_max_samples},
              {"bake_n_coarse", cfg.bake_n_coarse},
              {"bake_n_fine", cfg.bake_n_fine},
              {"interlevel_eps", cfg.interlevel_eps},
              {"log_every", cfg.log_every}};
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return json{{"sdf_grid_res", cfg.sdf_grid_res},
              {"sdf_plane_res", cfg.sdf_plane_res},
              {"color_grid_res", cfg.color_grid_res},
              {"color_plane_res", cfg.color_plane_res},
              {"sdf_width", cfg.sdf_width},
              {"sdf_hidden", cfg.sdf_hidden},
              {"sdf_student_width", cfg.sdf_student_width},
              {"color_width", cfg.color_width},
              {"color_hidden", cfg.color_hidden},
              {"proposal_grid_res", cfg.proposal_grid_res},
              {"proposal_mlp_width", cfg.proposal_mlp_width},
              {"surfaceness_res", cfg.surfaceness_res},
              {"beta_init", cfg.beta_init},
              {"feature_init_scale", cfg.feature_init_scale},
              {"fd_epsilon", cfg.fd_epsilon},
              {"direct_density", cfg.direct_density},
              {"sphere_init", cfg.sphere_init},
              {"seed", cfg.seed}};
}

nlohmann::json render_config_to_json(const RenderConfig& cfg) {
  return json{{"mode", render_mode_name(cfg.mode)},
              {"n_coarse", cfg.n_coarse},
              {"n_fine", cfg.n_fine},
              {"restrict_to_occupancy", cfg.restrict_to_occupancy},
              {"march_step_m", cfg.march_step_m},
              {"dense_step_m", cfg.dense_step_m},
              {"hit_epsilon", cfg.trace.hit_epsilon},
              {"step_scale", cfg.trace.step_scale},
              {"beta_gate", cfg.trace.beta_gate},
              {"max_steps", cfg.trace.max_steps},
              {"fallback_step_m", cfg.trace.fallback_step_m},
              {"post_hit_samples", cfg.post_hit_samples},
              {"post_hit_spacing_m", cfg.post_hit_spacing_m},
              {"stop_optical_depth", cfg.stop_optical_depth},
              {"seed", cfg.seed}};
}

} // namespace svf
