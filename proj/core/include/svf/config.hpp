#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "svf/fields.hpp"
#include "svf/rendering.hpp"

namespace svf {

// Raised on malformed or unknown configuration input; the CLI maps it to its
// config-error exit code.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class EikonalMode : uint8_t { kUniform, kDistanceAdjusted };

struct TrainConfig {
  int iters = 5000; // per stage
  int rays_per_batch = 1024;
  double lr = 2.5e-3;
  double lambda_eik = 0.01;
  double beta_increment = 100.0;
  double gamma_bar = 0.25;
  int window = 500; // surfaceness accumulation span, iterations
  double occ_threshold = 0.005;
  int distill_iters = 1000;
  EikonalMode eik_mode = EikonalMode::kDistanceAdjusted;

  // Sampling budget, sized for single-core training.
  int n_coarse = 8;
  int n_fine = 4;
  int eik_samples_per_ray = 1;  // 0 samples every point
  double stage2_step_m = 0.006; // marching step while finetuning
  int stage2_max_samples = 12;  // per-ray cap while finetuning
  int bake_n_coarse = 32;       // sampling used for the occupancy bake
  int bake_n_fine = 32;
  double interlevel_eps = 0.01;
  int log_every = 50;
};

// Strict parsers: any key the struct does not define is an error. The
// to_json forms emit every field, so a round trip is lossless.
TrainConfig parse_train_config(const nlohmann::json& j);
ModelConfig parse_model_config(const nlohmann::json& j);
RenderConfig parse_render_config(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
nlohmann::json model_config_to_json(const ModelConfig& cfg);
nlohmann::json render_config_to_json(const RenderConfig& cfg);

std::string eikonal_mode_name(EikonalMode mode);
std::string render_mode_name(RenderMode mode);

} // namespace svf
