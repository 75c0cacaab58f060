#include <doctest.h>

#include <json.hpp>

#include "svf/config.hpp"

using namespace svf;
using nlohmann::json;

TEST_SUITE("config") {

TEST_CASE("train config round-trips losslessly through json") {
  TrainConfig cfg;
  cfg.iters = 123;
  cfg.lr = 7.5e-4;
  cfg.eik_mode = EikonalMode::kUniform;
  cfg.stage2_max_samples = 9;
  json j = train_config_to_json(cfg);
  TrainConfig back = parse_train_config(j);
  CHECK(train_config_to_json(back) == j);
  CHECK(back.iters == 123);
  CHECK(back.lr == doctest::Approx(7.5e-4).epsilon(1e-15));
  CHECK(back.eik_mode == EikonalMode::kUniform);

  // Defaults survive a trip too.
  TrainConfig defaults;
  CHECK(train_config_to_json(parse_train_config(train_config_to_json(defaults))) ==
        train_config_to_json(defaults));
  // Partial configs keep defaults for missing keys.
  TrainConfig partial = parse_train_config(json{{"iters", 7}});
  CHECK(partial.iters == 7);
  CHECK(partial.rays_per_batch == defaults.rays_per_batch);
  CHECK(partial.n_coarse == defaults.n_coarse);
}

TEST_CASE("model config round-trips losslessly through json") {
  ModelConfig cfg;
  cfg.sdf_grid_res = {8, 16};
  cfg.color_plane_res = {32, 64, 128};
  cfg.seed = 42;
  cfg.direct_density = true;
  json j = model_config_to_json(cfg);
  ModelConfig back = parse_model_config(j);
  CHECK(model_config_to_json(back) == j);
  CHECK(back.sdf_grid_res == std::vector<int>{8, 16});
  CHECK(back.color_plane_res == std::vector<int>{32, 64, 128});
  CHECK(back.seed == 42);
  CHECK(back.direct_density);
}

TEST_CASE("render config round-trips losslessly through json") {
  RenderConfig cfg;
  cfg.mode = RenderMode::kHybrid;
  cfg.restrict_to_occupancy = true;
  cfg.trace.beta_gate = 275.0;
  cfg.trace.max_steps = 48;
  cfg.post_hit_samples = 2;
  json j = render_config_to_json(cfg);
  RenderConfig back = parse_render_config(j);
  CHECK(render_config_to_json(back) == j);
  CHECK(back.mode == RenderMode::kHybrid);
  CHECK(back.restrict_to_occupancy);
  CHECK(back.trace.beta_gate == doctest::Approx(275.0).epsilon(1e-15));
  CHECK(back.trace.max_steps == 48);
}

TEST_CASE("unknown keys and sections are rejected") {
  CHECK_THROWS_AS(parse_train_config(json{{"itters", 100}}), ConfigError);
  CHECK_THROWS_AS(parse_model_config(json{{"sdf_grids", json::array({8})}}), ConfigError);
  CHECK_THROWS_AS(parse_render_config(json{{"Mode", "hybrid"}}), ConfigError);
  // Configs must be objects.
  CHECK_THROWS_AS(parse_train_config(json::array({1, 2})), ConfigError);
  CHECK_THROWS_AS(parse_model_config(json(3)), ConfigError);
}

TEST_CASE("wrong value types are rejected") {
  CHECK_THROWS_AS(parse_train_config(json{{"lr", "fast"}}), ConfigError);
  CHECK_THROWS_AS(parse_train_config(json{{"iters", 2.5}}), ConfigError);
  CHECK_THROWS_AS(parse_model_config(json{{"sdf_grid_res", 8}}), ConfigError);
  CHECK_THROWS_AS(parse_model_config(json{{"sdf_grid_res", json::array()}}), ConfigError);
  CHECK_THROWS_AS(parse_model_config(json{{"direct_density", 1}}), ConfigError);
  CHECK_THROWS_AS(parse_render_config(json{{"mode", 3}}), ConfigError);
}

TEST_CASE("range validation catches nonsense values") {
  CHECK_THROWS_AS(parse_train_config(json{{"iters", -1}}), ConfigError);
  CHECK_THROWS_AS(parse_train_config(json{{"rays_per_batch", 0}}), ConfigError);
  CHECK_THROWS_AS(parse_train_config(json{{"window", 0}}), ConfigError);
  CHECK_THROWS_AS(parse_train_config(json{{"n_coarse", 0}}), ConfigError);
  CHECK_THROWS_AS(parse_model_config(json{{"beta_init", -5.0}}), ConfigError);
}

TEST_CASE("the full-width color head is pinned at the config boundary") {
  CHECK_THROWS_AS(parse_model_config(json{{"color_width", 32}}), ConfigError);
  CHECK_NOTHROW(parse_model_config(json{{"color_width", 64}}));
}

TEST_CASE("mode names parse in both directions") {
  CHECK(parse_train_config(json{{"eik_mode", "uniform"}}).eik_mode == EikonalMode::kUniform);
  CHECK(parse_train_config(json{{"eik_mode", "distance-adjusted"}}).eik_mode ==
        EikonalMode::kDistanceAdjusted);
  CHECK_THROWS_AS(parse_train_config(json{{"eik_mode", "both"}}), ConfigError);

  CHECK(parse_render_config(json{{"mode", "proposal"}}).mode == RenderMode::kVolumetricProposal);
  CHECK(parse_render_config(json{{"mode", "occupancy"}}).mode == RenderMode::kVolumetricOccupancy);
  CHECK(parse_render_config(json{{"mode", "dense"}}).mode == RenderMode::kVolumetricDense);
  CHECK(parse_render_config(json{{"mode", "hybrid"}}).mode == RenderMode::kHybrid);
  CHECK_THROWS_AS(parse_render_config(json{{"mode", "splat"}}), ConfigError);

  CHECK(eikonal_mode_name(EikonalMode::kUniform) == "uniform");
  CHECK(eikonal_mode_name(EikonalMode::kDistanceAdjusted) == "distance-adjusted");
  CHECK(render_mode_name(RenderMode::kHybrid) == "hybrid");
  CHECK(render_mode_name(RenderMode::kVolumetricDense) == "dense");
}

} // TEST_SUITE
