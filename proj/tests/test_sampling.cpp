#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "svf/sampling.hpp"
#include "svf/scenes.hpp"

using namespace svf;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.sdf_grid_res = {4};
  cfg.sdf_plane_res = {4};
  cfg.color_grid_res = {4};
  cfg.color_plane_res = {4};
  cfg.sdf_width = 8;
  cfg.sdf_hidden = 1;
  cfg.color_width = 8;
  cfg.color_hidden = 1;
  cfg.proposal_grid_res = 4;
  cfg.proposal_mlp_width = 4;
  cfg.surfaceness_res = 4;
  return cfg;
}

// Model whose sdf is exactly the residual base sphere.
FieldModel base_sphere_model(double half_extent) {
  ModelConfig cfg = tiny_config();
  cfg.feature_init_scale = 0.0;
  FieldModel model = make_field_model(cfg, AABB::cube({0, 0, 0}, half_extent), 1.0);
  for (TensorId id : model.sdf_mlp.weights) model.store.fill(id, 0.0);
  for (TensorId id : model.sdf_mlp.biases) model.store.fill(id, 0.0);
  return model;
}

OccupancyGrid full_grid(const AABB& bounds, int res) {
  OccupancyGrid g;
  g.res = res;
  g.bounds = bounds;
  g.occ.assign(static_cast<size_t>(res) * res * res, 1);
  return g;
}

} // namespace

TEST_SUITE("sampling") {

TEST_CASE("stratified bins partition the ray exactly") {
  Ray ray;
  ray.origin = {0, 0, 0};
  ray.dir = {1, 0, 0};
  ray.t_near = 0.5;
  ray.t_far = 2.5;
  CounterRng rng(1, rng_stream::kCoarseJitter, 0);
  std::vector<double> t0, t1, tc;
  stratified_bins(ray, 8, rng, t0, t1, tc);
  REQUIRE(t0.size() == 8);
  CHECK(t0.front() == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(t1.back() == doctest::Approx(2.5).epsilon(1e-14));
  for (int i = 0; i < 8; ++i) {
    CHECK(t1[i] - t0[i] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(tc[i] >= t0[i]);
    CHECK(tc[i] <= t1[i]);
    if (i) CHECK(t0[i] == doctest::Approx(t1[i - 1]).epsilon(1e-14));
  }
}

TEST_CASE("inverse cdf draws land uniformly within a single bin") {
  std::vector<double> t0{0.0}, t1{1.0}, mass{1.0};
  CounterRng rng(2, rng_stream::kFineJitter, 0);
  std::vector<double> out;
  inverse_cdf_sample(t0, t1, mass, 4096, rng, out);
  REQUIRE(out.size() == 4096);
  CHECK(std::is_sorted(out.begin(), out.end()));

  // Chi-square over 16 buckets; dof 15, the 0.999 quantile is 37.7.
  int counts[16] = {0};
  for (double t : out) {
    CHECK(t >= 0.0);
    CHECK(t < 1.0);
    counts[std::min(15, static_cast<int>(t * 16))]++;
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += sqr(c - 256.0) / 256.0;
  CHECK(chi2 < 37.7);
}

TEST_CASE("inverse cdf respects bin masses") {
  std::vector<double> t0{0.0, 0.5}, t1{0.5, 1.0}, mass{1.0, 3.0};
  CounterRng rng(3, rng_stream::kFineJitter, 0);
  std::vector<double> out;
  inverse_cdf_sample(t0, t1, mass, 4000, rng, out);
  int hi = 0;
  for (double t : out) hi += t >= 0.5;
  // Expect 3000 +- a generous binomial margin (sigma is about 27).
  CHECK(hi > 2870);
  CHECK(hi < 3130);
}

TEST_CASE("inverse cdf falls back to uniform on degenerate mass") {
  std::vector<double> t0{0.0, 0.5}, t1{0.5, 1.0}, mass{0.0, 0.0};
  CounterRng rng(4, rng_stream::kFineJitter, 0);
  std::vector<double> out;
  inverse_cdf_sample(t0, t1, mass, 512, rng, out);
  REQUIRE(out.size() == 512);
  int lo = 0;
  for (double t : out) lo += t < 0.5;
  CHECK(lo > 180); // both halves populated
  CHECK(lo < 330);
}

TEST_CASE("fixed-step marching emits the documented lattice") {
  OccupancyGrid grid = full_grid(AABB::cube({0.5, 0.5, 0.5}, 0.5), 4);
  Ray ray;
  ray.origin = {0, 0.5, 0.5};
  ray.dir = {1, 0, 0};
  ray.t_near = 0.0;
  ray.t_far = 1.0;
  std::vector<double> ts;
  march_fixed(ray, grid, 0.1, ts);
  // A unit segment at step 0.1 holds exactly ten samples at (k + 0.5) * 0.1.
  REQUIRE(ts.size() == 10);
  for (int k = 0; k < 10; ++k) CHECK(ts[k] == doctest::Approx((k + 0.5) * 0.1).epsilon(1e-12));
}

TEST_CASE("fixed-step marching skips unoccupied voxels") {
  OccupancyGrid grid = full_grid(AABB::cube({0.5, 0.5, 0.5}, 0.5), 4);
  // Clear the second x-slab: samples with x in [0.25, 0.5) must vanish.
  for (int iy = 0; iy < 4; ++iy)
    for (int iz = 0; iz < 4; ++iz) grid.occ[grid.index(1, iy, iz)] = 0;
  Ray ray;
  ray.origin = {0, 0.6, 0.6};
  ray.dir = {1, 0, 0};
  ray.t_near = 0.0;
  ray.t_far = 1.0;
  std::vector<double> ts;
  march_fixed(ray, grid, 0.05, ts);
  CHECK(!ts.empty());
  CHECK(std::is_sorted(ts.begin(), ts.end()));
  for (double t : ts) {
    Vec3 x = ray.at(t);
    CHECK(grid.occupied_at(x));
    CHECK((x.x < 0.25 || x.x >= 0.5));
  }
}

TEST_CASE("dda traversal matches an exhaustive slab-test oracle") {
  OccupancyGrid grid = full_grid(AABB::cube({0, 0, 0}, 1.0), 6);
  CounterRng rng(5, rng_stream::kMisc, 0);
  const double cell = 2.0 / 6.0;
  for (int trial = 0; trial < 1000; ++trial) {
    Ray ray;
    ray.origin = {rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5)};
    Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    if (length(d) < 1e-6) continue;
    ray.dir = normalized(d);
    ray.t_near = 0.0;
    ray.t_far = rng.uniform(1.0, 6.0);

    std::vector<VoxelSpan> spans;
    dda_traverse(grid, ray, spans);

    // Spans come back in hit order with consistent intervals.
    for (size_t i = 0; i < spans.size(); ++i) {
      CHECK(spans[i].t1 >= spans[i].t0);
      if (i) CHECK(spans[i].t0 >= spans[i - 1].t0 - 1e-12);
      if (spans[i].t1 - spans[i].t0 <= 1e-9) continue; // face graze, midpoint ambiguous
      Vec3 mid = ray.at(0.5 * (spans[i].t0 + spans[i].t1));
      int ix = std::clamp(static_cast<int>((mid.x + 1.0) / cell), 0, 5);
      int iy = std::clamp(static_cast<int>((mid.y + 1.0) / cell), 0, 5);
      int iz = std::clamp(static_cast<int>((mid.z + 1.0) / cell), 0, 5);
      CHECK(ix == spans[i].ix);
      CHECK(iy == spans[i].iy);
      CHECK(iz == spans[i].iz);
    }

    // Every voxel the segment truly crosses must be listed exactly once.
    std::vector<uint8_t> listed(6 * 6 * 6, 0);
    for (const VoxelSpan& s : spans) {
      int64_t id = grid.index(s.ix, s.iy, s.iz);
      CHECK(listed[id] == 0);
      listed[id] = 1;
    }
    for (int ix = 0; ix < 6; ++ix) {
      for (int iy = 0; iy < 6; ++iy) {
        for (int iz = 0; iz < 6; ++iz) {
          AABB box{{-1.0 + ix * cell, -1.0 + iy * cell, -1.0 + iz * cell},
                   {-1.0 + (ix + 1) * cell, -1.0 + (iy + 1) * cell, -1.0 + (iz + 1) * cell}};
          double tmin, tmax;
          bool hit = intersect_aabb(box, ray.origin, ray.dir, ray.t_near, ray.t_far,
                                    tmin, tmax) && tmax - tmin > 1e-9;
          // Grazing contacts (interval below 1e-9) may legitimately go either
          // way; everything else must agree with the oracle.
          if (hit) CHECK(listed[grid.index(ix, iy, iz)] == 1);
        }
      }
    }
  }
}

TEST_CASE("proposal samples are sorted and in range") {
  FieldModel model = base_sphere_model(1.0);
  Ray ray;
  ray.origin = {-2.0, 0.1, 0.0};
  ray.dir = {1, 0, 0};
  ray.t_near = 0.5;
  ray.t_far = 3.5;
  CounterRng rng(6, rng_stream::kCoarseJitter, 0);
  ProposalSamples ps = proposal_sample(model, ray, 12, 4, rng);
  CHECK(ps.coarse_tc.size() == 12);
  CHECK(ps.fine_t.size() == 4);
  CHECK(ps.all_t.size() == 16);
  CHECK(std::is_sorted(ps.all_t.begin(), ps.all_t.end()));
  for (double t : ps.all_t) {
    CHECK(t >= 0.5);
    CHECK(t <= 3.5);
  }
  for (double m : ps.coarse_mass) CHECK(m >= 0.0);
}

TEST_CASE("sphere tracing hits the analytic surface at distance two") {
  FieldModel model = base_sphere_model(1.5);
  double r0 = 0.5 * model.scene_radius();
  model.store.value(model.log_beta_bar)[0] = std::log(500.0); // above the gate
  OccupancyGrid grid = full_grid(model.bounds, 8);

  Ray ray;
  ray.origin = {2.0 + r0, 0.0, 0.0};
  ray.dir = {-1, 0, 0};
  ray.t_near = 0.0;
  ray.t_far = 2.0 * (2.0 + r0);
  TraceConfig cfg;
  HitRecord hit = sphere_trace(model, grid, ray, cfg);
  CHECK(hit.status == TraceStatus::kHit);
  CHECK(std::fabs(hit.t - 2.0) <= 1e-3);
  CHECK(hit.steps <= 30);
  CHECK(std::fabs(eval_sdf(model, hit.pos, 1e-3)) <= 2.5 * cfg.hit_epsilon);
}

TEST_CASE("sphere tracing defers to marching when beta sits at the gate") {
  FieldModel model = base_sphere_model(1.5);
  model.beta_source = BetaSource::kGrid;
  model.surfaceness.init(4, model.bounds, 100.0); // below the 350 gate
  OccupancyGrid grid = full_grid(model.bounds, 8);
  Ray ray;
  ray.origin = {3.0, 0.0, 0.0};
  ray.dir = {-1, 0, 0};
  ray.t_near = 0.0;
  ray.t_far = 6.0;
  HitRecord hit = sphere_trace(model, grid, ray, TraceConfig{});
  CHECK(hit.status == TraceStatus::kLowBeta);
  CHECK(hit.t >= 1.5 - 1e-9); // at or past the bounds entry
}

TEST_CASE("sphere tracing misses rays that never meet occupancy") {
  FieldModel model = base_sphere_model(1.5);
  model.store.value(model.log_beta_bar)[0] = std::log(500.0);
  OccupancyGrid grid = full_grid(model.bounds, 8);
  std::fill(grid.occ.begin(), grid.occ.end(), 0);
  Ray ray;
  ray.origin = {3.0, 0.0, 0.0};
  ray.dir = {-1, 0, 0};
  ray.t_near = 0.0;
  ray.t_far = 6.0;
  CHECK(sphere_trace(model, grid, ray, TraceConfig{}).status == TraceStatus::kMiss);
}

TEST_CASE("occupancy baking marks the dense shell and rejects empty fields") {
  AnalyticScene scene = make_preset_scene("sphere");
  SceneDataset data = make_dataset(scene, 4, 24, 11, nullptr);

  FieldModel model = base_sphere_model(1.5);
  OccupancyGrid occ = bake_occupancy(model, data, 0.005, 16, 8, nullptr);
  CHECK(occ.res > 0);
  int64_t occupied = occ.count_occupied();
  CHECK(occupied > 0);
  CHECK(occupied < static_cast<int64_t>(occ.occ.size()));
  // The residual-base surface lies at radius r0; its crossing points must be
  // occupied and the far bounds corner must not.
  double r0 = 0.5 * model.scene_radius();
  CHECK(occ.occupied_at({r0, 0.0, 0.0}));
  CHECK_FALSE(occ.occupied_at({1.49, 1.49, 1.49}));

  // A field with no density anywhere refuses to bake.
  ModelConfig cfg = tiny_config();
  cfg.direct_density = true;
  cfg.feature_init_scale = 0.0;
  FieldModel dead = make_field_model(cfg, AABB::cube({0, 0, 0}, 1.5), 1.0);
  for (TensorId id : dead.sdf_mlp.weights) dead.store.fill(id, 0.0);
  for (TensorId id : dead.sdf_mlp.biases) dead.store.fill(id, 0.0);
  dead.store.value(dead.sdf_mlp.biases.back())[0] = -40.0; // softplus -> 0
  CHECK_THROWS(bake_occupancy(dead, data, 0.005, 16, 8, nullptr));
}

TEST_CASE("sample statistics expose mean and percentiles") {
  std::vector<double> counts{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  SampleStats s = summarize_samples(counts);
  CHECK(s.mean == doctest::Approx(5.5).epsilon(1e-12));
  CHECK(s.total == 55);
  CHECK(s.p50 >= 5.0);
  CHECK(s.p50 <= 6.0);
  CHECK(s.p99 >= 9.0);
}

} // TEST_SUITE
