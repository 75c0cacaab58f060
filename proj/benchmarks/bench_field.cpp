// Microbenchmarks for the hot paths: encoding, MLP inference, tape training
// steps, sphere tracing, and whole-frame rendering. Sizes are scaled down
// from the desk defaults so a full run stays under a minute.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "svf/fields.hpp"
#include "svf/rendering.hpp"
#include "svf/rng.hpp"
#include "svf/scenes.hpp"
#include "svf/training.hpp"

using namespace svf;

namespace {

ModelConfig bench_config() {
  ModelConfig cfg;
  cfg.sdf_grid_res = {16, 32};
  cfg.sdf_plane_res = {32, 64};
  cfg.color_grid_res = {16, 32};
  cfg.color_plane_res = {32, 64};
  cfg.sdf_width = 32;
  cfg.sdf_hidden = 2;
  cfg.color_width = 64;
  cfg.color_hidden = 1;
  cfg.proposal_grid_res = 16;
  cfg.proposal_mlp_width = 16;
  cfg.surfaceness_res = 16;
  return cfg;
}

FieldModel& bench_model() {
  static FieldModel model = [] {
    AnalyticScene scene = make_preset_scene("sphere");
    return make_field_model(bench_config(), scene.bounds, scene.scale);
  }();
  return model;
}

std::vector<Vec3> random_points(size_t n, const AABB& bounds, uint64_t seed) {
  CounterRng rng(seed, rng_stream::kMisc);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) {
    p = bounds.lo + cmul(Vec3{rng.uniform(), rng.uniform(), rng.uniform()}, bounds.extent());
  }
  return pts;
}

} // namespace

static void BM_EncodePoint(benchmark::State& state) {
  FieldModel& model = bench_model();
  std::vector<Vec3> pts = random_points(4096, model.bounds, 3);
  std::vector<double> out(kEncodeDim);
  size_t i = 0;
  for (auto _ : state) {
    const Vec3& p = pts[i++ & 4095];
    encode_point(model.store, model.sdf_encoder, p, 0.0, 0.0, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_EncodePoint);

static void BM_EncodePointCached(benchmark::State& state) {
  FieldModel& model = bench_model();
  static PresummedCache cache = build_presummed_cache(model.store, model.sdf_encoder, 0);
  std::vector<Vec3> pts = random_points(4096, model.bounds, 4);
  std::vector<double> out(kEncodeDim);
  size_t i = 0;
  for (auto _ : state) {
    const Vec3& p = pts[i++ & 4095];
    encode_point_cached(cache, p, 0.0, 0.0, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_EncodePointCached);

static void BM_EvalSdf(benchmark::State& state) {
  FieldModel& model = bench_model();
  std::vector<Vec3> pts = random_points(4096, model.bounds, 5);
  size_t i = 0;
  for (auto _ : state) {
    double f = eval_sdf(model, pts[i++ & 4095], 0.0);
    benchmark::DoNotOptimize(f);
  }
}
BENCHMARK(BM_EvalSdf);

static void BM_MlpForward(benchmark::State& state) {
  FieldModel& model = bench_model();
  std::vector<double> in(kEncodeDim, 0.1);
  std::vector<double> out(1);
  std::vector<double> scratch(2 * 128);
  for (auto _ : state) {
    mlp_forward(model.store, model.sdf_mlp, in.data(), out.data(), scratch.data());
    benchmark::DoNotOptimize(out[0]);
  }
}
BENCHMARK(BM_MlpForward);

static void BM_TrainStepStage1(benchmark::State& state) {
  AnalyticScene scene = make_preset_scene("sphere");
  FieldModel model = make_field_model(bench_config(), scene.bounds, scene.scale);
  SceneDataset data = make_dataset(scene, 9, 32, 2);
  TrainConfig cfg;
  cfg.rays_per_batch = 64;
  AdamConfig adam;
  int64_t step = 0;
  Tape tape(&model.store);
  for (auto _ : state) {
    ++step;
    RayBatch batch = assemble_batch_stage1(model, data, cfg, 7, step);
    tape.reset();
    LossSlots loss = build_total_loss(tape, model, batch, cfg, nullptr);
    tape.backward(loss.total);
    model.store.adam_step(adam, step);
    benchmark::DoNotOptimize(tape.scalar_value(loss.total));
  }
}
BENCHMARK(BM_TrainStepStage1)->Unit(benchmark::kMillisecond);

static void BM_SphereTrace(benchmark::State& state) {
  FieldModel& model = bench_model();
  static OccupancyGrid occ = [&] {
    OccupancyGrid g;
    g.res = 16;
    g.bounds = model.bounds;
    g.occ.assign(16 * 16 * 16, 1);
    return g;
  }();
  TraceConfig cfg;
  Ray ray;
  ray.origin = {3.0, 0.1, 0.05};
  ray.dir = normalized(Vec3{-1.0, -0.03, -0.02});
  ray.t_near = 0.5;
  ray.t_far = 6.0;
  for (auto _ : state) {
    HitRecord hit = sphere_trace(model, occ, ray, cfg);
    benchmark::DoNotOptimize(hit.t);
  }
}
BENCHMARK(BM_SphereTrace);

static void BM_RenderFrame(benchmark::State& state) {
  FieldModel& model = bench_model();
  static OccupancyGrid occ = [&] {
    OccupancyGrid g;
    g.res = 16;
    g.bounds = model.bounds;
    g.occ.assign(16 * 16 * 16, 1);
    return g;
  }();
  RenderConfig cfg;
  cfg.mode = static_cast<RenderMode>(state.range(0));
  cfg.n_coarse = 16;
  cfg.n_fine = 8;
  cfg.march_step_m = 0.02;
  cfg.dense_step_m = 0.02;
  Camera cam = make_lookat_camera({3, 0.4, 0.2}, {0, 0, 0}, {0, 1, 0}, 45.0, 16, 16);
  for (auto _ : state) {
    FrameBuffers fb = render_frame(model, cam, &occ, cfg, nullptr);
    benchmark::DoNotOptimize(fb.color.data.data());
  }
}
BENCHMARK(BM_RenderFrame)
    ->Arg(static_cast<int>(RenderMode::kVolumetricProposal))
    ->Arg(static_cast<int>(RenderMode::kVolumetricOccupancy))
    ->Arg(static_cast<int>(RenderMode::kHybrid))
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
