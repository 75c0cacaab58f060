#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "svf/checkpoint.hpp"
#include "svf/params.hpp"

using namespace svf;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// One Adam step computed by hand for a single scalar.
void hand_adam(double& val, double& m, double& v, double g, const AdamConfig& c, int64_t step) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g * g;
  double mh = m / (1.0 - std::pow(c.beta1, static_cast<double>(step)));
  double vh = v / (1.0 - std::pow(c.beta2, static_cast<double>(step)));
  val -= c.lr * mh / (std::sqrt(vh) + c.eps);
}

} // namespace

TEST_SUITE("params") {

TEST_CASE("dense adam follows the hand recurrence over several steps") {
  ParameterStore store;
  TensorId id = store.add("x", {2});
  store.value(id)[0] = 1.0;
  store.value(id)[1] = -2.0;
  AdamConfig cfg;
  cfg.lr = 0.1;

  double val[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  double grads[3][2] = {{0.5, -1.0}, {-0.25, 0.75}, {2.0, 0.1}};
  for (int step = 1; step <= 3; ++step) {
    store.grad(id)[0] = grads[step - 1][0];
    store.grad(id)[1] = grads[step - 1][1];
    store.adam_step(cfg, step);
    for (int i = 0; i < 2; ++i) {
      hand_adam(val[i], m[i], v[i], grads[step - 1][i], cfg, step);
      CHECK(store.value(id)[i] == doctest::Approx(val[i]).epsilon(1e-14));
    }
    // Visited gradients are consumed.
    CHECK(store.grad(id)[0] == 0.0);
    CHECK(store.grad(id)[1] == 0.0);
  }
}

TEST_CASE("zero-gradient dense tensors do not move") {
  ParameterStore store;
  TensorId id = store.add("x", {4});
  store.init_uniform(id, 3, 1.0);
  std::vector<double> before = store.tensor(id).value;
  AdamConfig cfg;
  for (int step = 1; step <= 5; ++step) store.adam_step(cfg, step);
  CHECK(std::memcmp(before.data(), store.value(id), 4 * sizeof(double)) == 0);
}

TEST_CASE("sparse rows update only when touched, with global bias correction") {
  ParameterStore store;
  TensorId id = store.add("grid", {3, 2}, UpdateMode::kSparseTouch, 2);
  store.fill(id, 1.0);
  AdamConfig cfg;
  cfg.lr = 0.05;

  // Step 1 touches row 0; steps 2-3 run without touches; step 4 touches
  // row 0 again. Row moments must carry over unchanged across the gap and the
  // bias correction must use the global step, not a per-row count.
  double val = 1.0, m = 0.0, v = 0.0;

  store.grad(id)[0] = 0.8;
  store.grad(id)[1] = 0.8;
  store.touch_row(id, 0);
  store.adam_step(cfg, 1);
  hand_adam(val, m, v, 0.8, cfg, 1);
  CHECK(store.value(id)[0] == doctest::Approx(val).epsilon(1e-14));

  store.adam_step(cfg, 2);
  store.adam_step(cfg, 3);
  CHECK(store.value(id)[0] == doctest::Approx(val).epsilon(1e-14)); // untouched

  store.grad(id)[0] = -0.3;
  store.grad(id)[1] = -0.3;
  store.touch_row(id, 0);
  store.adam_step(cfg, 4);
  hand_adam(val, m, v, -0.3, cfg, 4);
  CHECK(store.value(id)[0] == doctest::Approx(val).epsilon(1e-14));
  CHECK(store.value(id)[1] == doctest::Approx(val).epsilon(1e-14));

  // Rows 1 and 2 never moved.
  CHECK(store.value(id)[2] == 1.0);
  CHECK(store.value(id)[5] == 1.0);
  CHECK(store.tensor(id).touched.empty());
}

TEST_CASE("touch_row deduplicates") {
  ParameterStore store;
  TensorId id = store.add("grid", {4, 1}, UpdateMode::kSparseTouch, 1);
  store.touch_row(id, 2);
  store.touch_row(id, 2);
  store.touch_row(id, 0);
  store.touch_row(id, 2);
  CHECK(store.tensor(id).touched.size() == 2);
}

TEST_CASE("restricted adam step leaves other tensors fully alone") {
  ParameterStore store;
  TensorId a = store.add("a", {2});
  TensorId b = store.add("b", {2});
  store.fill(a, 1.0);
  store.fill(b, 1.0);
  store.grad(a)[0] = 0.5;
  store.grad(b)[0] = 0.5;
  // Give b momentum so an unrestricted step would keep moving it.
  AdamConfig cfg;
  store.adam_step(cfg, 1);
  CHECK(store.value(b)[0] != 1.0);

  double b_val = store.value(b)[0];
  double b_m = store.tensor(b).adam_m[0];
  store.grad(a)[1] = -0.7;
  store.adam_step(cfg, 2, {a});
  CHECK(store.value(a)[1] != 1.0);
  // b kept its value, moments and (zero) gradient untouched.
  CHECK(store.value(b)[0] == b_val);
  CHECK(store.tensor(b).adam_m[0] == b_m);
}

TEST_CASE("uniform init is deterministic per seed and tensor") {
  ParameterStore s1, s2;
  TensorId a1 = s1.add("a", {16});
  TensorId a2 = s2.add("a", {16});
  s1.init_uniform(a1, 9, 0.5);
  s2.init_uniform(a2, 9, 0.5);
  CHECK(std::memcmp(s1.value(a1), s2.value(a2), 16 * sizeof(double)) == 0);

  TensorId b1 = s1.add("b", {16});
  s1.init_uniform(b1, 9, 0.5);
  CHECK(std::memcmp(s1.value(a1), s1.value(b1), 16 * sizeof(double)) != 0);
}

TEST_CASE("snapshot and restore round-trip values and moments") {
  ParameterStore store;
  TensorId id = store.add("x", {3});
  store.init_uniform(id, 1, 1.0);
  store.grad(id)[0] = 1.0;
  AdamConfig cfg;
  store.adam_step(cfg, 1);
  auto snap = store.snapshot();
  double v0 = store.value(id)[0];

  store.grad(id)[1] = 2.0;
  store.adam_step(cfg, 2);
  store.restore(snap);
  CHECK(store.value(id)[0] == v0);
  CHECK(store.tensor(id).adam_m[1] == 0.0);
}

TEST_CASE("checkpoints round-trip bits, moments and extras") {
  std::string path = temp_path("svf_test_ckpt.bin");
  ParameterStore a;
  TensorId t1 = a.add("alpha", {4});
  TensorId t2 = a.add("beta.grid", {2, 3}, UpdateMode::kSparseTouch, 3);
  a.init_uniform(t1, 5, 2.0);
  a.init_uniform(t2, 6, 2.0);
  a.grad(t1)[0] = 1.0;
  AdamConfig cfg;
  a.adam_step(cfg, 1);

  ExtraBlob blob;
  blob.name = "occupancy";
  blob.dtype = "u8";
  blob.shape = {2, 2};
  blob.bytes = {1, 0, 0, 1};
  CheckpointMeta meta;
  meta.step = 17;
  meta.meta_json = R"({"stage":1})";
  save_checkpoint(path, a, {blob}, meta);

  ParameterStore b;
  b.add("alpha", {4});
  b.add("beta.grid", {2, 3}, UpdateMode::kSparseTouch, 3);
  std::map<std::string, ExtraBlob> extras;
  CheckpointMeta loaded = load_checkpoint(path, b, extras);
  CHECK(loaded.step == 17);
  CHECK(nlohmann::json::parse(loaded.meta_json).at("stage") == 1);
  for (TensorId id : {t1, t2}) {
    const Tensor& ta = a.tensor(id);
    const Tensor& tb = b.tensor(id);
    CHECK(std::memcmp(ta.value.data(), tb.value.data(), ta.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(ta.adam_m.data(), tb.adam_m.data(), ta.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(ta.adam_v.data(), tb.adam_v.data(), ta.size() * sizeof(double)) == 0);
  }
  REQUIRE(extras.count("occupancy") == 1);
  CHECK(extras["occupancy"].bytes == std::vector<uint8_t>({1, 0, 0, 1}));
  CHECK(extras["occupancy"].shape == std::vector<int64_t>({2, 2}));

  // The manifest alone parses as JSON and lists both tensors.
  nlohmann::json man = nlohmann::json::parse(read_checkpoint_manifest(path));
  CHECK(man.at("tensors").size() >= 2);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects shape and name mismatches") {
  std::string path = temp_path("svf_test_ckpt2.bin");
  ParameterStore a;
  a.add("alpha", {4});
  save_checkpoint(path, a, {}, CheckpointMeta{});

  ParameterStore wrong_shape;
  wrong_shape.add("alpha", {5});
  std::map<std::string, ExtraBlob> extras;
  CHECK_THROWS(load_checkpoint(path, wrong_shape, extras));

  ParameterStore wrong_name;
  wrong_name.add("gamma", {4});
  CHECK_THROWS(load_checkpoint(path, wrong_name, extras));

  // Corrupt magic bytes must be rejected up front.
  {
    FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fputc('X', f);
    std::fclose(f);
  }
  ParameterStore ok;
  ok.add("alpha", {4});
  CHECK_THROWS(load_checkpoint(path, ok, extras));
  std::remove(path.c_str());
}

} // TEST_SUITE
