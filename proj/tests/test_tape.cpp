#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "svf/fields.hpp"
#include "svf/parallel.hpp"
#include "svf/params.hpp"
#include "svf/tape.hpp"

using namespace svf;

namespace {

// Central-difference derivative of a scalar-valued rebuild around one
// parameter element.
template <typename F>
double fd_param(ParameterStore& store, TensorId id, int64_t i, F rebuild, double h = 1e-5) {
  double keep = store.value(id)[i];
  store.value(id)[i] = keep + h;
  double up = rebuild();
  store.value(id)[i] = keep - h;
  double dn = rebuild();
  store.value(id)[i] = keep;
  return (up - dn) / (2.0 * h);
}

bool rel_close(double a, double b, double tol) {
  double diff = std::fabs(a - b);
  double mag = std::max(std::fabs(a), std::fabs(b));
  return mag < 1e-9 ? diff < 1e-9 : diff / mag < tol;
}

} // namespace

TEST_SUITE("tape") {

TEST_CASE("mlp chain gradients match finite differences") {
  ParameterStore store;
  MlpHead mlp = make_mlp(store, "m", 3, 5, 2, 2, 42);
  // Shift biases so no relu preactivation sits on its kink.
  for (TensorId b : mlp.biases) {
    for (int64_t i = 0; i < store.tensor(b).size(); ++i) store.value(b)[i] += 0.05 * (i + 1);
  }
  const double xin[6] = {0.3, -0.7, 1.1, -0.2, 0.4, 0.9};
  const double target[4] = {0.2, -0.1, 0.6, 0.3};

  auto loss_value = [&] {
    Tape t(&store);
    SlotId out = tape_mlp(t, mlp, t.input(2, 3, xin));
    return t.scalar_value(t.mse_loss(t.softplus(out), target));
  };

  Tape tape(&store);
  SlotId x = tape.input(2, 3, xin);
  SlotId out = tape_mlp(tape, mlp, x);
  SlotId sp = tape.softplus(out);
  SlotId loss = tape.mse_loss(sp, target);
  tape.backward(loss);

  for (TensorId id = 0; id < store.count(); ++id) {
    Tensor& t = store.tensor(id);
    for (int64_t i = 0; i < t.size(); ++i) {
      double fd = fd_param(store, id, i, loss_value);
      CHECK_MESSAGE(rel_close(t.grad[i], fd, 1e-4),
                    t.name << "[" << i << "] ad=" << t.grad[i] << " fd=" << fd);
    }
  }
}

TEST_CASE("sigmoid, exp and param_scalar gradients match finite differences") {
  ParameterStore store;
  TensorId s = store.add("s", {1});
  store.value(s)[0] = 0.4;
  TensorId w = store.add("w", {2, 2});
  double wv[4] = {0.3, -0.5, 0.8, 0.1};
  std::memcpy(store.value(w), wv, sizeof wv);
  TensorId b = store.add("b", {2});
  store.value(b)[0] = 0.02;
  store.value(b)[1] = -0.3;

  const double xin[4] = {0.5, -0.25, 1.0, 0.75};
  const double target[4] = {0.4, 0.6, 0.1, 0.9};
  auto build = [&](Tape& t) {
    SlotId x = t.input(2, 2, xin);
    SlotId lin = t.linear(x, w, b);
    SlotId sig = t.sigmoid(lin);
    SlotId scale = t.exp_elem(t.param_scalar(s));
    // Loss couples the scalar path and the matrix path: mse + exp(s).
    return t.add_scaled({{t.mse_loss(sig, target), 1.0}, {scale, 0.25}});
  };
  Tape tape(&store);
  SlotId loss = build(tape);
  tape.backward(loss);
  auto value = [&] { Tape t(&store); return t.scalar_value(build(t)); };

  for (TensorId id = 0; id < store.count(); ++id) {
    Tensor& t = store.tensor(id);
    for (int64_t i = 0; i < t.size(); ++i) {
      double fd = fd_param(store, id, i, value);
      CHECK_MESSAGE(rel_close(t.grad[i], fd, 1e-4), t.name << "[" << i << "]");
    }
  }
}

TEST_CASE("render weights reproduce hand-computed compositing") {
  ParameterStore store;
  Tape tape(&store);
  // sigma * delta = ln 2 for both samples: the first sample absorbs half the
  // ray, the second half of what remains.
  const double ln2 = std::log(2.0);
  double sigma[2] = {ln2 / 0.1, ln2 / 0.2};
  double delta[2] = {0.1, 0.2};
  RaySegments segs;
  segs.push_ray(2);
  SlotId s = tape.input(2, 1, sigma);
  SlotId w = tape.render_weights(s, segs, delta);
  CHECK(tape.values(w)[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tape.values(w)[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("render weights stay in bounds and sum below one") {
  ParameterStore store;
  CounterRng rng(3, rng_stream::kMisc, 0);
  Tape tape(&store);
  RaySegments segs;
  std::vector<double> sigma, delta;
  for (int r = 0; r < 50; ++r) {
    int n = 1 + static_cast<int>(rng.uniform_index(6));
    segs.push_ray(n);
    for (int i = 0; i < n; ++i) {
      sigma.push_back(rng.uniform(0.0, 300.0));
      delta.push_back(rng.uniform(0.0, 0.05));
    }
  }
  SlotId s = tape.input(segs.sample_count(), 1, sigma.data());
  SlotId w = tape.render_weights(s, segs, delta.data());
  const double* wv = tape.values(w);
  for (int64_t r = 0; r < segs.ray_count(); ++r) {
    double sum = 0.0;
    for (int64_t i = segs.offsets[r]; i < segs.offsets[r + 1]; ++i) {
      CHECK(wv[i] >= 0.0);
      sum += wv[i];
    }
    CHECK(sum <= 1.0 + 1e-12);
  }
}

TEST_CASE("weighted color sum and compositing gradients match finite differences") {
  ParameterStore store;
  const double xin[4] = {0.2, 0.9, -0.4, 0.3};
  double delta[2] = {0.08, 0.15};
  const double target[3] = {0.3, 0.5, 0.2};
  RaySegments segs;
  segs.push_ray(2);

  // One head drives sigma, another the colors.
  TensorId w_sig = store.add("w_sig", {1, 2});
  TensorId b_sig = store.add("b_sig", {1});
  store.init_linear(w_sig, 7, 2, 1);
  store.fill(b_sig, 0.4);
  TensorId w_col = store.add("w_col", {3, 2});
  TensorId b_col = store.add("b_col", {3});
  store.init_linear(w_col, 9, 2, 3);
  store.fill(b_col, 0.2);

  auto make_loss = [&](Tape& t) {
    SlotId x = t.input(2, 2, xin);
    SlotId sigma = t.softplus(t.linear(x, w_sig, b_sig));
    SlotId w = t.render_weights(sigma, segs, delta);
    SlotId rgb = t.sigmoid(t.linear(x, w_col, b_col));
    SlotId px = t.weighted_color_sum(w, rgb, segs);
    return t.mse_loss(px, target);
  };
  Tape tape(&store);
  SlotId loss = make_loss(tape);
  tape.backward(loss);
  auto value = [&] { Tape t(&store); return t.scalar_value(make_loss(t)); };

  for (TensorId id : {w_sig, b_sig, w_col, b_col}) {
    Tensor& t = store.tensor(id);
    for (int64_t i = 0; i < t.size(); ++i) {
      double fd = fd_param(store, id, i, value);
      CHECK_MESSAGE(rel_close(t.grad[i], fd, 1e-4), t.name << "[" << i << "]");
    }
  }
}

TEST_CASE("density op matches the Laplace closed form in both beta modes") {
  ParameterStore store;
  TensorId lb = store.add("logbeta", {1});
  store.value(lb)[0] = std::log(100.0);

  Tape tape(&store);
  double f[2] = {0.01, -0.02};
  SlotId fs = tape.input(2, 1, f);
  SlotId beta = tape.exp_elem(tape.param_scalar(lb));
  SlotId sig = tape.density(fs, DensityMode::kSdfLaplace, beta, nullptr);
  CHECK(tape.values(sig)[0] == doctest::Approx(sdf_to_density(0.01, 100.0)).epsilon(1e-12));
  CHECK(tape.values(sig)[1] == doctest::Approx(sdf_to_density(-0.02, 100.0)).epsilon(1e-12));

  Tape tape2(&store);
  double betas[2] = {50.0, 400.0};
  SlotId fs2 = tape2.input(2, 1, f);
  SlotId sig2 = tape2.density(fs2, DensityMode::kSdfLaplace, -1, betas);
  CHECK(tape2.values(sig2)[0] == doctest::Approx(sdf_to_density(0.01, 50.0)).epsilon(1e-12));
  CHECK(tape2.values(sig2)[1] == doctest::Approx(sdf_to_density(-0.02, 400.0)).epsilon(1e-12));
}

TEST_CASE("learned-beta density gradient matches finite differences") {
  ParameterStore store;
  TensorId lb = store.add("logbeta", {1});
  store.value(lb)[0] = std::log(60.0);
  TensorId wf = store.add("wf", {1, 2});
  TensorId bf = store.add("bf", {1});
  store.init_linear(wf, 21, 2, 1);
  store.fill(bf, 0.013);

  const double xin[4] = {0.6, -0.1, -0.3, 0.8};
  double delta[2] = {0.05, 0.07};
  RaySegments segs;
  segs.push_ray(2);
  const double target[3] = {0.2, 0.2, 0.2};
  const double cols[6] = {0.3, 0.4, 0.5, 0.7, 0.2, 0.1};

  auto make_loss = [&](Tape& t) {
    SlotId x = t.input(2, 2, xin);
    SlotId f = t.linear(x, wf, bf);
    SlotId beta = t.exp_elem(t.param_scalar(lb));
    SlotId sigma = t.density(f, DensityMode::kSdfLaplace, beta, nullptr);
    SlotId w = t.render_weights(sigma, segs, delta);
    SlotId c = t.input(2, 3, cols);
    SlotId px = t.weighted_color_sum(w, c, segs);
    return t.mse_loss(px, target);
  };
  Tape tape(&store);
  tape.backward(make_loss(tape));
  auto value = [&] { Tape t(&store); return t.scalar_value(make_loss(t)); };

  for (TensorId id : {lb, wf, bf}) {
    Tensor& t = store.tensor(id);
    for (int64_t i = 0; i < t.size(); ++i) {
      double fd = fd_param(store, id, i, value);
      CHECK_MESSAGE(rel_close(t.grad[i], fd, 1e-4), t.name << "[" << i << "]");
    }
  }
}

TEST_CASE("eikonal op reproduces a hand-built gradient norm") {
  ParameterStore store;
  Tape tape(&store);
  // One probe point, fd_eps = 0.1, central differences over 2*eps = 0.2.
  // Differences give grad (2, 0, 1) of norm sqrt(5); with eta = 3 and
  // scale = 0.5 the loss is 0.5 * 3 * (sqrt(5) - 1)^2.
  const double eps = 0.1;
  double probes[6] = {
      0.4, 0.0,   // +x, -x -> d/dx = 0.4 / 0.2 = 2
      0.05, 0.05, // +y, -y -> 0
      0.25, 0.05, // +z, -z -> 1
  };
  double eta = 3.0;
  double gnorm = 0.0;
  SlotId p = tape.input(6, 1, probes);
  SlotId loss = tape.eikonal_loss(p, 1, eps, &eta, 0.5, &gnorm);
  double expect = 0.5 * 3.0 * sqr(std::sqrt(5.0) - 1.0);
  CHECK(tape.scalar_value(loss) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(gnorm == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
}

TEST_CASE("eikonal gradients match finite differences through a linear head") {
  ParameterStore store;
  TensorId w = store.add("w", {1, 3});
  TensorId b = store.add("b", {1});
  store.value(w)[0] = 0.9;
  store.value(w)[1] = -0.3;
  store.value(w)[2] = 0.45;
  store.fill(b, 0.1);

  // Probe positions for two samples in the required block layout.
  const double eps = 1e-3;
  std::vector<double> pts;
  Vec3 centers[2] = {{0.2, 0.4, -0.1}, {-0.5, 0.3, 0.7}};
  for (int axis = 0; axis < 3; ++axis) {
    for (double sign : {1.0, -1.0}) {
      for (const Vec3& c : centers) {
        Vec3 q = c;
        q[axis] += sign * eps;
        pts.insert(pts.end(), {q.x, q.y, q.z});
      }
    }
  }
  double eta[2] = {1.0, 2.5};

  auto make_loss = [&](Tape& t) {
    SlotId x = t.input(12, 3, pts.data());
    SlotId f = t.linear(x, w, b);
    return t.eikonal_loss(f, 2, eps, eta, 1.0 / 3.0, nullptr);
  };
  Tape tape(&store);
  tape.backward(make_loss(tape));
  auto value = [&] { Tape t(&store); return t.scalar_value(make_loss(t)); };

  for (TensorId id : {w, b}) {
    Tensor& t = store.tensor(id);
    for (int64_t i = 0; i < t.size(); ++i) {
      double fd = fd_param(store, id, i, value);
      CHECK_MESSAGE(rel_close(t.grad[i], fd, 1e-4), t.name << "[" << i << "]");
    }
  }
  // A linear field's gradient norm is |w| everywhere; check via gnorm_out.
  Tape t2(&store);
  std::vector<double> gn(2);
  SlotId x = t2.input(12, 3, pts.data());
  SlotId f = t2.linear(x, w, b);
  t2.eikonal_loss(f, 2, eps, eta, 1.0, gn.data());
  double wnorm = std::sqrt(sqr(0.9) + sqr(-0.3) + sqr(0.45));
  CHECK(gn[0] == doctest::Approx(wnorm).epsilon(1e-9));
  CHECK(gn[1] == doctest::Approx(wnorm).epsilon(1e-9));
}

TEST_CASE("interlevel loss matches a brute-force overlap oracle") {
  ParameterStore store;
  TensorId w = store.add("w", {1, 2});
  TensorId b = store.add("b", {1});
  store.value(w)[0] = 0.7;
  store.value(w)[1] = -0.2;
  store.fill(b, 0.3);

  CounterRng rng(23, rng_stream::kMisc, 0);
  const int n_rays = 4, n_prop = 5, n_field = 6;
  RaySegments psegs, fsegs;
  std::vector<double> pin, p_t0, p_t1, f_w, f_t0, f_t1;
  for (int r = 0; r < n_rays; ++r) {
    psegs.push_ray(n_prop);
    fsegs.push_ray(n_field);
    double t = 0.0;
    for (int i = 0; i < n_prop; ++i) {
      p_t0.push_back(t);
      t += rng.uniform(0.05, 0.4);
      p_t1.push_back(t);
      pin.insert(pin.end(), {rng.uniform(-1, 1), rng.uniform(-1, 1)});
    }
    t = rng.uniform(0.0, 0.2);
    for (int i = 0; i < n_field; ++i) {
      f_t0.push_back(t);
      t += rng.uniform(0.02, 0.3);
      f_t1.push_back(t);
      f_w.push_back(rng.uniform(0.0, 0.25));
    }
  }
  const double eps = 0.01;

  auto make_loss = [&](Tape& t) {
    SlotId x = t.input(n_rays * n_prop, 2, pin.data());
    SlotId pw = t.sigmoid(t.linear(x, w, b));
    return t.interlevel_loss(pw, psegs, p_t0.data(), p_t1.data(), f_w.data(), fsegs,
                             f_t0.data(), f_t1.data(), eps);
  };

  // Oracle: direct O(bins^2) translation of the histogram outer bound.
  auto oracle = [&](const std::vector<double>& pw) {
    double total = 0.0;
    for (int r = 0; r < n_rays; ++r) {
      for (int i = 0; i < n_field; ++i) {
        int64_t fi = fsegs.offsets[r] + i;
        double cover = 0.0;
        for (int j = 0; j < n_prop; ++j) {
          int64_t pj = psegs.offsets[r] + j;
          if (p_t1[pj] > f_t0[fi] && p_t0[pj] < f_t1[fi]) cover += pw[pj];
        }
        double short_by = std::max(0.0, f_w[fi] - cover);
        total += short_by * short_by / (cover + eps);
      }
    }
    return total / n_rays;
  };

  Tape tape(&store);
  SlotId x = tape.input(n_rays * n_prop, 2, pin.data());
  SlotId pw = tape.sigmoid(tape.linear(x, w, b));
  SlotId loss = tape.interlevel_loss(pw, psegs, p_t0.data(), p_t1.data(), f_w.data(),
                                     fsegs, f_t0.data(), f_t1.data(), eps);
  std::vector<double> pw_vals(tape.values(pw), tape.values(pw) + n_rays * n_prop);
  CHECK(tape.scalar_value(loss) == doctest::Approx(oracle(pw_vals)).epsilon(1e-12));

  tape.backward(loss);
  auto value = [&] { Tape t(&store); return t.scalar_value(make_loss(t)); };
  for (TensorId id : {w, b}) {
    Tensor& t = store.tensor(id);
    for (int64_t i = 0; i < t.size(); ++i) {
      double fd = fd_param(store, id, i, value);
      CHECK_MESSAGE(rel_close(t.grad[i], fd, 2e-4), t.name << "[" << i << "]");
    }
  }
}

TEST_CASE("backward leaves forward values bit-identical") {
  ParameterStore store;
  MlpHead mlp = make_mlp(store, "m", 2, 4, 1, 1, 77);
  const double xin[6] = {0.1, 0.2, -0.3, 0.4, 0.5, -0.6};
  const double target[3] = {0.0, 0.5, 1.0};
  Tape tape(&store);
  SlotId x = tape.input(3, 2, xin);
  SlotId out = tape_mlp(tape, mlp, x);
  SlotId loss = tape.mse_loss(out, target);
  std::vector<double> before(tape.values(out), tape.values(out) + 3);
  double loss_before = tape.scalar_value(loss);
  tape.backward(loss);
  CHECK(std::memcmp(before.data(), tape.values(out), 3 * sizeof(double)) == 0);
  CHECK(loss_before == tape.scalar_value(loss));
}

TEST_CASE("tensors outside the graph keep exactly zero gradients") {
  ParameterStore store;
  MlpHead used = make_mlp(store, "used", 2, 4, 1, 1, 5);
  MlpHead idle = make_mlp(store, "idle", 2, 4, 1, 1, 6);
  const double xin[2] = {0.4, -0.2};
  const double target[1] = {0.3};
  Tape tape(&store);
  SlotId out = tape_mlp(tape, used, tape.input(1, 2, xin));
  tape.backward(tape.mse_loss(out, target));

  bool used_has_grad = false;
  for (TensorId id : used.weights) {
    for (int64_t i = 0; i < store.tensor(id).size(); ++i) {
      if (store.tensor(id).grad[i] != 0.0) used_has_grad = true;
    }
  }
  CHECK(used_has_grad);
  for (const MlpHead* h = &idle; h; h = nullptr) {
    for (TensorId id : h->weights) {
      for (int64_t i = 0; i < store.tensor(id).size(); ++i) {
        CHECK(store.tensor(id).grad[i] == 0.0);
      }
    }
  }
}

TEST_CASE("gradients are bit-identical across thread counts") {
  ParameterStore serial_store, pooled_store;
  const double xin[9] = {0.3, -0.1, 0.8, 0.2, 0.6, -0.5, -0.9, 0.4, 0.05};
  const double target[3] = {0.2, 0.8, 0.5};

  auto run = [&](ParameterStore& store, ThreadPool* pool) {
    MlpHead mlp = make_mlp(store, "m", 3, 16, 2, 1, 31);
    Tape tape(&store, pool);
    SlotId out = tape_mlp(tape, mlp, tape.input(3, 3, xin));
    SlotId loss = tape.mse_loss(out, target);
    tape.backward(loss);
    return tape.scalar_value(loss);
  };

  double l1 = run(serial_store, nullptr);
  ThreadPool pool(3);
  double l2 = run(pooled_store, &pool);
  CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
  for (TensorId id = 0; id < serial_store.count(); ++id) {
    const Tensor& a = serial_store.tensor(id);
    const Tensor& b = pooled_store.tensor(id);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.grad.data(), b.grad.data(), a.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("diagnose_nonfinite names the first broken op") {
  ParameterStore store;
  Tape tape(&store);
  double bad[2] = {1.0, std::numeric_limits<double>::infinity()};
  SlotId x = tape.input(2, 1, bad);
  tape.softplus(x);
  std::string what = tape.diagnose_nonfinite();
  CHECK_FALSE(what.empty());
}

} // TEST_SUITE
