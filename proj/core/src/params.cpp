#include "svf/params.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace svf {

TensorId ParameterStore::add(const std::string& name, std::vector<int64_t> shape,
                             UpdateMode mode, int row_size) {
  if (find(name) != kInvalidTensor)
    throw std::runtime_error("duplicate tensor name: " + name);
  Tensor t;
  t.name = name;
  t.shape = std::move(shape);
  int64_t n = 1;
  for (int64_t d : t.shape) n *= d;
  if (n <= 0 || n % row_size != 0)
    throw std::runtime_error("bad tensor shape for " + name);
  t.rows = n / row_size;
  t.row_size = row_size;
  t.mode = mode;
  t.value.assign(n, 0.0);
  t.grad.assign(n, 0.0);
  t.adam_m.assign(n, 0.0);
  t.adam_v.assign(n, 0.0);
  if (mode == UpdateMode::kSparseTouch) {
    t.touched_mask.assign(t.rows, 0);
    t.touched.reserve(4096);
  }
  tensors_.push_back(std::move(t));
  return static_cast<TensorId>(tensors_.size() - 1);
}

TensorId ParameterStore::find(const std::string& name) const {
  for (size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].name == name) return static_cast<TensorId>(i);
  return kInvalidTensor;
}

void ParameterStore::init_uniform(TensorId id, uint64_t seed, double scale) {
  Tensor& t = tensors_[id];
  CounterRng rng(seed, rng_stream::kParamInit + (static_cast<uint64_t>(id) << 8));
  for (double& v : t.value) v = rng.uniform(-scale, scale);
}

void ParameterStore::init_linear(TensorId id, uint64_t seed, int fan_in, int fan_out) {
  double scale = std::sqrt(6.0 / (fan_in + fan_out));
  init_uniform(id, seed, scale);
}

void ParameterStore::fill(TensorId id, double v) {
  Tensor& t = tensors_[id];
  for (double& x : t.value) x = v;
}

namespace {

void adam_update_tensor(Tensor& t, const AdamConfig& cfg, double bc1, double bc2) {
  double* val = t.value.data();
  double* g = t.grad.data();
  double* m = t.adam_m.data();
  double* v = t.adam_v.data();
  auto update_range = [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      double mh = m[i] / bc1;
      double vh = v[i] / bc2;
      val[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
      g[i] = 0.0;
    }
  };
  if (t.mode == UpdateMode::kDense) {
    update_range(0, t.size());
  } else {
    for (int64_t row : t.touched) {
      update_range(row * t.row_size, (row + 1) * t.row_size);
      t.touched_mask[row] = 0;
    }
    t.touched.clear();
  }
}

} // namespace

void ParameterStore::adam_step(const AdamConfig& cfg, int64_t step) {
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (Tensor& t : tensors_) {
    adam_update_tensor(t, cfg, bc1, bc2);
  }
}

void ParameterStore::adam_step(const AdamConfig& cfg, int64_t step,
                               const std::vector<TensorId>& only) {
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (TensorId id : only) {
    adam_update_tensor(tensors_[id], cfg, bc1, bc2);
  }
}

void ParameterStore::clear_grads() {
  for (Tensor& t : tensors_) {
    if (t.mode == UpdateMode::kDense) {
      std::memset(t.grad.data(), 0, t.grad.size() * sizeof(double));
    } else {
      for (int64_t row : t.touched) {
        for (int k = 0; k < t.row_size; ++k) t.grad[row * t.row_size + k] = 0.0;
        t.touched_mask[row] = 0;
      }
      t.touched.clear();
    }
  }
}

int64_t ParameterStore::total_params() const {
  int64_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

} // namespace svf
