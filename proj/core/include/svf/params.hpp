#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svf/rng.hpp"

namespace svf {

using TensorId = int32_t;
constexpr TensorId kInvalidTensor = -1;

// How the optimizer visits a tensor each step.
enum class UpdateMode : uint8_t {
  kDense,       // every element, every step
  kSparseTouch, // only rows touched since the last step (lazy moments)
};

struct Tensor {
  std::string name;
  std::vector<int64_t> shape;
  int64_t rows = 0;     // number of update groups
  int row_size = 1;     // scalars per group (feature dim for grids)
  UpdateMode mode = UpdateMode::kDense;

  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> adam_m;
  std::vector<double> adam_v;

  // Sparse-touch bookkeeping. touched holds row indices in first-touch order;
  // touched_mask dedups. Both are maintained by ParameterStore::touch_row.
  std::vector<int64_t> touched;
  std::vector<uint8_t> touched_mask;

  int64_t size() const { return rows * row_size; }
};

struct AdamConfig {
  double lr = 2.5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Owns every trainable array. Tensors are registered once, in a fixed order,
// and addressed by id; names exist for checkpoints and debugging.
class ParameterStore {
 public:
  TensorId add(const std::string& name, std::vector<int64_t> shape,
               UpdateMode mode = UpdateMode::kDense, int row_size = 1);

  Tensor& tensor(TensorId id) { return tensors_[id]; }
  const Tensor& tensor(TensorId id) const { return tensors_[id]; }
  int count() const { return static_cast<int>(tensors_.size()); }
  TensorId find(const std::string& name) const;

  double* value(TensorId id) { return tensors_[id].value.data(); }
  double* grad(TensorId id) { return tensors_[id].grad.data(); }
  const double* value(TensorId id) const { return tensors_[id].value.data(); }

  void touch_row(TensorId id, int64_t row) {
    Tensor& t = tensors_[id];
    if (!t.touched_mask[row]) {
      t.touched_mask[row] = 1;
      t.touched.push_back(row);
    }
  }

  // Fills a tensor with U(-scale, scale) draws from a counter stream keyed by
  // the tensor's registration index.
  void init_uniform(TensorId id, uint64_t seed, double scale);
  // Xavier-style fan-based init for a linear layer weight of shape [out, in].
  void init_linear(TensorId id, uint64_t seed, int fan_in, int fan_out);
  void fill(TensorId id, double v);

  // One optimizer step over every tensor. Dense tensors update all elements;
  // sparse-touch tensors update only touched rows (their moments decay lazily,
  // bias correction always uses the global step). Gradients of visited
  // elements are zeroed and touch lists cleared.
  void adam_step(const AdamConfig& cfg, int64_t step);

  // Same update restricted to the listed tensors. Everything else is left
  // alone entirely (no momentum drift), which is what distillation needs.
  void adam_step(const AdamConfig& cfg, int64_t step, const std::vector<TensorId>& only);

  // Drops gradients and touch lists without an update (used on abort paths).
  void clear_grads();

  int64_t total_params() const;

  // Deep state copy for in-memory snapshots (values + moments + step-free).
  std::vector<Tensor> snapshot() const { return tensors_; }
  void restore(const std::vector<Tensor>& snap) { tensors_ = snap; }

 private:
  std::vector<Tensor> tensors_;
};

} // namespace svf
