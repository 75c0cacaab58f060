#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "svf/encoders.hpp"
#include "svf/parallel.hpp"
#include "svf/params.hpp"

namespace svf {

using SlotId = int32_t;

// Sample-to-ray segmentation: ray r owns sample rows [offsets[r], offsets[r+1]).
struct RaySegments {
  std::vector<int64_t> offsets{0};

  int64_t ray_count() const { return static_cast<int64_t>(offsets.size()) - 1; }
  int64_t sample_count() const { return offsets.back(); }
  void push_ray(int64_t n_samples) { offsets.push_back(offsets.back() + n_samples); }
};

enum class DensityMode : uint8_t {
  kSdfLaplace,     // sigma = beta * psi(f * beta)
  kDirectSoftplus, // sigma = softplus(raw); beta unused
};

// Eager reverse-mode tape over batched matrix registers. Each op runs its
// forward pass immediately, records what backward needs, and allocates its
// output in a value/adjoint arena. backward() replays nodes in exact reverse
// order; a tape can be backward()ed once per reset().
//
// Gradients flow into the ParameterStore. Dense tensors (MLP weights) get
// chunk-reduced accumulation in fixed chunk order; grid tensors are written
// by a serial per-row scatter, so results are bit-identical for any thread
// count.
class Tape {
 public:
  explicit Tape(ParameterStore* store, ThreadPool* pool = nullptr)
      : store_(store), pool_(pool) {}

  void reset();

  // Constant input rows (no gradient). Data is copied.
  SlotId input(int64_t rows, int cols, const double* data, const char* label = "input");

  // y = W x + b with W: [out, in], b: [out].
  SlotId linear(SlotId x, TensorId weight, TensorId bias);
  SlotId relu(SlotId x);
  SlotId sigmoid(SlotId x);
  SlotId softplus(SlotId x);
  SlotId concat(SlotId a, SlotId b);
  // y = x + c with one constant per element (copied).
  SlotId add_constants(SlotId x, const double* c);
  // 1x1 slot viewing a single parameter value.
  SlotId param_scalar(TensorId t, int64_t index = 0);
  SlotId exp_elem(SlotId x);

  // Position encoding for n world points; levels are per-point constants.
  SlotId encode(const EncoderHead* head, int64_t n, const double* world_xyz,
                const double* level_grid, const double* level_plane,
                const char* label = "encode");

  // f: [n,1]. Laplace mode takes beta either as a broadcast 1x1 slot
  // (beta_slot >= 0) or as per-sample constants.
  SlotId density(SlotId f, DensityMode mode, SlotId beta_slot,
                 const double* beta_per_sample);

  // Volume-rendering weights w_i = T_i * (1 - exp(-sigma_i delta_i)) per ray.
  SlotId render_weights(SlotId sigma, const RaySegments& segs, const double* delta);

  // Per-ray color: rgb_r = sum_i w_i c_i. w: [n,1], c: [n,3] -> [rays,3].
  SlotId weighted_color_sum(SlotId w, SlotId color, const RaySegments& segs);

  // Mean squared error / mean absolute error against constants (copied).
  SlotId mse_loss(SlotId pred, const double* target);
  SlotId l1_loss(SlotId pred, const double* target);

  // Finite-difference Eikonal penalty. probe_f has 6n rows laid out as
  // [+x block, -x block, +y, -y, +z, -z], each block n rows. Returns
  // scale * sum_i eta_i (||grad f_i|| - 1)^2. Per-sample gradient norms are
  // written to gnorm_out (n values) when non-null.
  SlotId eikonal_loss(SlotId probe_f, int64_t n, double fd_eps, const double* eta,
                      double scale, double* gnorm_out);

  // Histogram outer-bound penalty. Proposal weights are a differentiable slot
  // over proposal bins [p_t0, p_t1); field weights are constants over bins
  // [f_t0, f_t1). For each field bin, W = sum of proposal weights of
  // overlapping bins (same ray); loss += max(0, w - W)^2 / (W + eps),
  // averaged over rays. Gradient reaches the proposal weights only.
  SlotId interlevel_loss(SlotId proposal_w, const RaySegments& proposal_segs,
                         const double* p_t0, const double* p_t1,
                         const double* field_w, const RaySegments& field_segs,
                         const double* f_t0, const double* f_t1, double eps);

  // Weighted sum of 1x1 slots.
  SlotId add_scaled(std::initializer_list<std::pair<SlotId, double>> terms);
  SlotId add_scaled(const std::vector<std::pair<SlotId, double>>& terms);

  void backward(SlotId loss);

  // Scans node outputs in forward order; returns a description of the first
  // op holding a non-finite value ("" when clean). Used when a loss turns
  // out non-finite, so the error can name the operation.
  std::string diagnose_nonfinite() const;

  const double* values(SlotId s) const { return val_.data() + slots_[s].offset; }
  const double* adjoints(SlotId s) const { return adj_.data() + slots_[s].offset; }
  double scalar_value(SlotId s) const { return val_[slots_[s].offset]; }
  int64_t rows(SlotId s) const { return slots_[s].rows; }
  int cols(SlotId s) const { return slots_[s].cols; }
  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    kInput, kLinear, kRelu, kSigmoid, kSoftplus, kConcat, kAddConst,
    kParamScalar, kExp, kEncode, kDensity, kWeights, kSegDot, kMse, kL1,
    kEikonal, kInterlevel, kAddScaled,
  };

  struct Slot {
    int64_t rows = 0;
    int cols = 0;
    int64_t offset = 0;
    bool live = false; // adjoint has been written during this backward
  };

  struct Node {
    Op op;
    SlotId out = -1;
    SlotId a = -1;
    SlotId b = -1;
    TensorId weight = kInvalidTensor;
    TensorId bias = kInvalidTensor;
    int64_t n = 0;
    double p0 = 0.0, p1 = 0.0;
    DensityMode dmode = DensityMode::kSdfLaplace;
    const EncoderHead* head = nullptr;
    std::vector<double> c0, c1, c2; // owned constants
    std::vector<int64_t> segs;      // ray offsets copy
    std::vector<std::pair<SlotId, double>> terms;
    std::vector<double> aux;        // forward by-products for backward
    double* ext_out = nullptr;
    std::string label;
  };

  SlotId alloc_slot(int64_t rows, int cols);
  Node& push(Op op, const char* label);
  void backward_node(Node& node);
  void touch_adj(SlotId s) { slots_[s].live = true; }
  double* adj_ptr(SlotId s) { return adj_.data() + slots_[s].offset; }
  double* val_ptr(SlotId s) { return val_.data() + slots_[s].offset; }

  ParameterStore* store_;
  ThreadPool* pool_;
  std::vector<Slot> slots_;
  std::vector<Node> nodes_;
  std::vector<double> val_;
  std::vector<double> adj_;
  int64_t used_ = 0;
  bool consumed_ = false;

  // Per-chunk scratch for dense weight-gradient reductions.
  std::vector<std::vector<double>> chunk_scratch_;
};

} // namespace svf
