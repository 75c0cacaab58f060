#include "svf/tape.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "svf/density.hpp"

namespace svf {

namespace {
inline double sigmoid_fn(double x) { return sigmoid(x); }
inline double laplace_psi_fn(double s) { return laplace_psi(s); }
} // namespace

void Tape::reset() {
  nodes_.clear();
  slots_.clear();
  used_ = 0;
  consumed_ = false;
}

SlotId Tape::alloc_slot(int64_t rows, int cols) {
  Slot s;
  s.rows = rows;
  s.cols = cols;
  s.offset = used_;
  used_ += rows * cols;
  if (used_ > static_cast<int64_t>(val_.size())) {
    val_.resize(used_);
    adj_.resize(used_);
  }
  slots_.push_back(s);
  return static_cast<SlotId>(slots_.size() - 1);
}

Tape::Node& Tape::push(Op op, const char* label) {
  Node n;
  n.op = op;
  n.label = label;
  nodes_.push_back(std::move(n));
  return nodes_.back();
}

SlotId Tape::input(int64_t rows, int cols, const double* data, const char* label) {
  Node& n = push(Op::kInput, label);
  n.out = alloc_slot(rows, cols);
  std::memcpy(val_ptr(n.out), data, static_cast<size_t>(rows) * cols * sizeof(double));
  return n.out;
}

SlotId Tape::linear(SlotId x, TensorId weight, TensorId bias) {
  const Tensor& wt = store_->tensor(weight);
  const Tensor& bt = store_->tensor(bias);
  if (wt.shape.size() != 2) throw std::runtime_error("linear weight must be 2D: " + wt.name);
  int out_dim = static_cast<int>(wt.shape[0]);
  int in_dim = static_cast<int>(wt.shape[1]);
  if (cols(x) != in_dim) throw std::runtime_error("linear input width mismatch: " + wt.name);
  if (bt.size() != out_dim) throw std::runtime_error("linear bias size mismatch: " + bt.name);

  Node& n = push(Op::kLinear, "linear");
  n.label = "linear(" + wt.name + ")";
  n.a = x;
  n.weight = weight;
  n.bias = bias;
  int64_t rows_n = rows(x);
  n.out = alloc_slot(rows_n, out_dim);

  const double* W = store_->value(weight);
  const double* B = store_->value(bias);
  const double* X = values(x);
  double* Y = val_ptr(n.out);
  parallel_for_chunks(pool_, rows_n, kDefaultChunks, [&](int, int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const double* xr = X + r * in_dim;
      double* yr = Y + r * out_dim;
      for (int o = 0; o < out_dim; ++o) {
        const double* wr = W + static_cast<int64_t>(o) * in_dim;
        double acc = B[o];
        for (int i = 0; i < in_dim; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }
  });
  return n.out;
}

SlotId Tape::relu(SlotId x) {
  Node& n = push(Op::kRelu, "relu");
  n.a = x;
  n.out = alloc_slot(rows(x), cols(x));
  const double* X = values(x);
  double* Y = val_ptr(n.out);
  int64_t total = rows(x) * cols(x);
  for (int64_t i = 0; i < total; ++i) Y[i] = X[i] > 0.0 ? X[i] : 0.0;
  return n.out;
}

SlotId Tape::sigmoid(SlotId x) {
  Node& n = push(Op::kSigmoid, "sigmoid");
  n.a = x;
  n.out = alloc_slot(rows(x), cols(x));
  const double* X = values(x);
  double* Y = val_ptr(n.out);
  int64_t total = rows(x) * cols(x);
  for (int64_t i = 0; i < total; ++i) Y[i] = sigmoid_fn(X[i]);
  return n.out;
}

SlotId Tape::softplus(SlotId x) {
  Node& n = push(Op::kSoftplus, "softplus");
  n.a = x;
  n.out = alloc_slot(rows(x), cols(x));
  const double* X = values(x);
  double* Y = val_ptr(n.out);
  int64_t total = rows(x) * cols(x);
  for (int64_t i = 0; i < total; ++i) Y[i] = stable_softplus(X[i]);
  return n.out;
}

SlotId Tape::concat(SlotId a, SlotId b) {
  if (rows(a) != rows(b)) throw std::runtime_error("concat row mismatch");
  Node& n = push(Op::kConcat, "concat");
  n.a = a;
  n.b = b;
  int ca = cols(a), cb = cols(b);
  int64_t rn = rows(a);
  n.out = alloc_slot(rn, ca + cb);
  const double* A = values(a);
  const double* B = values(b);
  double* Y = val_ptr(n.out);
  for (int64_t r = 0; r < rn; ++r) {
    std::memcpy(Y + r * (ca + cb), A + r * ca, ca * sizeof(double));
    std::memcpy(Y + r * (ca + cb) + ca, B + r * cb, cb * sizeof(double));
  }
  return n.out;
}

SlotId Tape::add_constants(SlotId x, const double* c) {
  Node& n = push(Op::kAddConst, "add_constants");
  n.a = x;
  int64_t total = rows(x) * cols(x);
  n.out = alloc_slot(rows(x), cols(x));
  const double* X = values(x);
  double* Y = val_ptr(n.out);
  for (int64_t i = 0; i < total; ++i) Y[i] = X[i] + c[i];
  return n.out;
}

SlotId Tape::param_scalar(TensorId t, int64_t index) {
  Node& n = push(Op::kParamScalar, "param_scalar");
  n.label = "param_scalar(" + store_->tensor(t).name + ")";
  n.weight = t;
  n.n = index;
  n.out = alloc_slot(1, 1);
  val_ptr(n.out)[0] = store_->value(t)[index];
  return n.out;
}

SlotId Tape::exp_elem(SlotId x) {
  Node& n = push(Op::kExp, "exp");
  n.a = x;
  n.out = alloc_slot(rows(x), cols(x));
  const double* X = values(x);
  double* Y = val_ptr(n.out);
  int64_t total = rows(x) * cols(x);
  for (int64_t i = 0; i < total; ++i) Y[i] = std::exp(X[i]);
  return n.out;
}

SlotId Tape::encode(const EncoderHead* head, int64_t n_pts, const double* world_xyz,
                    const double* level_grid, const double* level_plane,
                    const char* label) {
  Node& n = push(Op::kEncode, label);
  n.head = head;
  n.n = n_pts;
  n.c0.assign(world_xyz, world_xyz + n_pts * 3);
  n.c1.assign(level_grid, level_grid + n_pts);
  n.c2.assign(level_plane, level_plane + n_pts);
  n.out = alloc_slot(n_pts, kEncodeDim);
  double* Y = val_ptr(n.out);
  const ParameterStore& store = *store_;
  const Node* np = &n;
  parallel_for_chunks(pool_, n_pts, kDefaultChunks, [&store, np, Y, head](int, int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      Vec3 x{np->c0[r * 3], np->c0[r * 3 + 1], np->c0[r * 3 + 2]};
      encode_point(store, *head, x, np->c1[r], np->c2[r], Y + r * kEncodeDim);
    }
  });
  return n.out;
}

SlotId Tape::density(SlotId f, DensityMode mode, SlotId beta_slot,
                     const double* beta_per_sample) {
  if (cols(f) != 1) throw std::runtime_error("density input must be [n,1]");
  Node& n = push(Op::kDensity, "density");
  n.a = f;
  n.b = beta_slot;
  n.dmode = mode;
  int64_t rn = rows(f);
  if (mode == DensityMode::kSdfLaplace && beta_slot < 0) {
    if (!beta_per_sample) throw std::runtime_error("density needs beta");
    n.c0.assign(beta_per_sample, beta_per_sample + rn);
  }
  n.out = alloc_slot(rn, 1);
  const double* F = values(f);
  double* S = val_ptr(n.out);
  if (mode == DensityMode::kDirectSoftplus) {
    for (int64_t i = 0; i < rn; ++i) S[i] = stable_softplus(F[i]);
  } else {
    const double* betas = beta_slot >= 0 ? nullptr : n.c0.data();
    double beta_b = beta_slot >= 0 ? scalar_value(beta_slot) : 0.0;
    for (int64_t i = 0; i < rn; ++i) {
      double beta = betas ? betas[i] : beta_b;
      S[i] = beta * laplace_psi_fn(F[i] * beta);
    }
  }
  return n.out;
}

SlotId Tape::render_weights(SlotId sigma, const RaySegments& segs, const double* delta) {
  if (rows(sigma) != segs.sample_count())
    throw std::runtime_error("render_weights segmentation mismatch");
  Node& n = push(Op::kWeights, "render_weights");
  n.a = sigma;
  int64_t rn = rows(sigma);
  n.c0.assign(delta, delta + rn);
  n.segs = segs.offsets;
  n.aux.resize(rn); // transmittance per sample
  n.out = alloc_slot(rn, 1);
  const double* Sg = values(sigma);
  double* W = val_ptr(n.out);
  double* T = n.aux.data();
  const std::vector<int64_t>& off = n.segs;
  int64_t n_rays = static_cast<int64_t>(off.size()) - 1;
  const double* D = n.c0.data();
  parallel_for_chunks(pool_, n_rays, kDefaultChunks, [&](int, int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      double optical = 0.0;
      for (int64_t i = off[r]; i < off[r + 1]; ++i) {
        double a = Sg[i] * D[i];
        double trans = std::exp(-optical);
        T[i] = trans;
        W[i] = trans * (-std::expm1(-a));
        optical += a;
      }
    }
  });
  return n.out;
}

SlotId Tape::weighted_color_sum(SlotId w, SlotId color, const RaySegments& segs) {
  if (rows(w) != rows(color) || cols(color) != 3 || cols(w) != 1)
    throw std::runtime_error("weighted_color_sum shape mismatch");
  Node& n = push(Op::kSegDot, "weighted_color_sum");
  n.a = w;
  n.b = color;
  n.segs = segs.offsets;
  int64_t n_rays = segs.ray_count();
  n.out = alloc_slot(n_rays, 3);
  const double* W = values(w);
  const double* C = values(color);
  double* Y = val_ptr(n.out);
  const std::vector<int64_t>& off = n.segs;
  parallel_for_chunks(pool_, n_rays, kDefaultChunks, [&](int, int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      double acc[3] = {0, 0, 0};
      for (int64_t i = off[r]; i < off[r + 1]; ++i)
        for (int ch = 0; ch < 3; ++ch) acc[ch] += W[i] * C[i * 3 + ch];
      for (int ch = 0; ch < 3; ++ch) Y[r * 3 + ch] = acc[ch];
    }
  });
  return n.out;
}

SlotId Tape::mse_loss(SlotId pred, const double* target) {
  Node& n = push(Op::kMse, "mse_loss");
  n.a = pred;
  int64_t total = rows(pred) * cols(pred);
  n.c0.assign(target, target + total);
  n.p0 = 1.0 / static_cast<double>(total);
  n.out = alloc_slot(1, 1);
  const double* P = values(pred);
  double acc = 0.0;
  for (int64_t i = 0; i < total; ++i) acc += sqr(P[i] - n.c0[i]);
  val_ptr(n.out)[0] = acc * n.p0;
  return n.out;
}

SlotId Tape::l1_loss(SlotId pred, const double* target) {
  Node& n = push(Op::kL1, "l1_loss");
  n.a = pred;
  int64_t total = rows(pred) * cols(pred);
  n.c0.assign(target, target + total);
  n.p0 = 1.0 / static_cast<double>(total);
  n.out = alloc_slot(1, 1);
  const double* P = values(pred);
  double acc = 0.0;
  for (int64_t i = 0; i < total; ++i) acc += std::fabs(P[i] - n.c0[i]);
  val_ptr(n.out)[0] = acc * n.p0;
  return n.out;
}

SlotId Tape::eikonal_loss(SlotId probe_f, int64_t n_samples, double fd_eps,
                          const double* eta, double scale, double* gnorm_out) {
  if (rows(probe_f) != 6 * n_samples || cols(probe_f) != 1)
    throw std::runtime_error("eikonal probe slot must be [6n,1]");
  Node& n = push(Op::kEikonal, "eikonal_loss");
  n.a = probe_f;
  n.n = n_samples;
  n.p0 = scale;
  n.p1 = fd_eps;
  n.c0.assign(eta, eta + n_samples);
  n.aux.resize(4 * n_samples); // gnorm, then per-axis gradient components
  n.ext_out = gnorm_out;
  n.out = alloc_slot(1, 1);
  const double* F = values(probe_f);
  double inv2eps = 1.0 / (2.0 * fd_eps);
  double acc = 0.0;
  for (int64_t i = 0; i < n_samples; ++i) {
    double g2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      double ga = (F[(2 * a) * n_samples + i] - F[(2 * a + 1) * n_samples + i]) * inv2eps;
      n.aux[n_samples + a * n_samples + i] = ga;
      g2 += ga * ga;
    }
    double g = std::sqrt(g2);
    n.aux[i] = g;
    if (gnorm_out) gnorm_out[i] = g;
    acc += n.c0[i] * sqr(g - 1.0);
  }
  val_ptr(n.out)[0] = acc * scale;
  return n.out;
}

SlotId Tape::interlevel_loss(SlotId proposal_w, const RaySegments& proposal_segs,
                             const double* p_t0, const double* p_t1,
                             const double* field_w, const RaySegments& field_segs,
                             const double* f_t0, const double* f_t1, double eps) {
  if (rows(proposal_w) != proposal_segs.sample_count())
    throw std::runtime_error("interlevel proposal segmentation mismatch");
  if (proposal_segs.ray_count() != field_segs.ray_count())
    throw std::runtime_error("interlevel ray count mismatch");
  Node& n = push(Op::kInterlevel, "interlevel_loss");
  n.a = proposal_w;
  int64_t np = proposal_segs.sample_count();
  int64_t nf = field_segs.sample_count();
  n.c0.resize(2 * np);
  std::memcpy(n.c0.data(), p_t0, np * sizeof(double));
  std::memcpy(n.c0.data() + np, p_t1, np * sizeof(double));
  n.c1.resize(3 * nf);
  std::memcpy(n.c1.data(), f_t0, nf * sizeof(double));
  std::memcpy(n.c1.data() + nf, f_t1, nf * sizeof(double));
  std::memcpy(n.c1.data() + 2 * nf, field_w, nf * sizeof(double));
  int64_t n_rays = proposal_segs.ray_count();
  n.segs.resize(proposal_segs.offsets.size() + field_segs.offsets.size());
  std::copy(proposal_segs.offsets.begin(), proposal_segs.offsets.end(), n.segs.begin());
  std::copy(field_segs.offsets.begin(), field_segs.offsets.end(),
            n.segs.begin() + proposal_segs.offsets.size());
  n.p0 = eps;
  n.p1 = 1.0 / static_cast<double>(n_rays);
  n.n = np;
  n.out = alloc_slot(1, 1);

  const double* WP = values(proposal_w);
  const double* pt0 = n.c0.data();
  const double* pt1 = n.c0.data() + np;
  const double* ft0 = n.c1.data();
  const double* ft1 = n.c1.data() + nf;
  const double* fw = n.c1.data() + 2 * nf;
  const int64_t* poff = n.segs.data();
  const int64_t* foff = n.segs.data() + n_rays + 1;
  double acc = 0.0;
  for (int64_t r = 0; r < n_rays; ++r) {
    for (int64_t i = foff[r]; i < foff[r + 1]; ++i) {
      double covered = 0.0;
      for (int64_t j = poff[r]; j < poff[r + 1]; ++j)
        if (pt1[j] > ft0[i] && pt0[j] < ft1[i]) covered += WP[j];
      double excess = fw[i] - covered;
      if (excess > 0.0) acc += excess * excess / (covered + eps);
    }
  }
  val_ptr(n.out)[0] = acc * n.p1;
  return n.out;
}

SlotId Tape::add_scaled(std::initializer_list<std::pair<SlotId, double>> terms) {
  return add_scaled(std::vector<std::pair<SlotId, double>>(terms));
}

SlotId Tape::add_scaled(const std::vector<std::pair<SlotId, double>>& terms) {
  Node& n = push(Op::kAddScaled, "add_scaled");
  n.terms = terms;
  n.out = alloc_slot(1, 1);
  double acc = 0.0;
  for (const auto& [slot, coef] : n.terms) acc += coef * scalar_value(slot);
  val_ptr(n.out)[0] = acc;
  return n.out;
}

void Tape::backward(SlotId loss) {
  if (consumed_) throw std::runtime_error("tape already consumed by backward");
  if (rows(loss) != 1 || cols(loss) != 1)
    throw std::runtime_error("backward target must be scalar");
  consumed_ = true;
  std::memset(adj_.data(), 0, static_cast<size_t>(used_) * sizeof(double));
  for (Slot& s : slots_) s.live = false;
  adj_ptr(loss)[0] = 1.0;
  slots_[loss].live = true;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->out >= 0 && slots_[it->out].live) backward_node(*it);
  }
}

void Tape::backward_node(Node& node) {
  const double* dY = adjoints(node.out);
  switch (node.op) {
    case Op::kInput:
      break;
    case Op::kLinear: {
      Tensor& wt = store_->tensor(node.weight);
      int out_dim = static_cast<int>(wt.shape[0]);
      int in_dim = static_cast<int>(wt.shape[1]);
      int64_t rn = rows(node.a);
      const double* W = wt.value.data();
      const double* X = values(node.a);
      double* dX = adj_ptr(node.a);
      touch_adj(node.a);
      // dX in parallel; dW/db via fixed per-chunk buffers merged in order.
      int n_chunks = kDefaultChunks;
      size_t buf_size = static_cast<size_t>(out_dim) * in_dim + out_dim;
      if (chunk_scratch_.size() < static_cast<size_t>(n_chunks)) chunk_scratch_.resize(n_chunks);
      parallel_for_chunks(pool_, rn, n_chunks, [&](int c, int64_t r0, int64_t r1) {
        std::vector<double>& buf = chunk_scratch_[c];
        buf.assign(buf_size, 0.0);
        double* dW = buf.data();
        double* db = buf.data() + static_cast<size_t>(out_dim) * in_dim;
        for (int64_t r = r0; r < r1; ++r) {
          const double* dyr = dY + r * out_dim;
          const double* xr = X + r * in_dim;
          double* dxr = dX + r * in_dim;
          for (int o = 0; o < out_dim; ++o) {
            double d = dyr[o];
            if (d == 0.0) continue;
            const double* wr = W + static_cast<int64_t>(o) * in_dim;
            double* dwr = dW + static_cast<int64_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) {
              dxr[i] += d * wr[i];
              dwr[i] += d * xr[i];
            }
            db[o] += d;
          }
        }
      });
      Tensor& bt = store_->tensor(node.bias);
      int64_t wn = wt.size();
      int used_chunks = std::min<int64_t>(n_chunks, rn);
      for (int c = 0; c < used_chunks; ++c) {
        const double* buf = chunk_scratch_[c].data();
        for (int64_t i = 0; i < wn; ++i) wt.grad[i] += buf[i];
        for (int o = 0; o < out_dim; ++o) bt.grad[o] += buf[wn + o];
      }
      break;
    }
    case Op::kRelu: {
      const double* X = values(node.a);
      double* dX = adj_ptr(node.a);
      touch_adj(node.a);
      int64_t total = rows(node.a) * cols(node.a);
      for (int64_t i = 0; i < total; ++i)
        if (X[i] > 0.0) dX[i] += dY[i];
      break;
    }
    case Op::kSigmoid: {
      const double* Y = values(node.out);
      double* dX = adj_ptr(node.a);
      touch_adj(node.a);
      int64_t total = rows(node.a) * cols(node.a);
      for (int64_t i = 0; i < total; ++i) dX[i] += dY[i] * Y[i] * (1.0 - Y[i]);
      break;
    }
    case Op::kSoftplus: {
      const double* X = values(node.a);
      double* dX = adj_ptr(node.a);
      touch_adj(node.a);
      int64_t total = rows(node.a) * cols(node.a);
      for (int64_t i = 0; i < total; ++i) dX[i] += dY[i] * sigmoid_fn(X[i]);
      break;
    }
    case Op::kConcat: {
      int ca = cols(node.a), cb = cols(node.b);
      double* dA = adj_ptr(node.a);
      double* dB = adj_ptr(node.b);
      touch_adj(node.a);
      touch_adj(node.b);
      int64_t rn = rows(node.a);
      for (int64_t r = 0; r < rn; ++r) {
        const double* dyr = dY + r * (ca + cb);
        for (int i = 0; i < ca; ++i) dA[r * ca + i] += dyr[i];
        for (int i = 0; i < cb; ++i) dB[r * cb + i] += dyr[ca + i];
      }
      break;
    }
    case Op::kAddConst: {
      double* dX = adj_ptr(node.a);
      touch_adj(node.a);
      int64_t total = rows(node.a) * cols(node.a);
      for (int64_t i = 0; i < total; ++i) dX[i] += dY[i];
      break;
    }
    case Op::kParamScalar: {
      store_->tensor(node.weight).grad[node.n] += dY[0];
      break;
    }
    case Op::kExp: {
      const double* Y = values(node.out);
      double* dX = adj_ptr(node.a);
      touch_adj(node.a);
      int64_t total = rows(node.a) * cols(node.a);
      for (int64_t i = 0; i < total; ++i) dX[i] += dY[i] * Y[i];
      break;
    }
    case Op::kEncode: {
      // Serial per-row scatter in deterministic row order; interpolation
      // weights recomputed from the stored positions.
      for (int64_t r = 0; r < node.n; ++r) {
        Vec3 x{node.c0[r * 3], node.c0[r * 3 + 1], node.c0[r * 3 + 2]};
        encode_point_scatter(*store_, *node.head, x, node.c1[r], node.c2[r],
                             dY + r * kEncodeDim);
      }
      break;
    }
    case Op::kDensity: {
      const double* F = values(node.a);
      double* dF = adj_ptr(node.a);
      touch_adj(node.a);
      int64_t rn = rows(node.a);
      if (node.dmode == DensityMode::kDirectSoftplus) {
        for (int64_t i = 0; i < rn; ++i) dF[i] += dY[i] * sigmoid_fn(F[i]);
      } else {
        const double* betas = node.b >= 0 ? nullptr : node.c0.data();
        double beta_b = node.b >= 0 ? scalar_value(node.b) : 0.0;
        double dbeta = 0.0;
        for (int64_t i = 0; i < rn; ++i) {
          double beta = betas ? betas[i] : beta_b;
          double s = F[i] * beta;
          double dpsi = laplace_psi_deriv(s);
          dF[i] += dY[i] * beta * beta * dpsi;
          if (node.b >= 0) dbeta += dY[i] * (laplace_psi_fn(s) + F[i] * beta * dpsi);
        }
        if (node.b >= 0) {
          adj_ptr(node.b)[0] += dbeta;
          touch_adj(node.b);
        }
      }
      break;
    }
    case Op::kWeights: {
      const double* W = values(node.out);
      const double* T = node.aux.data();
      const double* D = node.c0.data();
      double* dS = adj_ptr(node.a);
      touch_adj(node.a);
      const std::vector<int64_t>& off = node.segs;
      int64_t n_rays = static_cast<int64_t>(off.size()) - 1;
      parallel_for_chunks(pool_, n_rays, kDefaultChunks, [&](int, int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
          double suffix = 0.0;
          for (int64_t i = off[r + 1] - 1; i >= off[r]; --i) {
            suffix += dY[i] * W[i];
            dS[i] += D[i] * (dY[i] * T[i] - suffix);
          }
        }
      });
      break;
    }
    case Op::kSegDot: {
      const double* W = values(node.a);
      const double* C = values(node.b);
      double* dW = adj_ptr(node.a);
      double* dC = adj_ptr(node.b);
      touch_adj(node.a);
      touch_adj(node.b);
      const std::vector<int64_t>& off = node.segs;
      int64_t n_rays = static_cast<int64_t>(off.size()) - 1;
      parallel_for_chunks(pool_, n_rays, kDefaultChunks, [&](int, int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
          const double* dyr = dY + r * 3;
          for (int64_t i = off[r]; i < off[r + 1]; ++i) {
            double acc = 0.0;
            for (int ch = 0; ch < 3; ++ch) {
              acc += C[i * 3 + ch] * dyr[ch];
              dC[i * 3 + ch] += W[i] * dyr[ch];
            }
            dW[i] += acc;
          }
        }
      });
      break;
    }
    case Op::kMse: {
      const double* P = values(node.a);
      double* dP = adj_ptr(node.a);
      touch_adj(node.a);
      int64_t total = rows(node.a) * cols(node.a);
      double coef = 2.0 * node.p0 * dY[0];
      for (int64_t i = 0; i < total; ++i) dP[i] += coef * (P[i] - node.c0[i]);
      break;
    }
    case Op::kL1: {
      const double* P = values(node.a);
      double* dP = adj_ptr(node.a);
      touch_adj(node.a);
      int64_t total = rows(node.a) * cols(node.a);
      double coef = node.p0 * dY[0];
      for (int64_t i = 0; i < total; ++i) {
        double diff = P[i] - node.c0[i];
        if (diff > 0.0) dP[i] += coef;
        else if (diff < 0.0) dP[i] -= coef;
      }
      break;
    }
    case Op::kEikonal: {
      double* dF = adj_ptr(node.a);
      touch_adj(node.a);
      int64_t n = node.n;
      double inv2eps = 1.0 / (2.0 * node.p1);
      double base = dY[0] * node.p0;
      for (int64_t i = 0; i < n; ++i) {
        double g = node.aux[i];
        if (g <= 0.0) continue;
        double coef = base * node.c0[i] * 2.0 * (g - 1.0) / g;
        for (int a = 0; a < 3; ++a) {
          double d = coef * node.aux[n + a * n + i] * inv2eps;
          dF[(2 * a) * n + i] += d;
          dF[(2 * a + 1) * n + i] -= d;
        }
      }
      break;
    }
    case Op::kInterlevel: {
      const double* WP = values(node.a);
      double* dWP = adj_ptr(node.a);
      touch_adj(node.a);
      int64_t np = node.n;
      int64_t nf = (static_cast<int64_t>(node.c1.size())) / 3;
      const double* pt0 = node.c0.data();
      const double* pt1 = node.c0.data() + np;
      const double* ft0 = node.c1.data();
      const double* ft1 = node.c1.data() + nf;
      const double* fw = node.c1.data() + 2 * nf;
      int64_t n_rays = (static_cast<int64_t>(node.segs.size()) - 2) / 2;
      const int64_t* poff = node.segs.data();
      const int64_t* foff = node.segs.data() + n_rays + 1;
      double eps = node.p0;
      double base = dY[0] * node.p1;
      for (int64_t r = 0; r < n_rays; ++r) {
        for (int64_t i = foff[r]; i < foff[r + 1]; ++i) {
          double covered = 0.0;
          for (int64_t j = poff[r]; j < poff[r + 1]; ++j)
            if (pt1[j] > ft0[i] && pt0[j] < ft1[i]) covered += WP[j];
          double excess = fw[i] - covered;
          if (excess <= 0.0) continue;
          double denom = covered + eps;
          double d = base * (-excess) * (2.0 * denom + excess) / (denom * denom);
          for (int64_t j = poff[r]; j < poff[r + 1]; ++j)
            if (pt1[j] > ft0[i] && pt0[j] < ft1[i]) dWP[j] += d;
        }
      }
      break;
    }
    case Op::kAddScaled: {
      for (const auto& [slot, coef] : node.terms) {
        adj_ptr(slot)[0] += coef * dY[0];
        touch_adj(slot);
      }
      break;
    }
  }
}

std::string Tape::diagnose_nonfinite() const {
  for (size_t k = 0; k < nodes_.size(); ++k) {
    const Node& n = nodes_[k];
    if (n.out < 0) continue;
    const Slot& s = slots_[n.out];
    const double* v = val_.data() + s.offset;
    int64_t total = s.rows * s.cols;
    for (int64_t i = 0; i < total; ++i) {
      if (!std::isfinite(v[i]))
        return "non-finite value in op #" + std::to_string(k) + " (" + n.label + ")";
    }
  }
  return "";
}

} // namespace svf
