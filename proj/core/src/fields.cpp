#include "svf/fields.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace svf {

MlpHead make_mlp(ParameterStore& store, const std::string& prefix,
                 int in_dim, int width, int hidden, int out_dim, uint64_t seed) {
  MlpHead mlp;
  mlp.in_dim = in_dim;
  mlp.width = width;
  mlp.out_dim = out_dim;
  mlp.hidden = hidden;
  int prev = in_dim;
  for (int layer = 0; layer <= hidden; ++layer) {
    int out = layer == hidden ? out_dim : width;
    std::string tag = prefix + ".w" + std::to_string(layer);
    TensorId w = store.add(tag, {out, prev}, UpdateMode::kDense);
    store.init_linear(w, seed, prev, out);
    TensorId b = store.add(prefix + ".b" + std::to_string(layer), {out}, UpdateMode::kDense);
    mlp.weights.push_back(w);
    mlp.biases.push_back(b);
    prev = out;
  }
  return mlp;
}

void mlp_forward(const ParameterStore& store, const MlpHead& mlp,
                 const double* in, double* out, double* scratch) {
  int n_layers = static_cast<int>(mlp.weights.size());
  double* bufs[2] = {scratch, scratch + std::max(mlp.width, mlp.out_dim)};
  const double* cur = in;
  int prev_dim = mlp.in_dim;
  for (int layer = 0; layer < n_layers; ++layer) {
    const Tensor& wt = store.tensor(mlp.weights[layer]);
    const double* W = wt.value.data();
    const double* B = store.value(mlp.biases[layer]);
    int out_dim = static_cast<int>(wt.shape[0]);
    double* dst = layer == n_layers - 1 ? out : bufs[layer & 1];
    for (int o = 0; o < out_dim; ++o) {
      const double* wr = W + static_cast<int64_t>(o) * prev_dim;
      double acc = B[o];
      for (int i = 0; i < prev_dim; ++i) acc += wr[i] * cur[i];
      dst[o] = layer < n_layers - 1 && acc < 0.0 ? 0.0 : acc; // relu on hidden
    }
    cur = dst;
    prev_dim = out_dim;
  }
}

SlotId tape_mlp(Tape& tape, const MlpHead& mlp, SlotId x) {
  int n_layers = static_cast<int>(mlp.weights.size());
  SlotId cur = x;
  for (int layer = 0; layer < n_layers; ++layer) {
    cur = tape.linear(cur, mlp.weights[layer], mlp.biases[layer]);
    if (layer < n_layers - 1) cur = tape.relu(cur);
  }
  return cur;
}

void SurfacenessGrid::init(int res_, const AABB& bounds_, double beta0) {
  res = res_;
  bounds = bounds_;
  fallback_beta = beta0;
  size_t n = static_cast<size_t>(res) * res * res;
  beta.assign(n, beta0);
  accum_num.assign(n, 0.0);
  accum_den.assign(n, 0.0);
}

int64_t SurfacenessGrid::voxel_index(const Vec3& x) const {
  Vec3 ext = bounds.extent();
  int ix[3];
  for (int a = 0; a < 3; ++a) {
    double u = (x[a] - bounds.lo[a]) / ext[a];
    if (u < 0.0 || u >= 1.0) {
      if (x[a] == bounds.hi[a]) u = std::nextafter(1.0, 0.0); // closed top face
      else return -1;
    }
    ix[a] = static_cast<int>(u * res);
    if (ix[a] >= res) ix[a] = res - 1;
  }
  return (static_cast<int64_t>(ix[0]) * res + ix[1]) * res + ix[2];
}

double SurfacenessGrid::beta_at(const Vec3& x) const {
  int64_t i = voxel_index(x);
  return i < 0 ? fallback_beta : beta[i];
}

void SurfacenessGrid::accumulate(const Vec3& x, double w, double eta, double residual_sq) {
  int64_t i = voxel_index(x);
  if (i < 0) return;
  accum_num[i] += w * eta * residual_sq;
  accum_den[i] += w;
}

int64_t SurfacenessGrid::update(double gamma_bar, double increment) {
  int64_t grown = 0;
  for (size_t i = 0; i < beta.size(); ++i) {
    if (accum_den[i] > 0.0 && accum_num[i] / accum_den[i] < gamma_bar) {
      beta[i] += increment;
      ++grown;
    }
    accum_num[i] = 0.0;
    accum_den[i] = 0.0;
  }
  return grown;
}

const MlpHead& FieldModel::active_color_mlp() const {
  if (active_color_width == 32) return color_student32;
  if (active_color_width == 16) return color_student16;
  return color_mlp;
}

double FieldModel::sdf_residual_base(const Vec3& x) const {
  if (cfg.direct_density || !cfg.sphere_init) return 0.0;
  return length(x - bounds.center()) - 0.5 * scene_radius();
}

FieldModel make_field_model(const ModelConfig& cfg, const AABB& bounds, double scene_scale) {
  FieldModel m;
  m.cfg = cfg;
  m.bounds = bounds;
  m.scene_scale = scene_scale;

  m.log_beta_bar = m.store.add("beta.log_bar", {1}, UpdateMode::kDense);
  m.store.value(m.log_beta_bar)[0] = std::log(cfg.beta_init);

  m.sdf_encoder = make_encoder_head(m.store, "sdf", cfg.sdf_grid_res, cfg.sdf_plane_res,
                                    cfg.seed, cfg.feature_init_scale);
  m.sdf_mlp = make_mlp(m.store, "sdf.mlp", kEncodeDim, cfg.sdf_width, cfg.sdf_hidden, 1,
                       cfg.seed);
  m.sdf_student = make_mlp(m.store, "sdf.student", kEncodeDim, cfg.sdf_student_width,
                           cfg.sdf_hidden, 1, cfg.seed + 1);

  m.color_encoder = make_encoder_head(m.store, "color", cfg.color_grid_res,
                                      cfg.color_plane_res, cfg.seed + 2,
                                      cfg.feature_init_scale);
  int color_in = kEncodeDim + kShDim;
  m.color_mlp = make_mlp(m.store, "color.mlp", color_in, cfg.color_width,
                         cfg.color_hidden, 3, cfg.seed + 3);
  m.color_student32 = make_mlp(m.store, "color.student32", color_in, 32,
                               cfg.color_hidden, 3, cfg.seed + 4);
  m.color_student16 = make_mlp(m.store, "color.student16", color_in, 16,
                               cfg.color_hidden, 3, cfg.seed + 5);

  m.proposal.encoder = make_encoder_head(m.store, "proposal", {cfg.proposal_grid_res}, {},
                                         cfg.seed + 6, cfg.feature_init_scale);
  m.proposal.mlp = make_mlp(m.store, "proposal.mlp", kEncodeDim, cfg.proposal_mlp_width, 1, 1,
                            cfg.seed + 7);

  m.surfaceness.init(cfg.surfaceness_res, bounds, cfg.beta_init);
  return m;
}

namespace {

// Levels for both encoder families from one footprint.
inline void family_levels(const EncoderHead& head, double footprint,
                          double& level_grid, double& level_plane) {
  level_grid = head.grid_levels.empty()
                   ? 0.0
                   : antialias_level(footprint, head.grid_base_res());
  level_plane = head.plane_levels.empty()
                    ? 0.0
                    : antialias_level(footprint, head.plane_base_res());
}

} // namespace

double eval_sdf(const FieldModel& model, const Vec3& x, double footprint,
                const PresummedCache* cache) {
  double feat[kEncodeDim];
  double lg, lp;
  family_levels(model.sdf_encoder, footprint, lg, lp);
  if (cache) encode_point_cached(*cache, x, lg, lp, feat);
  else encode_point(model.store, model.sdf_encoder, x, lg, lp, feat);
  const MlpHead& mlp = model.active_sdf_mlp();
  double out;
  double scratch[2 * 256];
  mlp_forward(model.store, mlp, feat, &out, scratch);
  return out + model.sdf_residual_base(x);
}

void eval_color(const FieldModel& model, const Vec3& x, const Vec3& dir,
                double footprint, double* rgb, const PresummedCache* cache) {
  double in[kEncodeDim + kShDim];
  double lg, lp;
  family_levels(model.color_encoder, footprint, lg, lp);
  if (cache) encode_point_cached(*cache, x, lg, lp, in);
  else encode_point(model.store, model.color_encoder, x, lg, lp, in);
  sh_basis(dir, in + kEncodeDim);
  const MlpHead& mlp = model.active_color_mlp();
  double raw[3];
  double scratch[2 * 256];
  mlp_forward(model.store, mlp, in, raw, scratch);
  for (int c = 0; c < 3; ++c) rgb[c] = sigmoid(raw[c]);
}

double eval_density(const FieldModel& model, const Vec3& x, double footprint,
                    const PresummedCache* cache) {
  double f = eval_sdf(model, x, footprint, cache);
  if (model.cfg.direct_density) return stable_softplus(f);
  double beta = model.beta_source == BetaSource::kGlobal ? model.beta_bar()
                                                         : model.surfaceness.beta_at(x);
  return sdf_to_density(f, beta);
}

Vec3 spatial_gradient(const FieldModel& model, const Vec3& x, double footprint) {
  double eps = model.cfg.fd_epsilon;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 hi = x, lo = x;
    hi[a] += eps;
    lo[a] -= eps;
    g[a] = (eval_sdf(model, hi, footprint) - eval_sdf(model, lo, footprint)) / (2.0 * eps);
  }
  return g;
}

double proposal_density(const FieldModel& model, const Vec3& x) {
  double feat[kEncodeDim];
  encode_point(model.store, model.proposal.encoder, x, 0.0, 0.0, feat);
  double raw;
  double scratch[2 * 64];
  mlp_forward(model.store, model.proposal.mlp, feat, &raw, scratch);
  return stable_softplus(raw);
}

} // namespace svf
