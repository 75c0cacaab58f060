#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svf/density.hpp"
#include "svf/encoders.hpp"
#include "svf/math.hpp"
#include "svf/params.hpp"
#include "svf/tape.hpp"

namespace svf {

// Fully-connected head: in -> width (x hidden, relu) -> out, linear output.
struct MlpHead {
  std::vector<TensorId> weights;
  std::vector<TensorId> biases;
  int in_dim = 0, width = 0, out_dim = 0, hidden = 0;
  bool empty() const { return weights.empty(); }
};

MlpHead make_mlp(ParameterStore& store, const std::string& prefix,
                 int in_dim, int width, int hidden, int out_dim, uint64_t seed);

// Stack evaluation without a tape (render path). scratch must hold
// 2*max(width, out_dim) doubles.
void mlp_forward(const ParameterStore& store, const MlpHead& mlp,
                 const double* in, double* out, double* scratch);

// Same stack as tape ops (linear + relu chain); returns the output slot.
SlotId tape_mlp(Tape& tape, const MlpHead& mlp, SlotId x);

// Nearest-neighbor beta grid over the scene bounds with Eq.-style residual
// accumulators. Values only grow; out-of-bounds queries return the frozen
// stage-1 beta.
struct SurfacenessGrid {
  int res = 0;
  AABB bounds;
  double fallback_beta = 0.0;
  std::vector<double> beta;
  std::vector<double> accum_num; // sum of w * eta * (|grad f| - 1)^2
  std::vector<double> accum_den; // sum of w

  bool empty() const { return beta.empty(); }
  void init(int res_, const AABB& bounds_, double beta0);
  int64_t voxel_index(const Vec3& x) const; // -1 when outside
  double beta_at(const Vec3& x) const;
  void accumulate(const Vec3& x, double w, double eta, double residual_sq);
  // Applies the windowed rule: voxels with accumulated weight whose mean
  // weighted residual is below gamma_bar grow by increment. Accumulators
  // reset. Returns how many voxels grew.
  int64_t update(double gamma_bar, double increment);
};

// Density source selector: stage 1 uses the learned global beta, stage 2 the
// per-voxel grid. Direct mode bypasses the SDF interpretation entirely
// (sigma = softplus(raw)) for the functional-equivalence comparison.
enum class BetaSource : uint8_t { kGlobal, kGrid };

struct ModelConfig {
  std::vector<int> sdf_grid_res = {32, 64, 128};
  std::vector<int> sdf_plane_res = {64, 128, 256, 512, 1024};
  std::vector<int> color_grid_res = {32, 64, 128};
  std::vector<int> color_plane_res = {64, 128, 256, 512, 1024};
  int sdf_width = 32;
  int sdf_hidden = 2;
  int sdf_student_width = 16;
  int color_width = 64;
  int color_hidden = 1;
  int proposal_grid_res = 32;
  int proposal_mlp_width = 16;
  int surfaceness_res = 64;
  double beta_init = 100.0;
  double feature_init_scale = 1e-4;
  double fd_epsilon = 1e-3;
  bool direct_density = false; // softplus density, no SDF semantics
  bool sphere_init = true;     // add |x - center| - r0 to the raw SDF output
  uint64_t seed = 1;
};

// Single-level density field used to place samples cheaply during stage 1.
struct ProposalField {
  EncoderHead encoder; // one grid level, no planes
  MlpHead mlp;         // kEncodeDim -> width -> 1, softplus applied by consumers
};

struct FieldModel {
  ModelConfig cfg;
  ParameterStore store;
  AABB bounds;
  double scene_scale = 1.0; // meters per world unit

  EncoderHead sdf_encoder;
  EncoderHead color_encoder;
  MlpHead sdf_mlp;          // teacher
  MlpHead sdf_student;      // 16-wide, exists after distillation
  MlpHead color_mlp;        // teacher (64-wide default)
  MlpHead color_student32;
  MlpHead color_student16;
  TensorId log_beta_bar = kInvalidTensor;
  ProposalField proposal;
  SurfacenessGrid surfaceness;

  BetaSource beta_source = BetaSource::kGlobal;
  bool use_sdf_student = false;   // set when the distilled head takes over
  int active_color_width = 0;     // 0 = teacher; else 32 or 16

  double beta_bar() const { return std::exp(store.value(log_beta_bar)[0]); }
  const MlpHead& active_sdf_mlp() const { return use_sdf_student ? sdf_student : sdf_mlp; }
  const MlpHead& active_color_mlp() const;

  // Residual base keeping the initial field a coarse sphere: |x - center| - r0.
  double sdf_residual_base(const Vec3& x) const;
  double scene_radius() const { return 0.5 * length(bounds.extent()); }
};

FieldModel make_field_model(const ModelConfig& cfg, const AABB& bounds, double scene_scale);

// Render-path evaluations (no tape). Footprint selects anti-alias levels.
double eval_sdf(const FieldModel& model, const Vec3& x, double footprint,
                const PresummedCache* cache = nullptr);
void eval_color(const FieldModel& model, const Vec3& x, const Vec3& dir,
                double footprint, double* rgb, const PresummedCache* cache = nullptr);
double eval_density(const FieldModel& model, const Vec3& x, double footprint,
                    const PresummedCache* cache = nullptr);

// Central finite differences in world coordinates (step cfg.fd_epsilon).
Vec3 spatial_gradient(const FieldModel& model, const Vec3& x, double footprint);

double proposal_density(const FieldModel& model, const Vec3& x);

} // namespace svf
