#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "svf/math.hpp"
#include "svf/params.hpp"

namespace svf {

// Every grid and plane level stores this many feature channels per texel.
constexpr int kFeatDim = 4;
// Encoder output: grid-level sum, then the three plane sums (xy, yz, zx).
constexpr int kEncodeDim = 4 * kFeatDim;

// Piecewise-linear scene contraction. Points inside the unit infinity-norm
// ball map to themselves; outside, the largest-magnitude coordinate j maps to
// (2 - 1/|x_j|) sign(x_j) and the others to x_j / |x_j|_inf. Image is (-2,2)^3.
Vec3 contract_point(const Vec3& x);

struct GridLevel {
  TensorId tensor = kInvalidTensor; // shape [res, res, res, kFeatDim]
  int res = 0;
};

struct PlaneLevel {
  std::array<TensorId, 3> tensors = {kInvalidTensor, kInvalidTensor, kInvalidTensor}; // xy, yz, zx
  int res = 0;
};

struct EncoderHead {
  std::vector<GridLevel> grid_levels;   // resolutions double per level
  std::vector<PlaneLevel> plane_levels; // resolutions double per level

  int grid_base_res() const { return grid_levels.empty() ? 0 : grid_levels.front().res; }
  int plane_base_res() const { return plane_levels.empty() ? 0 : plane_levels.front().res; }
};

// Registers one head's tensors with the store. Names look like
// "<prefix>.grid.L0" and "<prefix>.plane.L2.yz". Grids and planes use
// sparse-touch updates with one row per texel.
EncoderHead make_encoder_head(ParameterStore& store, const std::string& prefix,
                              const std::vector<int>& grid_res,
                              const std::vector<int>& plane_res,
                              uint64_t seed, double init_scale);

// Mip-style level from a pixel footprint radius p (contracted units):
// L = -log2(2 s p). Unclamped; level_weights clamps into the level range.
double antialias_level(double footprint, int base_res);

// Footprint radius at world point x for a ray with the given angular pixel
// radius and metric distance: t * theta scaled by a finite-difference
// estimate of the contraction's local max stretch.
double contracted_footprint(const Vec3& world, double t, double pixel_theta);

// Per-level blend weights for a fractional level: w[l] = clamp(L - l + 1, 0, 1).
// Coarser-than-base L gives (1, 0, ...); integer L has levels 0..L fully on.
void level_weights(double L, int n_levels, double* w);

// Sums trilinear grid samples and bilinear plane samples across levels with
// level_weights applied; writes kEncodeDim values.
void encode_point(const ParameterStore& store, const EncoderHead& head,
                  const Vec3& world, double level_grid, double level_plane,
                  double* out);

// Adjoint of encode_point: accumulates d(out) into tensor grads and marks
// touched rows. Weights are recomputed from the position.
void encode_point_scatter(ParameterStore& store, const EncoderHead& head,
                          const Vec3& world, double level_grid, double level_plane,
                          const double* d_out);

// Cumulative per-level sums g'(L) = sum_{l<=L} g(l), each resampled to level
// L's resolution. The render path then needs only the two cumulative levels
// bracketing L(x). Stale caches are detected via the optimizer step at build
// time.
struct PresummedLevel {
  std::vector<double> grid;                 // [res^3 * kFeatDim]
  std::array<std::vector<double>, 3> plane; // [res^2 * kFeatDim] each
  int grid_res = 0;
  int plane_res = 0;
};

struct PresummedCache {
  std::vector<PresummedLevel> levels; // max(n_grid_levels, n_plane_levels)
  int n_grid_levels = 0;
  int n_plane_levels = 0;
  int64_t built_at_step = -1;

  bool valid_for_step(int64_t step) const { return built_at_step == step; }
};

PresummedCache build_presummed_cache(const ParameterStore& store, const EncoderHead& head,
                                     int64_t step);

// encode_point equivalent that reads the cache: per family, blends the two
// cumulative levels bracketing L with weight frac(L).
void encode_point_cached(const PresummedCache& cache, const Vec3& world,
                         double level_grid, double level_plane, double* out);

// Real spherical harmonics through degree 3 (16 values) of a unit direction.
constexpr int kShDim = 16;
void sh_basis(const Vec3& dir, double* out);

} // namespace svf
