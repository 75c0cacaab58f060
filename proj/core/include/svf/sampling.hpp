#pragma once

#include <cstdint>
#include <vector>

#include "svf/fields.hpp"
#include "svf/math.hpp"
#include "svf/rng.hpp"

namespace svf {

struct Ray {
  Vec3 origin;
  Vec3 dir; // unit
  double t_near = 0.0;
  double t_far = 1.0;
  double pixel_theta = 0.0; // angular radius of the pixel cone, radians

  Vec3 at(double t) const { return origin + dir * t; }
};

// Samples of one ray, sorted by distance. rgb is 3 per sample. weight and
// eta are filled by compositing / training respectively.
struct RaySampleBatch {
  std::vector<double> t;
  std::vector<double> delta;
  std::vector<double> sigma;
  std::vector<double> rgb;
  std::vector<double> weight;
  std::vector<double> eta;

  int64_t size() const { return static_cast<int64_t>(t.size()); }
  void clear() {
    t.clear(); delta.clear(); sigma.clear(); rgb.clear(); weight.clear(); eta.clear();
  }
};

// Binary empty-space map over the scene bounds, one bit (byte) per voxel.
// Immutable after baking.
struct OccupancyGrid {
  int res = 0;
  AABB bounds;
  std::vector<uint8_t> occ; // res^3, x-major then y then z

  bool empty() const { return occ.empty(); }
  int64_t index(int ix, int iy, int iz) const {
    return (static_cast<int64_t>(ix) * res + iy) * res + iz;
  }
  // -1 when x is outside the bounds.
  int64_t voxel_of(const Vec3& x) const;
  bool occupied_at(const Vec3& x) const {
    int64_t i = voxel_of(x);
    return i >= 0 && occ[i] != 0;
  }
  int64_t count_occupied() const;
};

// One voxel's parametric interval along a ray.
struct VoxelSpan {
  int ix = 0, iy = 0, iz = 0;
  double t0 = 0.0, t1 = 0.0;
};

// Amanatides-Woo traversal of every voxel the segment [near, far] intersects,
// in hit order, clipped to the grid bounds. Spans are appended to out.
void dda_traverse(const OccupancyGrid& grid, const Ray& ray, std::vector<VoxelSpan>& out);

// Stratified coarse bins over [near, far] with one jittered center each.
void stratified_bins(const Ray& ray, int n, CounterRng& rng,
                     std::vector<double>& t0, std::vector<double>& t1,
                     std::vector<double>& tc);

// Draws n distances from the piecewise-constant density proportional to mass
// over the given bins (stratified unit draws, linear within a bin). All-zero
// or degenerate mass falls back to uniform over the full span. Output sorted.
void inverse_cdf_sample(const std::vector<double>& t0, const std::vector<double>& t1,
                        const std::vector<double>& mass, int n, CounterRng& rng,
                        std::vector<double>& out_t);

// Proposal-guided placement for one training ray. Coarse bins are stratified;
// per-bin mass is proposal density at the bin center times bin width; fine
// samples come from the inverse CDF of that histogram. all_t merges coarse
// centers and fine samples, sorted.
struct ProposalSamples {
  std::vector<double> coarse_t0, coarse_t1, coarse_tc;
  std::vector<double> coarse_mass; // density * width, the CDF the fines used
  std::vector<double> fine_t;
  std::vector<double> all_t;
};

ProposalSamples proposal_sample(const FieldModel& model, const Ray& ray,
                                int n_coarse, int n_fine, CounterRng& rng);

// Fixed-spacing sample distances on the lattice near + (k + 0.5) * step,
// emitted only where the point lies in an occupied voxel. Monotone output.
void march_fixed(const Ray& ray, const OccupancyGrid& grid, double step,
                 std::vector<double>& out_t);

enum class TraceStatus : uint8_t {
  kHit,     // f dropped to the hit threshold
  kMiss,    // left the far bound or never met occupancy
  kLowBeta, // entered a voxel whose beta is at or below the gate
  kCapped,  // iteration cap reached without a verdict
};

struct TraceConfig {
  double hit_epsilon = 2e-4;
  double step_scale = 0.9;
  double beta_gate = 350.0;
  int max_steps = 64;
  double fallback_step_m = 0.01; // meters; divided by scene scale at use
};

struct HitRecord {
  TraceStatus status = TraceStatus::kMiss;
  double t = 0.0; // hit distance, or where tracing stopped for the fallback
  Vec3 pos;
  int steps = 0; // SDF evaluations spent
};

// Root-finds the first surface: start at the first occupied voxel, advance by
// step_scale * f while beta at the current point exceeds the gate. kLowBeta
// and kCapped report where volumetric marching should take over. A non-finite
// SDF value throws.
HitRecord sphere_trace(const FieldModel& model, const OccupancyGrid& grid,
                       const Ray& ray, const TraceConfig& cfg,
                       const PresummedCache* sdf_cache = nullptr);

// Marks every voxel that holds a sample with max(weight, sigma) above the
// threshold, over all training rays of the dataset rendered with proposal
// sampling. Throws if nothing ends up occupied.
struct SceneDataset; // defined in scenes.hpp
OccupancyGrid bake_occupancy(const FieldModel& model, const SceneDataset& dataset,
                             double threshold, int n_coarse, int n_fine,
                             ThreadPool* pool);

struct SampleStats {
  double mean = 0.0;
  double p50 = 0.0, p90 = 0.0, p99 = 0.0;
  int64_t total = 0;
};

SampleStats summarize_samples(const std::vector<double>& per_ray_counts);

} // namespace svf
