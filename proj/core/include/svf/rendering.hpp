#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "svf/fields.hpp"
#include "svf/image.hpp"
#include "svf/math.hpp"
#include "svf/parallel.hpp"
#include "svf/sampling.hpp"

namespace svf {

// Pinhole camera. R is the world-from-camera rotation (row-major); the camera
// looks along +z in its own frame. origin is the camera center in world units.
struct Camera {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  std::array<double, 9> R = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 origin;
  int width = 0, height = 0;
};

// Orthonormality and positivity checks per the type contract.
bool camera_valid(const Camera& cam, double tol = 1e-6);

Camera make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up,
                          double fov_y_deg, int width, int height);

// Ray through continuous pixel coordinates (px, py); pass u + 0.5 for the
// pixel center. near/far bracket the scene bounds with margin; the footprint
// angle is the angular radius of one pixel.
Ray generate_ray(const Camera& cam, double px, double py, const AABB& bounds);

// World point to continuous pixel coordinates. False when behind the camera.
bool project(const Camera& cam, const Vec3& world, double& px, double& py);

struct CompositeResult {
  Vec3 rgb;
  double opacity = 0.0;
  double depth = 0.0;
};

// Front-to-back alpha compositing over a sorted batch. Fills batch.weight.
// Throws if distances are not non-decreasing.
CompositeResult composite(RaySampleBatch& batch);

enum class RenderMode : uint8_t {
  kVolumetricProposal,  // proposal-guided placement, end to end
  kVolumetricOccupancy, // fixed-step marching inside occupied voxels
  kVolumetricDense,     // fixed-step everywhere; the slow reference path
  kHybrid,              // sphere trace where beta is high, march elsewhere
};

struct RenderConfig {
  RenderMode mode = RenderMode::kVolumetricProposal;
  int n_coarse = 32;
  int n_fine = 32;
  bool restrict_to_occupancy = false; // drop proposal samples in empty voxels
  double march_step_m = 0.01;         // occupancy marching step, meters
  double dense_step_m = 0.002;        // dense reference step, meters
  TraceConfig trace;
  int post_hit_samples = 4;           // volumetric window around a trace hit
  double post_hit_spacing_m = 0.002;
  double stop_optical_depth = 12.0;   // early-out for march/dense integration
  uint64_t seed = 1;
};

struct FrameBuffers {
  Image color;                 // linear rgb, black background
  std::vector<double> opacity; // per pixel
  std::vector<double> depth;
  std::vector<double> samples; // field evaluations spent per pixel
  SampleStats stats;
};

// Renders one frame. occ may be null for proposal and dense modes; hybrid and
// occupancy modes throw without it. Hybrid also requires the surfaceness grid
// to be active. Per-pixel results are independent of thread count.
FrameBuffers render_frame(const FieldModel& model, const Camera& cam,
                          const OccupancyGrid* occ, const RenderConfig& cfg,
                          ThreadPool* pool);

} // namespace svf
