#pragma once

#include <string>
#include <vector>

#include "svf/image.hpp"
#include "svf/math.hpp"
#include "svf/parallel.hpp"
#include "svf/rendering.hpp"

namespace svf {

enum class PrimitiveType : uint8_t { kSphere, kBox, kTorus, kPlane };

// Axis-aligned analytic primitive with an exact signed distance. A positive
// density marks the primitive as a constant-density medium (it then has no
// surface and is skipped by the SDF union).
struct Primitive {
  PrimitiveType type = PrimitiveType::kSphere;
  Vec3 center;
  double radius = 1.0;    // sphere; torus tube radius
  double major = 0.0;     // torus major radius (xz plane, y axis)
  Vec3 half{1, 1, 1};     // box half extents
  Vec3 normal{0, 1, 0};   // plane normal (through center)
  Vec3 albedo{0.8, 0.8, 0.8};
  double spec = 0.0;      // Blinn-Phong exponent, 0 = Lambertian only
  double density = 0.0;   // > 0 = semi-transparent slab (box shape)

  bool is_medium() const { return density > 0.0; }
};

struct DirLight {
  Vec3 dir; // toward the light, unit
  double intensity = 1.0;
};

enum class CameraRig : uint8_t { kOrbit, kInterior };

struct AnalyticScene {
  std::string name;
  std::vector<Primitive> prims;
  std::vector<DirLight> lights;
  double ambient = 0.15;
  AABB bounds;
  double scale = 1.0; // meters per world unit
  CameraRig rig = CameraRig::kOrbit;
  double rig_radius = 3.0; // orbit distance, or interior ring radius
};

// Exact min-union distance over surface primitives; negative inside.
double analytic_sdf(const AnalyticScene& scene, const Vec3& x);
double primitive_sdf(const Primitive& p, const Vec3& x);
Vec3 analytic_normal(const AnalyticScene& scene, const Vec3& x);

// Exact ray-traced reference: sphere-traced surfaces with Lambertian plus
// Blinn-Phong shading, media composited by closed-form transmittance, black
// background. Deterministic.
Image render_ground_truth(const AnalyticScene& scene, const Camera& cam,
                          ThreadPool* pool = nullptr);

// Posed images plus the metadata training needs. Every image has one camera.
struct SceneDataset {
  std::string name;
  std::vector<Image> images; // linear rgb in [0,1]
  std::vector<Camera> cameras;
  AABB bounds;
  double scale = 1.0;
  std::vector<int> train_idx;
  std::vector<int> heldout_idx;
};

// Shipped presets: "sphere", "sphere+slab", "box-room".
AnalyticScene make_preset_scene(const std::string& preset);

// Cameras look at the scene from an orbit sphere (or an interior ring for
// inward-facing scenes); every 8th view is held out. Deterministic per seed.
SceneDataset make_dataset(const AnalyticScene& scene, int n_views, int resolution,
                          uint64_t seed, ThreadPool* pool = nullptr);

// Directory layout: manifest.json plus one PPM per image. Round-trips exactly.
void save_dataset(const SceneDataset& dataset, const std::string& dir);
SceneDataset load_dataset(const std::string& dir);

} // namespace svf
