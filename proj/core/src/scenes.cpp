#include "svf/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "svf/rng.hpp"

namespace svf {

using nlohmann::json;

double primitive_sdf(const Primitive& p, const Vec3& x) {
  Vec3 q = x - p.center;
  switch (p.type) {
    case PrimitiveType::kSphere:
      return length(q) - p.radius;
    case PrimitiveType::kBox: {
      Vec3 d{std::fabs(q.x) - p.half.x, std::fabs(q.y) - p.half.y, std::fabs(q.z) - p.half.z};
      Vec3 outside{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
      double inside = std::min(std::max({d.x, d.y, d.z}), 0.0);
      return length(outside) + inside;
    }
    case PrimitiveType::kTorus: {
      double ring = std::sqrt(q.x * q.x + q.z * q.z) - p.major;
      return std::sqrt(ring * ring + q.y * q.y) - p.radius;
    }
    case PrimitiveType::kPlane:
      return dot(p.normal, q);
  }
  return 1e9;
}

double analytic_sdf(const AnalyticScene& scene, const Vec3& x) {
  double best = 1e9;
  for (const Primitive& p : scene.prims) {
    if (p.is_medium()) continue;
    best = std::min(best, primitive_sdf(p, x));
  }
  return best;
}

Vec3 analytic_normal(const AnalyticScene& scene, const Vec3& x) {
  const double eps = 1e-5;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 hi = x, lo = x;
    hi[a] += eps;
    lo[a] -= eps;
    g[a] = analytic_sdf(scene, hi) - analytic_sdf(scene, lo);
  }
  return normalized(g);
}

namespace {

// Smooth procedural albedo modulation so flat primitives still carry texture.
Vec3 albedo_at(const Primitive& p, const Vec3& x) {
  double phase = 3.1 * x.x + 2.2 * x.y + 1.4 * x.z;
  double factor = 0.85 + 0.15 * std::sin(4.0 * phase);
  return p.albedo * factor;
}

const Primitive* nearest_surface(const AnalyticScene& scene, const Vec3& x) {
  const Primitive* best = nullptr;
  double best_d = 1e9;
  for (const Primitive& p : scene.prims) {
    if (p.is_medium()) continue;
    double d = std::fabs(primitive_sdf(p, x));
    if (d < best_d) {
      best_d = d;
      best = &p;
    }
  }
  return best;
}

Vec3 shade_surface(const AnalyticScene& scene, const Vec3& x, const Vec3& view_dir) {
  const Primitive* prim = nearest_surface(scene, x);
  if (!prim) return {0, 0, 0};
  Vec3 n = analytic_normal(scene, x);
  Vec3 albedo = albedo_at(*prim, x);
  double diffuse = scene.ambient;
  double specular = 0.0;
  for (const DirLight& light : scene.lights) {
    double nl = dot(n, light.dir);
    if (nl <= 0.0) continue;
    diffuse += light.intensity * nl;
    if (prim->spec > 0.0) {
      Vec3 h = normalized(light.dir - view_dir);
      double nh = dot(n, h);
      if (nh > 0.0) specular += 0.25 * light.intensity * std::pow(nh, prim->spec);
    }
  }
  Vec3 c = albedo * diffuse + Vec3{1, 1, 1} * specular;
  return {clamp01(c.x), clamp01(c.y), clamp01(c.z)};
}

// First surface intersection by sphere tracing the exact SDF.
bool trace_surface(const AnalyticScene& scene, const Ray& ray, double& t_hit) {
  double t = ray.t_near;
  for (int it = 0; it < 512; ++it) {
    if (t > ray.t_far) return false;
    double f = analytic_sdf(scene, ray.at(t));
    if (f < 1e-7) {
      t_hit = t;
      return true;
    }
    t += f;
  }
  // Grazing ray that never converged; accept only if we are basically there.
  if (analytic_sdf(scene, ray.at(t)) < 1e-4) {
    t_hit = t;
    return true;
  }
  return false;
}

struct MediumSpan {
  double t0, t1;
  const Primitive* prim;
};

Vec3 shade_ray(const AnalyticScene& scene, const Ray& ray) {
  double t_surface = -1.0;
  bool hit = trace_surface(scene, ray, t_surface);
  double t_end = hit ? t_surface : ray.t_far;

  // Constant-density media crossed before the surface, front to back.
  std::vector<MediumSpan> spans;
  for (const Primitive& p : scene.prims) {
    if (!p.is_medium()) continue;
    AABB box{p.center - p.half, p.center + p.half};
    double ta, tb;
    if (!intersect_aabb(box, ray.origin, ray.dir, ray.t_near, t_end, ta, tb)) continue;
    if (tb > ta) spans.push_back({ta, tb, &p});
  }
  std::sort(spans.begin(), spans.end(),
            [](const MediumSpan& a, const MediumSpan& b) { return a.t0 < b.t0; });

  Vec3 color{0, 0, 0};
  double trans = 1.0;
  for (const MediumSpan& sp : spans) {
    double alpha = -std::expm1(-sp.prim->density * (sp.t1 - sp.t0));
    color += sp.prim->albedo * (trans * alpha);
    trans *= 1.0 - alpha;
  }
  if (hit) color += shade_surface(scene, ray.at(t_surface), ray.dir) * trans;
  return color; // black background behind everything
}

} // namespace

Image render_ground_truth(const AnalyticScene& scene, const Camera& cam, ThreadPool* pool) {
  Image img(cam.width, cam.height);
  int64_t n_pix = static_cast<int64_t>(cam.width) * cam.height;
  parallel_for_chunks(pool, n_pix, kDefaultChunks,
                      [&](int /*chunk*/, int64_t begin, int64_t end) {
    for (int64_t pix = begin; pix < end; ++pix) {
      int u = static_cast<int>(pix % cam.width);
      int v = static_cast<int>(pix / cam.width);
      Ray ray = generate_ray(cam, u + 0.5, v + 0.5, scene.bounds);
      Vec3 c = shade_ray(scene, ray);
      img.at(u, v, 0) = c.x;
      img.at(u, v, 1) = c.y;
      img.at(u, v, 2) = c.z;
    }
  });
  return img;
}

AnalyticScene make_preset_scene(const std::string& preset) {
  AnalyticScene s;
  s.name = preset;
  if (preset == "sphere") {
    Primitive ball;
    ball.type = PrimitiveType::kSphere;
    ball.center = {0, 0, 0};
    ball.radius = 1.0;
    ball.albedo = {0.72, 0.45, 0.3};
    ball.spec = 24.0;
    s.prims.push_back(ball);
    s.lights = {{normalized({1.0, 1.2, 0.8}), 0.85}, {normalized({-1.0, 0.4, -0.6}), 0.4}};
    s.ambient = 0.18;
    s.bounds = AABB::cube({0, 0, 0}, 1.5);
    s.rig = CameraRig::kOrbit;
    s.rig_radius = 3.0;
  } else if (preset == "sphere+slab") {
    Primitive ball;
    ball.type = PrimitiveType::kSphere;
    ball.center = {-0.35, 0, 0};
    ball.radius = 0.8;
    ball.albedo = {0.72, 0.45, 0.3};
    ball.spec = 24.0;
    s.prims.push_back(ball);
    Primitive slab;
    slab.type = PrimitiveType::kBox;
    slab.center = {0.85, 0, 0};
    slab.half = {0.15, 0.7, 0.7};
    slab.albedo = {0.35, 0.5, 0.8};
    slab.density = 2.5;
    s.prims.push_back(slab);
    s.lights = {{normalized({1.0, 1.2, 0.8}), 0.85}, {normalized({-1.0, 0.4, -0.6}), 0.4}};
    s.ambient = 0.18;
    s.bounds = AABB::cube({0, 0, 0}, 1.6);
    s.rig = CameraRig::kOrbit;
    s.rig_radius = 3.2;
  } else if (preset == "box-room") {
    auto wall = [](Vec3 center, Vec3 half, Vec3 albedo) {
      Primitive p;
      p.type = PrimitiveType::kBox;
      p.center = center;
      p.half = half;
      p.albedo = albedo;
      return p;
    };
    // Open box: interior 4 x 3 x 4, opening toward +z.
    s.prims.push_back(wall({0, -1.625, 0}, {2.25, 0.125, 2.25}, {0.55, 0.42, 0.3}));
    s.prims.push_back(wall({0, 1.625, 0}, {2.25, 0.125, 2.25}, {0.6, 0.6, 0.62}));
    s.prims.push_back(wall({-2.125, 0, 0}, {0.125, 1.5, 2.25}, {0.62, 0.26, 0.2}));
    s.prims.push_back(wall({2.125, 0, 0}, {0.125, 1.5, 2.25}, {0.2, 0.45, 0.62}));
    s.prims.push_back(wall({0, 0, -2.125}, {2.25, 1.5, 0.125}, {0.5, 0.55, 0.26}));
    s.lights = {{normalized({0.2, 0.5, 1.0}), 0.8}, {normalized({-0.3, 0.8, -0.4}), 0.45}};
    s.ambient = 0.25;
    s.bounds = {{-2.25, -1.75, -2.25}, {2.25, 1.75, 2.25}};
    s.rig = CameraRig::kInterior;
    s.rig_radius = 0.7;
  } else {
    throw std::invalid_argument("unknown scene preset: " + preset);
  }
  return s;
}

SceneDataset make_dataset(const AnalyticScene& scene, int n_views, int resolution,
                          uint64_t seed, ThreadPool* pool) {
  if (n_views < 2) throw std::invalid_argument("a dataset needs at least two views");
  SceneDataset ds;
  ds.name = scene.name;
  ds.bounds = scene.bounds;
  ds.scale = scene.scale;
  Vec3 center = scene.bounds.center();

  for (int i = 0; i < n_views; ++i) {
    CounterRng rng{seed, rng_stream::kScene, static_cast<uint64_t>(i)};
    double azimuth = 2.0 * kPi * (i + 0.35 * rng.uniform()) / n_views;
    Camera cam;
    if (scene.rig == CameraRig::kOrbit) {
      // Elevation sweeps a band, avoiding the poles.
      double elev = (-0.6 + 1.2 * std::fmod(0.618033988749895 * i + rng.uniform() * 0.1, 1.0)) * 0.9;
      Vec3 eye = center + Vec3{std::cos(elev) * std::cos(azimuth), std::sin(elev),
                               std::cos(elev) * std::sin(azimuth)} * scene.rig_radius;
      cam = make_lookat_camera(eye, center, {0, 1, 0}, 45.0, resolution, resolution);
    } else {
      // Interior ring: look through the centroid to the opposite side.
      double bob = 0.25 * std::sin(2.0 * azimuth) + 0.1 * (rng.uniform() - 0.5);
      Vec3 eye = center + Vec3{std::cos(azimuth), bob, std::sin(azimuth)} * scene.rig_radius;
      Vec3 target = center + (center - eye) * 2.0;
      cam = make_lookat_camera(eye, target, {0, 1, 0}, 70.0, resolution, resolution);
    }
    Image img = render_ground_truth(scene, cam, pool);
    // Snap to the 8-bit file transform so saved and in-memory data agree.
    for (double& v : img.data)
      v = srgb_gamma_to_linear(std::round(clamp01(linear_to_srgb_gamma(v)) * 255.0) / 255.0);
    ds.cameras.push_back(cam);
    ds.images.push_back(std::move(img));
    if (i % 8 == 7) ds.heldout_idx.push_back(i);
    else ds.train_idx.push_back(i);
  }
  return ds;
}

void save_dataset(const SceneDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest;
  manifest["name"] = ds.name;
  manifest["scale"] = ds.scale;
  manifest["bounds"] = {{"lo", {ds.bounds.lo.x, ds.bounds.lo.y, ds.bounds.lo.z}},
                        {"hi", {ds.bounds.hi.x, ds.bounds.hi.y, ds.bounds.hi.z}}};
  manifest["heldout"] = ds.heldout_idx;
  json images = json::array();
  char name[32];
  for (size_t i = 0; i < ds.images.size(); ++i) {
    std::snprintf(name, sizeof(name), "view_%03zu.ppm", i);
    save_ppm((fs::path(dir) / name).string(), ds.images[i]);
    const Camera& cam = ds.cameras[i];
    json jc;
    jc["fx"] = cam.fx;
    jc["fy"] = cam.fy;
    jc["cx"] = cam.cx;
    jc["cy"] = cam.cy;
    jc["width"] = cam.width;
    jc["height"] = cam.height;
    json m = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m.push_back(cam.R[r * 3 + c]);
      m.push_back(cam.origin[r]);
    }
    for (double v : {0.0, 0.0, 0.0, 1.0}) m.push_back(v);
    jc["world_from_camera"] = m;
    images.push_back({{"file", name}, {"camera", jc}});
  }
  manifest["images"] = images;
  std::ofstream out((fs::path(dir) / "manifest.json").string());
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed to write manifest under " + dir);
}

SceneDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in((fs::path(dir) / "manifest.json").string());
  if (!in) throw std::runtime_error("no manifest.json under " + dir);
  json manifest = json::parse(in);

  SceneDataset ds;
  ds.name = manifest.value("name", "");
  ds.scale = manifest.value("scale", 1.0);
  if (manifest.contains("bounds")) {
    auto& b = manifest["bounds"];
    for (int a = 0; a < 3; ++a) {
      ds.bounds.lo[a] = b["lo"][a].get<double>();
      ds.bounds.hi[a] = b["hi"][a].get<double>();
    }
  }
  std::vector<int> heldout = manifest.value("heldout", std::vector<int>{});
  int index = 0;
  for (const json& entry : manifest["images"]) {
    std::string file = entry.value("file", "");
    if (file.empty()) throw std::runtime_error("dataset image entry missing a file name");
    if (!entry.contains("camera"))
      throw std::runtime_error("dataset image " + file + " has no camera entry");
    const json& jc = entry["camera"];
    Camera cam;
    cam.fx = jc["fx"].get<double>();
    cam.fy = jc["fy"].get<double>();
    cam.cx = jc["cx"].get<double>();
    cam.cy = jc["cy"].get<double>();
    cam.width = jc["width"].get<int>();
    cam.height = jc["height"].get<int>();
    const json& m = jc["world_from_camera"];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.R[r * 3 + c] = m[r * 4 + c].get<double>();
      cam.origin[r] = m[r * 4 + 3].get<double>();
    }
    ds.cameras.push_back(cam);
    ds.images.push_back(load_ppm((fs::path(dir) / file).string()));
    bool held = std::find(heldout.begin(), heldout.end(), index) != heldout.end();
    (held ? ds.heldout_idx : ds.train_idx).push_back(index);
    ++index;
  }
  return ds;
}

} // namespace svf
