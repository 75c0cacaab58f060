#include "svf/rendering.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace svf {

bool camera_valid(const Camera& cam, double tol) {
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) return false;
  if (cam.width <= 0 || cam.height <= 0) return false;
  // ||R^T R - I||_max
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot_ij = 0.0;
      for (int k = 0; k < 3; ++k) dot_ij += cam.R[k * 3 + i] * cam.R[k * 3 + j];
      if (std::fabs(dot_ij - (i == j ? 1.0 : 0.0)) > tol) return false;
    }
  }
  return true;
}

Camera make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up,
                          double fov_y_deg, int width, int height) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.origin = eye;
  Vec3 fwd = normalized(target - eye);
  Vec3 right = normalized(cross(fwd, up));
  Vec3 down = cross(fwd, right); // +y runs down the image
  // Columns of world-from-camera are the camera axes in world coordinates.
  cam.R = {right.x, down.x, fwd.x,
           right.y, down.y, fwd.y,
           right.z, down.z, fwd.z};
  double half = std::tan(0.5 * fov_y_deg * kPi / 180.0);
  cam.fy = 0.5 * height / half;
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

static Vec3 rotate(const std::array<double, 9>& R, const Vec3& v) {
  return {R[0] * v.x + R[1] * v.y + R[2] * v.z,
          R[3] * v.x + R[4] * v.y + R[5] * v.z,
          R[6] * v.x + R[7] * v.y + R[8] * v.z};
}

static Vec3 rotate_transpose(const std::array<double, 9>& R, const Vec3& v) {
  return {R[0] * v.x + R[3] * v.y + R[6] * v.z,
          R[1] * v.x + R[4] * v.y + R[7] * v.z,
          R[2] * v.x + R[5] * v.y + R[8] * v.z};
}

Ray generate_ray(const Camera& cam, double px, double py, const AABB& bounds) {
  Ray ray;
  ray.origin = cam.origin;
  Vec3 dir_cam{(px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0};
  ray.dir = normalized(rotate(cam.R, dir_cam));
  ray.pixel_theta = 0.5 / cam.fx;
  ray.t_near = 0.05;
  ray.t_far = length(cam.origin - bounds.center()) + 0.75 * length(bounds.extent());
  return ray;
}

bool project(const Camera& cam, const Vec3& world, double& px, double& py) {
  Vec3 local = rotate_transpose(cam.R, world - cam.origin);
  if (local.z <= 0.0) return false;
  px = cam.cx + cam.fx * local.x / local.z;
  py = cam.cy + cam.fy * local.y / local.z;
  return true;
}

CompositeResult composite(RaySampleBatch& batch) {
  int64_t n = batch.size();
  for (int64_t i = 1; i < n; ++i) {
    if (batch.t[i] < batch.t[i - 1])
      throw std::invalid_argument("composite requires samples sorted by distance");
  }
  batch.weight.assign(n, 0.0);
  CompositeResult res;
  double trans = 1.0;
  for (int64_t i = 0; i < n; ++i) {
    double alpha = -std::expm1(-batch.sigma[i] * batch.delta[i]);
    double w = trans * alpha;
    batch.weight[i] = w;
    res.rgb.x += w * batch.rgb[i * 3 + 0];
    res.rgb.y += w * batch.rgb[i * 3 + 1];
    res.rgb.z += w * batch.rgb[i * 3 + 2];
    res.opacity += w;
    res.depth += w * batch.t[i];
    trans *= 1.0 - alpha;
  }
  res.depth /= std::max(res.opacity, 1e-6);
  return res;
}

namespace {

struct PixelResult {
  Vec3 rgb;
  double opacity = 0.0;
  double depth = 0.0;
  double samples = 0.0;
};

struct RenderContext {
  const FieldModel* model;
  const OccupancyGrid* occ;
  const RenderConfig* cfg;
  const PresummedCache* sdf_cache;
  const PresummedCache* color_cache;
  double march_step;
  double dense_step;
  double window_step;
};

// Evaluates sigma and color at the given distances and composites them with
// early termination at the configured optical depth. Distances must be sorted.
// delta_cap > 0 fixes every delta (marching); otherwise deltas come from
// consecutive distances. Returns the evaluation count actually spent.
PixelResult integrate_ray(const RenderContext& ctx, const Ray& ray,
                          const std::vector<double>& ts, double delta_cap,
                          double trans_in = 1.0) {
  PixelResult out;
  const FieldModel& model = *ctx.model;
  double tau = 0.0;
  double trans = trans_in;
  int64_t n = static_cast<int64_t>(ts.size());
  for (int64_t i = 0; i < n; ++i) {
    double t = ts[i];
    Vec3 x = ray.at(t);
    double fp = contracted_footprint(x, t, ray.pixel_theta);
    double sigma = eval_density(model, x, fp, ctx.sdf_cache);
    out.samples += 1.0;
    double delta = delta_cap > 0.0 ? delta_cap
                                   : (i + 1 < n ? ts[i + 1] : ray.t_far) - t;
    double sd = sigma * delta;
    double alpha = -std::expm1(-sd);
    double w = trans * alpha;
    if (w > 1e-7) {
      double rgb[3];
      eval_color(model, x, ray.dir, fp, rgb, ctx.color_cache);
      out.rgb.x += w * rgb[0];
      out.rgb.y += w * rgb[1];
      out.rgb.z += w * rgb[2];
    }
    out.opacity += w;
    out.depth += w * t;
    trans *= 1.0 - alpha;
    tau += sd;
    if (tau >= ctx.cfg->stop_optical_depth) break;
  }
  return out;
}

PixelResult render_pixel_proposal(const RenderContext& ctx, const Ray& ray,
                                  CounterRng& rng) {
  ProposalSamples ps = proposal_sample(*ctx.model, ray, ctx.cfg->n_coarse,
                                       ctx.cfg->n_fine, rng);
  std::vector<double> ts;
  if (ctx.cfg->restrict_to_occupancy) {
    ts.reserve(ps.all_t.size());
    for (double t : ps.all_t)
      if (ctx.occ->occupied_at(ray.at(t))) ts.push_back(t);
  } else {
    ts = std::move(ps.all_t);
  }
  return integrate_ray(ctx, ray, ts, 0.0);
}

PixelResult render_pixel_march(const RenderContext& ctx, const Ray& ray) {
  std::vector<double> ts;
  march_fixed(ray, *ctx.occ, ctx.march_step, ts);
  return integrate_ray(ctx, ray, ts, ctx.march_step);
}

PixelResult render_pixel_dense(const RenderContext& ctx, const Ray& ray) {
  std::vector<double> ts;
  int64_t n = static_cast<int64_t>((ray.t_far - ray.t_near) / ctx.dense_step);
  ts.reserve(n);
  for (int64_t k = 0; k < n; ++k) ts.push_back(ray.t_near + (k + 0.5) * ctx.dense_step);
  return integrate_ray(ctx, ray, ts, ctx.dense_step);
}

PixelResult render_pixel_hybrid(const RenderContext& ctx, const Ray& ray) {
  HitRecord rec = sphere_trace(*ctx.model, *ctx.occ, ray, ctx.cfg->trace, ctx.sdf_cache);
  PixelResult out;
  out.samples = rec.steps;

  if (rec.status == TraceStatus::kMiss) {
    return out;
  }
  if (rec.status == TraceStatus::kHit) {
    // Small volumetric window around the hit; the field is a finite-beta
    // SDF, so single-sample shading would bias color and opacity.
    int n = ctx.cfg->post_hit_samples;
    std::vector<double> ts(n);
    for (int k = 0; k < n; ++k)
      ts[k] = rec.t + (k + 0.5 - 0.5 * n) * ctx.window_step;
    PixelResult win = integrate_ray(ctx, ray, ts, ctx.window_step);
    win.samples += out.samples;
    return win;
  }

  // Low-beta region or iteration cap: march the remainder volumetrically.
  Ray rest = ray;
  rest.t_near = std::max(ray.t_near, rec.t);
  std::vector<double> ts;
  march_fixed(rest, *ctx.occ, ctx.march_step, ts);
  PixelResult vol = integrate_ray(ctx, rest, ts, ctx.march_step);
  vol.samples += out.samples;
  return vol;
}

} // namespace

FrameBuffers render_frame(const FieldModel& model, const Camera& cam,
                          const OccupancyGrid* occ, const RenderConfig& cfg,
                          ThreadPool* pool) {
  bool needs_occ = cfg.mode == RenderMode::kVolumetricOccupancy ||
                   cfg.mode == RenderMode::kHybrid ||
                   (cfg.mode == RenderMode::kVolumetricProposal && cfg.restrict_to_occupancy);
  if (needs_occ && (occ == nullptr || occ->empty()))
    throw std::runtime_error("render mode requires a baked occupancy grid");
  if (cfg.mode == RenderMode::kHybrid && model.beta_source == BetaSource::kGrid &&
      model.surfaceness.empty())
    throw std::runtime_error("hybrid rendering requires the surfaceness grid");

  RenderContext ctx;
  ctx.model = &model;
  ctx.occ = occ;
  ctx.cfg = &cfg;
  ctx.march_step = cfg.march_step_m / model.scene_scale;
  ctx.dense_step = cfg.dense_step_m / model.scene_scale;
  ctx.window_step = cfg.post_hit_spacing_m / model.scene_scale;

  PresummedCache sdf_cache = build_presummed_cache(model.store, model.sdf_encoder, 0);
  PresummedCache color_cache = build_presummed_cache(model.store, model.color_encoder, 0);
  ctx.sdf_cache = &sdf_cache;
  ctx.color_cache = &color_cache;

  FrameBuffers fb;
  fb.color = Image(cam.width, cam.height);
  int64_t n_pix = static_cast<int64_t>(cam.width) * cam.height;
  fb.opacity.assign(n_pix, 0.0);
  fb.depth.assign(n_pix, 0.0);
  fb.samples.assign(n_pix, 0.0);

  parallel_for_chunks(pool, n_pix, kDefaultChunks,
                      [&](int /*chunk*/, int64_t begin, int64_t end) {
    for (int64_t pix = begin; pix < end; ++pix) {
      int u = static_cast<int>(pix % cam.width);
      int v = static_cast<int>(pix / cam.width);
      Ray ray = generate_ray(cam, u + 0.5, v + 0.5, model.bounds);
      CounterRng rng{cfg.seed, rng_stream::kPixelJitter, static_cast<uint64_t>(pix)};
      PixelResult res;
      switch (cfg.mode) {
        case RenderMode::kVolumetricProposal:
          res = render_pixel_proposal(ctx, ray, rng);
          break;
        case RenderMode::kVolumetricOccupancy:
          res = render_pixel_march(ctx, ray);
          break;
        case RenderMode::kVolumetricDense:
          res = render_pixel_dense(ctx, ray);
          break;
        case RenderMode::kHybrid:
          res = render_pixel_hybrid(ctx, ray);
          break;
      }
      fb.color.at(u, v, 0) = res.rgb.x;
      fb.color.at(u, v, 1) = res.rgb.y;
      fb.color.at(u, v, 2) = res.rgb.z;
      fb.opacity[pix] = res.opacity;
      fb.depth[pix] = res.opacity > 1e-6 ? res.depth / res.opacity : 0.0;
      fb.samples[pix] = res.samples;
    }
  });

  fb.stats = summarize_samples(fb.samples);
  return fb;
}

} // namespace svf
