#include "svf/sampling.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include "svf/rendering.hpp"
#include "svf/scenes.hpp"

namespace svf {

int64_t OccupancyGrid::voxel_of(const Vec3& x) const {
  Vec3 ext = bounds.extent();
  int iv[3];
  for (int a = 0; a < 3; ++a) {
    double u = (x[a] - bounds.lo[a]) / ext[a];
    if (u < 0.0 || u > 1.0) return -1;
    iv[a] = std::min(static_cast<int>(u * res), res - 1);
  }
  return index(iv[0], iv[1], iv[2]);
}

int64_t OccupancyGrid::count_occupied() const {
  int64_t n = 0;
  for (uint8_t b : occ) n += b != 0;
  return n;
}

void dda_traverse(const OccupancyGrid& grid, const Ray& ray, std::vector<VoxelSpan>& out) {
  double ta, tb;
  if (!intersect_aabb(grid.bounds, ray.origin, ray.dir, ray.t_near, ray.t_far, ta, tb)) return;
  if (!(tb > ta)) return;

  Vec3 cell = grid.bounds.extent() / static_cast<double>(grid.res);
  // Entry voxel from a point nudged inside the overlap to dodge boundary ties.
  double t_probe = ta + std::min(1e-9 * (tb - ta + 1.0), 0.5 * (tb - ta));
  Vec3 p = ray.at(t_probe);
  int iv[3], step[3];
  double t_max[3], t_delta[3];
  for (int a = 0; a < 3; ++a) {
    double u = (p[a] - grid.bounds.lo[a]) / cell[a];
    iv[a] = std::clamp(static_cast<int>(std::floor(u)), 0, grid.res - 1);
    double d = ray.dir[a];
    if (d > 0.0) {
      step[a] = 1;
      t_max[a] = ta + (grid.bounds.lo[a] + (iv[a] + 1) * cell[a] - ray.at(ta)[a]) / d;
      t_delta[a] = cell[a] / d;
    } else if (d < 0.0) {
      step[a] = -1;
      t_max[a] = ta + (grid.bounds.lo[a] + iv[a] * cell[a] - ray.at(ta)[a]) / d;
      t_delta[a] = -cell[a] / d;
    } else {
      step[a] = 0;
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }

  double t_cur = ta;
  while (t_cur < tb) {
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    double t_exit = std::min(t_max[axis], tb);
    if (t_exit > t_cur) out.push_back({iv[0], iv[1], iv[2], t_cur, t_exit});
    if (t_max[axis] >= tb) break;
    t_cur = t_max[axis];
    iv[axis] += step[axis];
    if (iv[axis] < 0 || iv[axis] >= grid.res) break;
    t_max[axis] += t_delta[axis];
  }
}

void stratified_bins(const Ray& ray, int n, CounterRng& rng,
                     std::vector<double>& t0, std::vector<double>& t1,
                     std::vector<double>& tc) {
  t0.resize(n);
  t1.resize(n);
  tc.resize(n);
  double width = (ray.t_far - ray.t_near) / n;
  for (int i = 0; i < n; ++i) {
    t0[i] = ray.t_near + i * width;
    t1[i] = t0[i] + width;
    tc[i] = t0[i] + rng.uniform() * width;
  }
}

void inverse_cdf_sample(const std::vector<double>& t0, const std::vector<double>& t1,
                        const std::vector<double>& mass, int n, CounterRng& rng,
                        std::vector<double>& out_t) {
  out_t.resize(n);
  int n_bins = static_cast<int>(mass.size());
  double total = 0.0;
  for (double m : mass) total += std::isfinite(m) && m > 0.0 ? m : 0.0;

  if (!(total > 0.0)) {
    // Nothing to guide placement; spread stratified over the whole span.
    double lo = t0.front(), span = t1.back() - t0.front();
    for (int j = 0; j < n; ++j) out_t[j] = lo + (j + rng.uniform()) / n * span;
    return;
  }

  int bin = 0;
  double cdf_lo = 0.0; // cumulative mass strictly before `bin`
  for (int j = 0; j < n; ++j) {
    double u = (j + rng.uniform()) / n * total;
    while (bin + 1 < n_bins) {
      double m = std::isfinite(mass[bin]) && mass[bin] > 0.0 ? mass[bin] : 0.0;
      if (u < cdf_lo + m) break;
      cdf_lo += m;
      ++bin;
    }
    double m = std::isfinite(mass[bin]) && mass[bin] > 0.0 ? mass[bin] : 0.0;
    double frac = m > 0.0 ? std::clamp((u - cdf_lo) / m, 0.0, 1.0) : 0.5;
    out_t[j] = t0[bin] + frac * (t1[bin] - t0[bin]);
  }
}

ProposalSamples proposal_sample(const FieldModel& model, const Ray& ray,
                                int n_coarse, int n_fine, CounterRng& rng) {
  ProposalSamples s;
  stratified_bins(ray, n_coarse, rng, s.coarse_t0, s.coarse_t1, s.coarse_tc);
  s.coarse_mass.resize(n_coarse);
  for (int i = 0; i < n_coarse; ++i) {
    double sigma = proposal_density(model, ray.at(s.coarse_tc[i]));
    s.coarse_mass[i] = sigma * (s.coarse_t1[i] - s.coarse_t0[i]);
  }
  inverse_cdf_sample(s.coarse_t0, s.coarse_t1, s.coarse_mass, n_fine, rng, s.fine_t);
  s.all_t.reserve(n_coarse + n_fine);
  s.all_t.insert(s.all_t.end(), s.coarse_tc.begin(), s.coarse_tc.end());
  s.all_t.insert(s.all_t.end(), s.fine_t.begin(), s.fine_t.end());
  std::sort(s.all_t.begin(), s.all_t.end());
  return s;
}

void march_fixed(const Ray& ray, const OccupancyGrid& grid, double step,
                 std::vector<double>& out_t) {
  if (!(step > 0.0)) throw std::invalid_argument("march step must be positive");
  std::vector<VoxelSpan> spans;
  dda_traverse(grid, ray, spans);
  int64_t last_k = -1;
  for (const VoxelSpan& sp : spans) {
    if (!grid.occ[grid.index(sp.ix, sp.iy, sp.iz)]) continue;
    // Lattice points near + (k + 0.5) * step inside [sp.t0, sp.t1).
    double k0 = std::ceil((sp.t0 - ray.t_near) / step - 0.5);
    int64_t k = std::max<int64_t>(static_cast<int64_t>(k0), last_k + 1);
    for (;; ++k) {
      double t = ray.t_near + (k + 0.5) * step;
      if (t >= sp.t1 || t >= ray.t_far) break;
      if (t < sp.t0) continue;
      out_t.push_back(t);
      last_k = k;
    }
  }
}

HitRecord sphere_trace(const FieldModel& model, const OccupancyGrid& grid,
                       const Ray& ray, const TraceConfig& cfg,
                       const PresummedCache* sdf_cache) {
  HitRecord rec;
  std::vector<VoxelSpan> spans;
  dda_traverse(grid, ray, spans);
  double t_start = -1.0;
  for (const VoxelSpan& sp : spans) {
    if (grid.occ[grid.index(sp.ix, sp.iy, sp.iz)]) {
      t_start = sp.t0;
      break;
    }
  }
  if (t_start < 0.0) {
    rec.status = TraceStatus::kMiss;
    return rec;
  }

  double t = std::max(ray.t_near, t_start);
  for (int it = 0; it < cfg.max_steps; ++it) {
    if (t > ray.t_far) {
      rec.status = TraceStatus::kMiss;
      rec.t = t;
      return rec;
    }
    Vec3 x = ray.at(t);
    double beta = model.beta_source == BetaSource::kGrid ? model.surfaceness.beta_at(x)
                                                         : model.beta_bar();
    if (beta <= cfg.beta_gate) {
      rec.status = TraceStatus::kLowBeta;
      rec.t = t;
      rec.pos = x;
      return rec;
    }
    double fp = contracted_footprint(x, t, ray.pixel_theta);
    double f = eval_sdf(model, x, fp, sdf_cache);
    ++rec.steps;
    if (!std::isfinite(f)) throw std::runtime_error("sphere trace hit a non-finite SDF value");
    if (f <= cfg.hit_epsilon) {
      rec.status = TraceStatus::kHit;
      rec.t = t;
      rec.pos = x;
      return rec;
    }
    t += cfg.step_scale * f;
  }
  rec.status = TraceStatus::kCapped;
  rec.t = t;
  rec.pos = ray.at(t);
  return rec;
}

OccupancyGrid bake_occupancy(const FieldModel& model, const SceneDataset& dataset,
                             double threshold, int n_coarse, int n_fine,
                             ThreadPool* pool) {
  OccupancyGrid grid;
  grid.res = 128;
  grid.bounds = dataset.bounds;
  grid.occ.assign(static_cast<size_t>(grid.res) * grid.res * grid.res, 0);

  PresummedCache sdf_cache = build_presummed_cache(model.store, model.sdf_encoder, 0);

  for (int view : dataset.train_idx) {
    const Camera& cam = dataset.cameras[view];
    int64_t n_pix = static_cast<int64_t>(cam.width) * cam.height;
    parallel_for_chunks(pool, n_pix, kDefaultChunks,
                        [&](int /*chunk*/, int64_t begin, int64_t end) {
      std::vector<double> sigma, weight;
      for (int64_t pix = begin; pix < end; ++pix) {
        int u = static_cast<int>(pix % cam.width);
        int v = static_cast<int>(pix / cam.width);
        CounterRng rng{model.cfg.seed, rng_stream::kBake,
                       (static_cast<uint64_t>(view) << 32) | static_cast<uint64_t>(pix)};
        Ray ray = generate_ray(cam, u + 0.5, v + 0.5, dataset.bounds);
        ProposalSamples ps = proposal_sample(model, ray, n_coarse, n_fine, rng);
        int n = static_cast<int>(ps.all_t.size());
        sigma.resize(n);
        weight.resize(n);
        double trans = 1.0;
        for (int i = 0; i < n; ++i) {
          Vec3 x = ray.at(ps.all_t[i]);
          double fp = contracted_footprint(x, ps.all_t[i], ray.pixel_theta);
          sigma[i] = eval_density(model, x, fp, &sdf_cache);
          double delta = (i + 1 < n ? ps.all_t[i + 1] : ray.t_far) - ps.all_t[i];
          double alpha = -std::expm1(-sigma[i] * delta);
          weight[i] = trans * alpha;
          trans *= 1.0 - alpha;
        }
        for (int i = 0; i < n; ++i) {
          if (std::max(weight[i], sigma[i]) <= threshold) continue;
          int64_t vi = grid.voxel_of(ray.at(ps.all_t[i]));
          if (vi >= 0) std::atomic_ref<uint8_t>(grid.occ[vi]).store(1, std::memory_order_relaxed);
        }
      }
    });
  }

  if (grid.count_occupied() == 0)
    throw std::runtime_error("occupancy bake marked no voxels, the model likely diverged");
  return grid;
}

SampleStats summarize_samples(const std::vector<double>& per_ray_counts) {
  SampleStats st;
  if (per_ray_counts.empty()) return st;
  std::vector<double> sorted = per_ray_counts;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double c : sorted) sum += c;
  st.total = static_cast<int64_t>(sum);
  st.mean = sum / sorted.size();
  auto pct = [&](double q) {
    double idx = q * (sorted.size() - 1);
    size_t lo = static_cast<size_t>(idx);
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (idx - lo) * (sorted[hi] - sorted[lo]);
  };
  st.p50 = pct(0.50);
  st.p90 = pct(0.90);
  st.p99 = pct(0.99);
  return st;
}

} // namespace svf
