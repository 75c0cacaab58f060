#include "svf/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace svf {

Vec3 contract_point(const Vec3& x) {
  double n = max_abs_component(x);
  if (n <= 1.0) return x;
  int j = 0;
  for (int a = 1; a < 3; ++a)
    if (std::fabs(x[a]) > std::fabs(x[j])) j = a;
  Vec3 out;
  for (int a = 0; a < 3; ++a) {
    if (a == j) {
      double s = x[a] >= 0.0 ? 1.0 : -1.0;
      out[a] = (2.0 - 1.0 / std::fabs(x[a])) * s;
    } else {
      out[a] = x[a] / n;
    }
  }
  return out;
}

EncoderHead make_encoder_head(ParameterStore& store, const std::string& prefix,
                              const std::vector<int>& grid_res,
                              const std::vector<int>& plane_res,
                              uint64_t seed, double init_scale) {
  EncoderHead head;
  for (size_t l = 0; l < grid_res.size(); ++l) {
    GridLevel g;
    g.res = grid_res[l];
    g.tensor = store.add(prefix + ".grid.L" + std::to_string(l),
                         {g.res, g.res, g.res, kFeatDim}, UpdateMode::kSparseTouch, kFeatDim);
    store.init_uniform(g.tensor, seed, init_scale);
    head.grid_levels.push_back(g);
  }
  static const char* plane_names[3] = {"xy", "yz", "zx"};
  for (size_t l = 0; l < plane_res.size(); ++l) {
    PlaneLevel p;
    p.res = plane_res[l];
    for (int a = 0; a < 3; ++a) {
      p.tensors[a] = store.add(prefix + ".plane.L" + std::to_string(l) + "." + plane_names[a],
                               {p.res, p.res, kFeatDim}, UpdateMode::kSparseTouch, kFeatDim);
      store.init_uniform(p.tensors[a], seed, init_scale);
    }
    head.plane_levels.push_back(p);
  }
  return head;
}

double antialias_level(double footprint, int base_res) {
  if (footprint <= 0.0) return 1e9; // degenerate footprint: finest level
  return -std::log2(2.0 * base_res * footprint);
}

double contracted_footprint(const Vec3& world, double t, double pixel_theta) {
  // Max-stretch estimate of the contraction Jacobian from three axis probes.
  const double eps = 1e-3;
  Vec3 c0 = contract_point(world);
  double stretch = 0.0;
  for (int a = 0; a < 3; ++a) {
    Vec3 probe = world;
    probe[a] += eps;
    stretch = std::max(stretch, length(contract_point(probe) - c0) / eps);
  }
  double r_world = std::max(t, 0.0) * pixel_theta;
  return std::max(r_world * stretch, 1e-12);
}

void level_weights(double L, int n_levels, double* w) {
  L = std::clamp(L, 0.0, static_cast<double>(n_levels - 1));
  for (int l = 0; l < n_levels; ++l) w[l] = std::clamp(L - l + 1.0, 0.0, 1.0);
}

namespace {

// Texel-center convention: coordinate u in [0,1) samples position u*res - 0.5
// with edge clamping.
struct LinearCoord {
  int i0, i1;
  double f;
};

inline LinearCoord linear_coord(double c, int res) {
  double u = (c + 2.0) * 0.25; // contracted (-2,2) -> (0,1)
  double pos = u * res - 0.5;
  double fl = std::floor(pos);
  LinearCoord lc;
  lc.f = pos - fl;
  int i = static_cast<int>(fl);
  lc.i0 = std::clamp(i, 0, res - 1);
  lc.i1 = std::clamp(i + 1, 0, res - 1);
  return lc;
}

inline void gather_grid(const double* data, int res, const Vec3& c, double wl, double* acc) {
  LinearCoord cx = linear_coord(c.x, res);
  LinearCoord cy = linear_coord(c.y, res);
  LinearCoord cz = linear_coord(c.z, res);
  for (int dx = 0; dx < 2; ++dx) {
    double wx = dx ? cx.f : 1.0 - cx.f;
    int ix = dx ? cx.i1 : cx.i0;
    for (int dy = 0; dy < 2; ++dy) {
      double wy = dy ? cy.f : 1.0 - cy.f;
      int iy = dy ? cy.i1 : cy.i0;
      for (int dz = 0; dz < 2; ++dz) {
        double wz = dz ? cz.f : 1.0 - cz.f;
        int iz = dz ? cz.i1 : cz.i0;
        double w = wl * wx * wy * wz;
        const double* t = data + ((static_cast<int64_t>(ix) * res + iy) * res + iz) * kFeatDim;
        for (int k = 0; k < kFeatDim; ++k) acc[k] += w * t[k];
      }
    }
  }
}

inline void scatter_grid(ParameterStore& store, TensorId id, int res, const Vec3& c,
                         double wl, const double* d) {
  double* grad = store.grad(id);
  LinearCoord cx = linear_coord(c.x, res);
  LinearCoord cy = linear_coord(c.y, res);
  LinearCoord cz = linear_coord(c.z, res);
  for (int dx = 0; dx < 2; ++dx) {
    double wx = dx ? cx.f : 1.0 - cx.f;
    int ix = dx ? cx.i1 : cx.i0;
    for (int dy = 0; dy < 2; ++dy) {
      double wy = dy ? cy.f : 1.0 - cy.f;
      int iy = dy ? cy.i1 : cy.i0;
      for (int dz = 0; dz < 2; ++dz) {
        double wz = dz ? cz.f : 1.0 - cz.f;
        int iz = dz ? cz.i1 : cz.i0;
        double w = wl * wx * wy * wz;
        int64_t row = (static_cast<int64_t>(ix) * res + iy) * res + iz;
        store.touch_row(id, row);
        double* t = grad + row * kFeatDim;
        for (int k = 0; k < kFeatDim; ++k) t[k] += w * d[k];
      }
    }
  }
}

inline void plane_uv(const Vec3& c, int plane, double& u, double& v) {
  switch (plane) {
    case 0: u = c.x; v = c.y; break;
    case 1: u = c.y; v = c.z; break;
    default: u = c.z; v = c.x; break;
  }
}

inline void gather_plane(const double* data, int res, double u, double v, double wl, double* acc) {
  LinearCoord cu = linear_coord(u, res);
  LinearCoord cv = linear_coord(v, res);
  for (int du = 0; du < 2; ++du) {
    double wu = du ? cu.f : 1.0 - cu.f;
    int iu = du ? cu.i1 : cu.i0;
    for (int dv = 0; dv < 2; ++dv) {
      double wv = dv ? cv.f : 1.0 - cv.f;
      int iv = dv ? cv.i1 : cv.i0;
      double w = wl * wu * wv;
      const double* t = data + (static_cast<int64_t>(iu) * res + iv) * kFeatDim;
      for (int k = 0; k < kFeatDim; ++k) acc[k] += w * t[k];
    }
  }
}

inline void scatter_plane(ParameterStore& store, TensorId id, int res, double u, double v,
                          double wl, const double* d) {
  double* grad = store.grad(id);
  LinearCoord cu = linear_coord(u, res);
  LinearCoord cv = linear_coord(v, res);
  for (int du = 0; du < 2; ++du) {
    double wu = du ? cu.f : 1.0 - cu.f;
    int iu = du ? cu.i1 : cu.i0;
    for (int dv = 0; dv < 2; ++dv) {
      double wv = dv ? cv.f : 1.0 - cv.f;
      int iv = dv ? cv.i1 : cv.i0;
      double w = wl * wu * wv;
      int64_t row = static_cast<int64_t>(iu) * res + iv;
      store.touch_row(id, row);
      double* t = grad + row * kFeatDim;
      for (int k = 0; k < kFeatDim; ++k) t[k] += w * d[k];
    }
  }
}

} // namespace

void encode_point(const ParameterStore& store, const EncoderHead& head,
                  const Vec3& world, double level_grid, double level_plane,
                  double* out) {
  Vec3 c = contract_point(world);
  for (int k = 0; k < kEncodeDim; ++k) out[k] = 0.0;

  int ng = static_cast<int>(head.grid_levels.size());
  if (ng > 0) {
    double w[16];
    level_weights(level_grid, ng, w);
    for (int l = 0; l < ng; ++l) {
      if (w[l] == 0.0) continue;
      gather_grid(store.value(head.grid_levels[l].tensor), head.grid_levels[l].res, c, w[l], out);
    }
  }
  int np = static_cast<int>(head.plane_levels.size());
  if (np > 0) {
    double w[16];
    level_weights(level_plane, np, w);
    for (int p = 0; p < 3; ++p) {
      double u, v;
      plane_uv(c, p, u, v);
      double* acc = out + kFeatDim * (1 + p);
      for (int l = 0; l < np; ++l) {
        if (w[l] == 0.0) continue;
        gather_plane(store.value(head.plane_levels[l].tensors[p]), head.plane_levels[l].res,
                     u, v, w[l], acc);
      }
    }
  }
}

void encode_point_scatter(ParameterStore& store, const EncoderHead& head,
                          const Vec3& world, double level_grid, double level_plane,
                          const double* d_out) {
  Vec3 c = contract_point(world);
  int ng = static_cast<int>(head.grid_levels.size());
  if (ng > 0) {
    double w[16];
    level_weights(level_grid, ng, w);
    for (int l = 0; l < ng; ++l) {
      if (w[l] == 0.0) continue;
      scatter_grid(store, head.grid_levels[l].tensor, head.grid_levels[l].res, c, w[l], d_out);
    }
  }
  int np = static_cast<int>(head.plane_levels.size());
  if (np > 0) {
    double w[16];
    level_weights(level_plane, np, w);
    for (int p = 0; p < 3; ++p) {
      double u, v;
      plane_uv(c, p, u, v);
      const double* d = d_out + kFeatDim * (1 + p);
      for (int l = 0; l < np; ++l) {
        if (w[l] == 0.0) continue;
        scatter_plane(store, head.plane_levels[l].tensors[p], head.plane_levels[l].res,
                      u, v, w[l], d);
      }
    }
  }
}

PresummedCache build_presummed_cache(const ParameterStore& store, const EncoderHead& head,
                                     int64_t step) {
  PresummedCache cache;
  cache.n_grid_levels = static_cast<int>(head.grid_levels.size());
  cache.n_plane_levels = static_cast<int>(head.plane_levels.size());
  cache.built_at_step = step;
  int n = std::max(cache.n_grid_levels, cache.n_plane_levels);
  cache.levels.resize(n);

  // Each cumulative level is the previous one resampled to this level's
  // resolution plus this level's own texels.
  for (int l = 0; l < cache.n_grid_levels; ++l) {
    PresummedLevel& out = cache.levels[l];
    int res = head.grid_levels[l].res;
    out.grid_res = res;
    out.grid.assign(static_cast<size_t>(res) * res * res * kFeatDim, 0.0);
    const double* own = store.value(head.grid_levels[l].tensor);
    const PresummedLevel* prev = l > 0 ? &cache.levels[l - 1] : nullptr;
    for (int ix = 0; ix < res; ++ix) {
      for (int iy = 0; iy < res; ++iy) {
        for (int iz = 0; iz < res; ++iz) {
          size_t o = ((static_cast<size_t>(ix) * res + iy) * res + iz) * kFeatDim;
          for (int k = 0; k < kFeatDim; ++k) out.grid[o + k] = own[o + k];
          if (prev) {
            // Texel center in contracted coordinates.
            Vec3 c{((ix + 0.5) / res) * 4.0 - 2.0,
                   ((iy + 0.5) / res) * 4.0 - 2.0,
                   ((iz + 0.5) / res) * 4.0 - 2.0};
            gather_grid(prev->grid.data(), prev->grid_res, c, 1.0, &out.grid[o]);
          }
        }
      }
    }
  }
  for (int l = 0; l < cache.n_plane_levels; ++l) {
    PresummedLevel& out = cache.levels[l];
    int res = head.plane_levels[l].res;
    out.plane_res = res;
    const PresummedLevel* prev = l > 0 ? &cache.levels[l - 1] : nullptr;
    for (int p = 0; p < 3; ++p) {
      out.plane[p].assign(static_cast<size_t>(res) * res * kFeatDim, 0.0);
      const double* own = store.value(head.plane_levels[l].tensors[p]);
      for (int iu = 0; iu < res; ++iu) {
        for (int iv = 0; iv < res; ++iv) {
          size_t o = (static_cast<size_t>(iu) * res + iv) * kFeatDim;
          for (int k = 0; k < kFeatDim; ++k) out.plane[p][o + k] = own[o + k];
          if (prev) {
            double u = ((iu + 0.5) / res) * 4.0 - 2.0;
            double v = ((iv + 0.5) / res) * 4.0 - 2.0;
            gather_plane(prev->plane[p].data(), prev->plane_res, u, v, 1.0, &out.plane[p][o]);
          }
        }
      }
    }
  }
  return cache;
}

void encode_point_cached(const PresummedCache& cache, const Vec3& world,
                         double level_grid, double level_plane, double* out) {
  Vec3 c = contract_point(world);
  for (int k = 0; k < kEncodeDim; ++k) out[k] = 0.0;

  if (cache.n_grid_levels > 0) {
    double L = std::clamp(level_grid, 0.0, cache.n_grid_levels - 1.0);
    int k0 = static_cast<int>(std::floor(L));
    if (k0 >= cache.n_grid_levels - 1) k0 = cache.n_grid_levels - 1;
    double t = L - k0;
    const PresummedLevel& a = cache.levels[k0];
    gather_grid(a.grid.data(), a.grid_res, c, 1.0 - t, out);
    if (t > 0.0) {
      const PresummedLevel& b = cache.levels[k0 + 1];
      gather_grid(b.grid.data(), b.grid_res, c, t, out);
    }
  }
  if (cache.n_plane_levels > 0) {
    double L = std::clamp(level_plane, 0.0, cache.n_plane_levels - 1.0);
    int k0 = static_cast<int>(std::floor(L));
    if (k0 >= cache.n_plane_levels - 1) k0 = cache.n_plane_levels - 1;
    double t = L - k0;
    for (int p = 0; p < 3; ++p) {
      double u, v;
      plane_uv(c, p, u, v);
      double* acc = out + kFeatDim * (1 + p);
      const PresummedLevel& a = cache.levels[k0];
      gather_plane(a.plane[p].data(), a.plane_res, u, v, 1.0 - t, acc);
      if (t > 0.0) {
        const PresummedLevel& b = cache.levels[k0 + 1];
        gather_plane(b.plane[p].data(), b.plane_res, u, v, t, acc);
      }
    }
  }
}

void sh_basis(const Vec3& dir, double* out) {
  double x = dir.x, y = dir.y, z = dir.z;
  double xx = x * x, yy = y * y, zz = z * z;
  out[0] = 0.28209479177387814;
  out[1] = 0.4886025119029199 * y;
  out[2] = 0.4886025119029199 * z;
  out[3] = 0.4886025119029199 * x;
  out[4] = 1.0925484305920792 * x * y;
  out[5] = 1.0925484305920792 * y * z;
  out[6] = 0.31539156525252005 * (3.0 * zz - 1.0);
  out[7] = 1.0925484305920792 * x * z;
  out[8] = 0.5462742152960396 * (xx - yy);
  out[9] = 0.5900435899266435 * y * (3.0 * xx - yy);
  out[10] = 2.890611442640554 * x * y * z;
  out[11] = 0.4570457994644658 * y * (5.0 * zz - 1.0);
  out[12] = 0.3731763325901154 * z * (5.0 * zz - 3.0);
  out[13] = 0.4570457994644658 * x * (5.0 * zz - 1.0);
  out[14] = 1.445305721320277 * z * (xx - yy);
  out[15] = 0.5900435899266435 * x * (xx - 3.0 * yy);
}

} // namespace svf
