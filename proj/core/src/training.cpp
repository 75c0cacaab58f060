#include "svf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "svf/rendering.hpp"
#include "svf/rng.hpp"

namespace svf {

namespace {

using nlohmann::json;

// Footprint small enough to land past the finest level once clamped.
constexpr double kPointFootprint = 1e-6;

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

void log_line(std::ostream* log, const json& j) {
  if (log) *log << j.dump() << "\n" << std::flush;
}

// Appends one ray's samples to the batch; returns the first sample row.
// delta_cap > 0 bounds each interval (marching through sparse voxels leaves
// gaps that should not count as absorbing length).
int64_t append_samples(RayBatch& b, const FieldModel& model, const Ray& ray,
                       const std::vector<double>& ts, double delta_cap,
                       bool spatial_beta) {
  int64_t first = b.segs.sample_count();
  double shrow[kShDim];
  sh_basis(ray.dir, shrow);
  int n = static_cast<int>(ts.size());
  for (int i = 0; i < n; ++i) {
    double t = ts[i];
    Vec3 x = ray.at(t);
    b.xyz.insert(b.xyz.end(), {x.x, x.y, x.z});
    b.t.push_back(t);
    double gap = (i + 1 < n) ? ts[i + 1] - t : ray.t_far - t;
    if (delta_cap > 0.0) gap = std::min(gap, delta_cap);
    gap = std::max(gap, 0.0);
    b.delta.push_back(gap);
    double fp = contracted_footprint(x, t, ray.pixel_theta);
    b.level_grid.push_back(antialias_level(fp, model.sdf_encoder.grid_base_res()));
    b.level_plane.push_back(antialias_level(fp, model.sdf_encoder.plane_base_res()));
    b.color_level_grid.push_back(antialias_level(fp, model.color_encoder.grid_base_res()));
    b.color_level_plane.push_back(antialias_level(fp, model.color_encoder.plane_base_res()));
    b.base.push_back(model.sdf_residual_base(x));
    b.sh.insert(b.sh.end(), shrow, shrow + kShDim);
    b.field_t0.push_back(t);
    b.field_t1.push_back(t + gap);
    if (spatial_beta) b.beta.push_back(model.surfaceness.beta_at(x));
  }
  b.segs.push_ray(n);
  return first;
}

void pick_eikonal(RayBatch& b, const Ray& ray, int64_t first, int n, int per_ray,
                  EikonalMode mode, CounterRng& rng) {
  if (n == 0) return;
  int k = per_ray <= 0 ? n : std::min(per_ray, n);
  for (int j = 0; j < k; ++j) {
    int64_t row = per_ray <= 0
                      ? first + j
                      : first + static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(n)));
    b.eik_sample.push_back(row);
    double d = std::max(b.t[row], ray.t_near);
    b.eik_eta.push_back(mode == EikonalMode::kUniform ? 1.0 : 1.0 / (d * d));
  }
}

// Expands the picked centers into the six-probe block layout the eikonal op
// expects: all +x rows, then all -x rows, and so on.
void finalize_eikonal_probes(RayBatch& b, const FieldModel& model) {
  int64_t m = static_cast<int64_t>(b.eik_sample.size());
  if (m == 0) return;
  double eps = model.cfg.fd_epsilon;
  const double offs[6][3] = {{eps, 0, 0}, {-eps, 0, 0}, {0, eps, 0},
                             {0, -eps, 0}, {0, 0, eps}, {0, 0, -eps}};
  b.eik_probe.resize(static_cast<size_t>(6 * m) * 3);
  b.eik_probe_level_grid.resize(static_cast<size_t>(6 * m));
  b.eik_probe_level_plane.resize(static_cast<size_t>(6 * m));
  b.eik_probe_base.resize(static_cast<size_t>(6 * m));
  for (int block = 0; block < 6; ++block) {
    for (int64_t j = 0; j < m; ++j) {
      int64_t row = b.eik_sample[j];
      Vec3 p{b.xyz[row * 3] + offs[block][0], b.xyz[row * 3 + 1] + offs[block][1],
             b.xyz[row * 3 + 2] + offs[block][2]};
      int64_t out = block * m + j;
      b.eik_probe[out * 3] = p.x;
      b.eik_probe[out * 3 + 1] = p.y;
      b.eik_probe[out * 3 + 2] = p.z;
      b.eik_probe_level_grid[out] = b.level_grid[row];
      b.eik_probe_level_plane[out] = b.level_plane[row];
      b.eik_probe_base[out] = model.sdf_residual_base(p);
    }
  }
}

struct RayPick {
  Ray ray;
  int view = 0;
  int px = 0, py = 0;
};

RayPick pick_ray(const SceneDataset& data, CounterRng& rng) {
  RayPick p;
  p.view = data.train_idx[rng.uniform_index(data.train_idx.size())];
  const Camera& cam = data.cameras[p.view];
  p.px = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(cam.width)));
  p.py = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(cam.height)));
  p.ray = generate_ray(cam, p.px + 0.5, p.py + 0.5, data.bounds);
  return p;
}

void push_target(RayBatch& b, const SceneDataset& data, const RayPick& p) {
  const Image& img = data.images[p.view];
  for (int c = 0; c < 3; ++c) b.target.push_back(img.at(p.px, p.py, c));
}

} // namespace

RayBatch assemble_batch_stage1(const FieldModel& model, const SceneDataset& data,
                               const TrainConfig& cfg, uint64_t seed, int64_t step) {
  if (data.train_idx.empty()) throw std::runtime_error("dataset has no training views");
  RayBatch b;
  for (int r = 0; r < cfg.rays_per_batch; ++r) {
    // 1024 counters of headroom per ray keeps draws collision-free.
    uint64_t ctr =
        (static_cast<uint64_t>(step) * cfg.rays_per_batch + static_cast<uint64_t>(r)) * 1024;
    CounterRng pick(seed, rng_stream::kRayPick, ctr);
    RayPick rp = pick_ray(data, pick);
    CounterRng jitter(seed, rng_stream::kCoarseJitter, ctr);
    ProposalSamples ps = proposal_sample(model, rp.ray, cfg.n_coarse, cfg.n_fine, jitter);
    int64_t first = append_samples(b, model, rp.ray, ps.all_t, 0.0, false);
    pick_eikonal(b, rp.ray, first, static_cast<int>(ps.all_t.size()),
                 cfg.eik_samples_per_ray, cfg.eik_mode, pick);

    int nc = static_cast<int>(ps.coarse_tc.size());
    b.prop_segs.push_ray(nc);
    for (int i = 0; i < nc; ++i) {
      Vec3 c = rp.ray.at(ps.coarse_tc[i]);
      b.prop_xyz.insert(b.prop_xyz.end(), {c.x, c.y, c.z});
      b.prop_t0.push_back(ps.coarse_t0[i]);
      b.prop_t1.push_back(ps.coarse_t1[i]);
      b.prop_width.push_back(ps.coarse_t1[i] - ps.coarse_t0[i]);
    }
    push_target(b, data, rp);
  }
  finalize_eikonal_probes(b, model);
  return b;
}

RayBatch assemble_batch_stage2(const FieldModel& model, const SceneDataset& data,
                               const OccupancyGrid& occ, const TrainConfig& cfg,
                               uint64_t seed, int64_t step) {
  if (data.train_idx.empty()) throw std::runtime_error("dataset has no training views");
  if (occ.empty()) throw std::runtime_error("stage-2 batch needs a baked occupancy grid");
  RayBatch b;
  double stepw = cfg.stage2_step_m / model.scene_scale;
  std::vector<double> ts;
  for (int r = 0; r < cfg.rays_per_batch; ++r) {
    uint64_t ctr =
        (static_cast<uint64_t>(step) * cfg.rays_per_batch + static_cast<uint64_t>(r)) * 1024;
    CounterRng pick(seed, rng_stream::kRayPick, ctr);
    RayPick rp = pick_ray(data, pick);
    ts.clear();
    march_fixed(rp.ray, occ, stepw, ts);
    if (ts.empty()) continue; // ray never touches occupied space
    if (static_cast<int>(ts.size()) > cfg.stage2_max_samples) {
      // Even stride keeps front-to-back coverage under the cap.
      std::vector<double> kept;
      kept.reserve(cfg.stage2_max_samples);
      double stride = static_cast<double>(ts.size()) / cfg.stage2_max_samples;
      for (int i = 0; i < cfg.stage2_max_samples; ++i) {
        kept.push_back(ts[static_cast<size_t>(i * stride)]);
      }
      ts.swap(kept);
    }
    int64_t first = append_samples(b, model, rp.ray, ts, stepw,
                                   model.beta_source == BetaSource::kGrid);
    pick_eikonal(b, rp.ray, first, static_cast<int>(ts.size()), cfg.eik_samples_per_ray,
                 cfg.eik_mode, pick);
    push_target(b, data, rp);
  }
  if (b.n_rays() == 0) {
    throw std::runtime_error("no training rays intersected occupied space");
  }
  finalize_eikonal_probes(b, model);
  return b;
}

LossSlots build_total_loss(Tape& tape, const FieldModel& model, const RayBatch& batch,
                           const TrainConfig& cfg, std::vector<double>* gnorm_out) {
  int64_t n = batch.n_samples();
  int64_t rays = batch.n_rays();
  if (rays == 0 || n == 0) throw std::invalid_argument("loss needs a non-empty batch");
  LossSlots out;

  SlotId feat = tape.encode(&model.sdf_encoder, n, batch.xyz.data(), batch.level_grid.data(),
                            batch.level_plane.data(), "sdf.encode");
  SlotId f = tape.add_constants(tape_mlp(tape, model.active_sdf_mlp(), feat), batch.base.data());

  SlotId sigma;
  if (model.cfg.direct_density) {
    sigma = tape.density(f, DensityMode::kDirectSoftplus, -1, nullptr);
  } else if (model.beta_source == BetaSource::kGrid) {
    if (static_cast<int64_t>(batch.beta.size()) != n) {
      throw std::logic_error("spatial beta mode needs per-sample beta in the batch");
    }
    sigma = tape.density(f, DensityMode::kSdfLaplace, -1, batch.beta.data());
  } else {
    SlotId beta = tape.exp_elem(tape.param_scalar(model.log_beta_bar));
    sigma = tape.density(f, DensityMode::kSdfLaplace, beta, nullptr);
  }
  out.weights = tape.render_weights(sigma, batch.segs, batch.delta.data());

  SlotId cfeat = tape.encode(&model.color_encoder, n, batch.xyz.data(),
                             batch.color_level_grid.data(), batch.color_level_plane.data(),
                             "color.encode");
  SlotId shin = tape.input(n, kShDim, batch.sh.data(), "sh");
  SlotId rgb = tape.sigmoid(tape_mlp(tape, model.active_color_mlp(), tape.concat(cfeat, shin)));
  SlotId pred = tape.weighted_color_sum(out.weights, rgb, batch.segs);
  out.photo = tape.mse_loss(pred, batch.target.data());

  std::vector<std::pair<SlotId, double>> terms{{out.photo, 1.0}};

  int64_t m = static_cast<int64_t>(batch.eik_sample.size());
  if (m > 0) {
    if (gnorm_out) gnorm_out->resize(m);
    SlotId pf = tape.encode(&model.sdf_encoder, 6 * m, batch.eik_probe.data(),
                            batch.eik_probe_level_grid.data(),
                            batch.eik_probe_level_plane.data(), "eik.encode");
    SlotId probe_f =
        tape.add_constants(tape_mlp(tape, model.active_sdf_mlp(), pf), batch.eik_probe_base.data());
    out.eik = tape.eikonal_loss(probe_f, m, model.cfg.fd_epsilon, batch.eik_eta.data(),
                                1.0 / static_cast<double>(rays),
                                gnorm_out ? gnorm_out->data() : nullptr);
    terms.push_back({out.eik, cfg.lambda_eik});
  } else if (gnorm_out) {
    gnorm_out->clear();
  }

  int64_t p = static_cast<int64_t>(batch.prop_xyz.size()) / 3;
  if (p > 0) {
    std::vector<double> zeros(static_cast<size_t>(p), 0.0);
    SlotId pfeat = tape.encode(&model.proposal.encoder, p, batch.prop_xyz.data(), zeros.data(),
                               zeros.data(), "proposal.encode");
    SlotId pw = tape.render_weights(tape.softplus(tape_mlp(tape, model.proposal.mlp, pfeat)),
                                    batch.prop_segs, batch.prop_width.data());
    // The tape arena can move when the interlevel op allocates, so the field
    // weights must be copied out before the call.
    std::vector<double> fw(tape.values(out.weights), tape.values(out.weights) + n);
    out.prop = tape.interlevel_loss(pw, batch.prop_segs, batch.prop_t0.data(),
                                    batch.prop_t1.data(), fw.data(), batch.segs,
                                    batch.field_t0.data(), batch.field_t1.data(),
                                    cfg.interlevel_eps);
    terms.push_back({out.prop, 1.0});
  }
  out.total = tape.add_scaled(terms);
  return out;
}

namespace {

// Shared abort path: restore the last window snapshot, report why.
void abort_run(TrainResult& res, FieldModel& model, const std::vector<Tensor>& snap,
               Tape& tape, int stage, int64_t it, std::ostream* log) {
  std::string why = tape.diagnose_nonfinite();
  model.store.restore(snap);
  model.store.clear_grads();
  res.aborted = true;
  res.abort_reason = "non-finite loss at iteration " + std::to_string(it) +
                     (why.empty() ? "" : ": " + why);
  res.iters_done = it;
  log_line(log, json{{"stage", stage}, {"iter", it}, {"event", "abort"},
                     {"reason", res.abort_reason}});
}

} // namespace

TrainResult train_stage1(FieldModel& model, const SceneDataset& data, const TrainConfig& cfg,
                         uint64_t seed, ThreadPool* pool, std::ostream* log) {
  TrainResult res;
  AdamConfig adam;
  adam.lr = cfg.lr;
  Tape tape(&model.store, pool);
  std::vector<Tensor> snap = model.store.snapshot();
  std::vector<double> gnorm;
  for (int64_t it = 0; it < cfg.iters; ++it) {
    double t0 = now_ms();
    RayBatch batch = assemble_batch_stage1(model, data, cfg, seed, it);
    tape.reset();
    LossSlots loss = build_total_loss(tape, model, batch, cfg, &gnorm);
    double total = tape.scalar_value(loss.total);
    if (!std::isfinite(total)) {
      abort_run(res, model, snap, tape, 1, it, log);
      return res;
    }
    tape.backward(loss.total);
    model.store.adam_step(adam, it + 1);
    res.final_total = total;
    res.final_photo = tape.scalar_value(loss.photo);
    if (it % cfg.log_every == 0 || it + 1 == cfg.iters) {
      log_line(log, json{{"stage", 1},
                         {"iter", it},
                         {"total", total},
                         {"photo", res.final_photo},
                         {"eik", loss.eik >= 0 ? tape.scalar_value(loss.eik) : 0.0},
                         {"prop", loss.prop >= 0 ? tape.scalar_value(loss.prop) : 0.0},
                         {"beta_bar", model.beta_bar()},
                         {"ms", now_ms() - t0}});
    }
    if ((it + 1) % cfg.window == 0) snap = model.store.snapshot();
  }
  res.iters_done = cfg.iters;
  return res;
}

TrainResult train_stage2(FieldModel& model, const SceneDataset& data, const TrainConfig& cfg,
                         uint64_t seed, ThreadPool* pool, std::ostream* log,
                         OccupancyGrid& occ_out) {
  TrainResult res;
  occ_out = bake_occupancy(model, data, cfg.occ_threshold, cfg.bake_n_coarse, cfg.bake_n_fine,
                           pool);
  log_line(log, json{{"stage", 2},
                     {"event", "bake"},
                     {"occupied_voxels", occ_out.count_occupied()},
                     {"res", occ_out.res}});

  // The global beta freezes here: the grid takes over as the density's beta
  // source and only ever grows.
  model.surfaceness.init(model.cfg.surfaceness_res, model.bounds, model.beta_bar());
  model.beta_source = BetaSource::kGrid;

  AdamConfig adam;
  adam.lr = cfg.lr;
  Tape tape(&model.store, pool);
  std::vector<Tensor> snap = model.store.snapshot();
  std::vector<double> gnorm;
  for (int64_t it = 0; it < cfg.iters; ++it) {
    double t0 = now_ms();
    RayBatch batch = assemble_batch_stage2(model, data, occ_out, cfg, seed, it);
    tape.reset();
    LossSlots loss = build_total_loss(tape, model, batch, cfg, &gnorm);
    double total = tape.scalar_value(loss.total);
    if (!std::isfinite(total)) {
      abort_run(res, model, snap, tape, 2, it, log);
      return res;
    }
    tape.backward(loss.total);
    model.store.adam_step(adam, it + 1);

    const double* w = tape.values(loss.weights);
    for (size_t j = 0; j < batch.eik_sample.size(); ++j) {
      int64_t row = batch.eik_sample[j];
      Vec3 x{batch.xyz[row * 3], batch.xyz[row * 3 + 1], batch.xyz[row * 3 + 2]};
      double r = gnorm[j] - 1.0;
      model.surfaceness.accumulate(x, w[row], batch.eik_eta[j], r * r);
    }

    res.final_total = total;
    res.final_photo = tape.scalar_value(loss.photo);
    if (it % cfg.log_every == 0 || it + 1 == cfg.iters) {
      log_line(log, json{{"stage", 2},
                         {"iter", it},
                         {"total", total},
                         {"photo", res.final_photo},
                         {"eik", loss.eik >= 0 ? tape.scalar_value(loss.eik) : 0.0},
                         {"rays_kept", batch.n_rays()},
                         {"ms", now_ms() - t0}});
    }
    if ((it + 1) % cfg.window == 0) {
      int64_t grown = model.surfaceness.update(cfg.gamma_bar, cfg.beta_increment);
      res.beta_voxels_grown += grown;
      double beta_max = *std::max_element(model.surfaceness.beta.begin(),
                                          model.surfaceness.beta.end());
      log_line(log, json{{"stage", 2},
                         {"iter", it},
                         {"event", "beta_update"},
                         {"grown", grown},
                         {"beta_max", beta_max}});
      snap = model.store.snapshot();
    }
  }
  res.iters_done = cfg.iters;
  return res;
}

namespace {

std::vector<TensorId> head_tensors(const MlpHead& mlp) {
  std::vector<TensorId> ids(mlp.weights);
  ids.insert(ids.end(), mlp.biases.begin(), mlp.biases.end());
  return ids;
}

// Half uniform over the bounds, half pulled onto the current zero set with a
// small jitter along the normal, so the band around the surface dominates.
void draw_distill_points(const FieldModel& model, CounterRng& rng, int count,
                         std::vector<Vec3>& out) {
  out.clear();
  out.reserve(count);
  const AABB& box = model.bounds;
  for (int i = 0; i < count; ++i) {
    Vec3 x{rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
           rng.uniform(box.lo.z, box.hi.z)};
    double jitter = rng.normal() * 0.03;
    if (i % 2 == 1) {
      double fv = eval_sdf(model, x, kPointFootprint);
      Vec3 g = spatial_gradient(model, x, kPointFootprint);
      double gl = length(g);
      if (std::isfinite(fv) && gl > 1e-6) {
        Vec3 cand = x - g * (fv / gl) + g * (jitter / gl);
        if (box.contains(cand)) x = cand;
      }
    }
    out.push_back(x);
  }
}

struct DistillWindow {
  double first_mean = -1.0;
  double acc = 0.0;
  int count = 0;

  // Returns true when the rolling window mean blows up tenfold.
  bool diverged(double loss, int window) {
    acc += loss;
    if (++count < window) return false;
    double mean = acc / count;
    acc = 0.0;
    count = 0;
    if (first_mean < 0.0) {
      first_mean = mean;
      return false;
    }
    return mean > 10.0 * first_mean && first_mean > 0.0;
  }
};

} // namespace

DistillResult distill_sdf(FieldModel& model, const TrainConfig& cfg, uint64_t seed,
                          ThreadPool* pool, std::ostream* log) {
  DistillResult res;
  if (model.sdf_student.empty()) throw std::runtime_error("model has no sdf student head");
  Tape tape(&model.store, pool);
  AdamConfig adam;
  adam.lr = cfg.lr;
  std::vector<TensorId> only = head_tensors(model.sdf_student);
  std::vector<Tensor> snap = model.store.snapshot();

  const int batch = 1024;
  double lg = antialias_level(kPointFootprint, model.sdf_encoder.grid_base_res());
  double lp = antialias_level(kPointFootprint, model.sdf_encoder.plane_base_res());
  std::vector<Vec3> pts;
  std::vector<double> feats(static_cast<size_t>(batch) * kEncodeDim);
  std::vector<double> targets(batch);
  std::vector<double> scratch(2 * static_cast<size_t>(std::max(model.sdf_mlp.width, 1)));
  DistillWindow window;

  for (int64_t it = 0; it < cfg.distill_iters; ++it) {
    CounterRng rng(seed, rng_stream::kDistill, static_cast<uint64_t>(it) << 16);
    draw_distill_points(model, rng, batch, pts);
    for (int i = 0; i < batch; ++i) {
      encode_point(model.store, model.sdf_encoder, pts[i], lg, lp,
                   feats.data() + static_cast<size_t>(i) * kEncodeDim);
      mlp_forward(model.store, model.sdf_mlp, feats.data() + static_cast<size_t>(i) * kEncodeDim,
                  &targets[i], scratch.data());
    }
    tape.reset();
    SlotId in = tape.input(batch, kEncodeDim, feats.data(), "distill.sdf.features");
    SlotId loss = tape.l1_loss(tape_mlp(tape, model.sdf_student, in), targets.data());
    double lv = tape.scalar_value(loss);
    if (!std::isfinite(lv) || window.diverged(lv, 100)) {
      model.store.restore(snap);
      model.store.clear_grads();
      res.aborted = true;
      res.abort_reason = std::isfinite(lv) ? "distillation diverged" : "non-finite distill loss";
      res.iters_done = it;
      log_line(log, json{{"distill", "sdf"}, {"iter", it}, {"event", "abort"},
                         {"reason", res.abort_reason}});
      return res;
    }
    tape.backward(loss);
    model.store.adam_step(adam, it + 1, only);
    res.final_loss = lv;
    if (it % cfg.log_every == 0 || it + 1 == cfg.distill_iters) {
      log_line(log, json{{"distill", "sdf"}, {"iter", it}, {"l1", lv}});
    }
  }
  res.iters_done = cfg.distill_iters;
  return res;
}

DistillResult distill_color(FieldModel& model, int width, const TrainConfig& cfg, uint64_t seed,
                            ThreadPool* pool, std::ostream* log) {
  DistillResult res;
  const MlpHead* student = nullptr;
  if (width == 32) student = &model.color_student32;
  else if (width == 16) student = &model.color_student16;
  else throw std::runtime_error("color student width must be 32 or 16");
  if (student->empty()) throw std::runtime_error("model has no color student of that width");

  Tape tape(&model.store, pool);
  AdamConfig adam;
  adam.lr = cfg.lr;
  std::vector<TensorId> only = head_tensors(*student);
  std::vector<Tensor> snap = model.store.snapshot();

  const int batch = 1024;
  const int in_dim = kEncodeDim + kShDim;
  double lg = antialias_level(kPointFootprint, model.color_encoder.grid_base_res());
  double lp = antialias_level(kPointFootprint, model.color_encoder.plane_base_res());
  std::vector<Vec3> pts;
  std::vector<double> feats(static_cast<size_t>(batch) * in_dim);
  std::vector<double> targets(static_cast<size_t>(batch) * 3);
  std::vector<double> scratch(2 * static_cast<size_t>(std::max(model.color_mlp.width, 3)));
  DistillWindow window;

  for (int64_t it = 0; it < cfg.distill_iters; ++it) {
    CounterRng rng(seed, rng_stream::kDistill, (static_cast<uint64_t>(it) << 16) | (1ull << 62));
    draw_distill_points(model, rng, batch, pts);
    for (int i = 0; i < batch; ++i) {
      double* row = feats.data() + static_cast<size_t>(i) * in_dim;
      encode_point(model.store, model.color_encoder, pts[i], lg, lp, row);
      Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
      double dl = length(dir);
      dir = dl > 1e-9 ? dir / dl : Vec3{0.0, 0.0, 1.0};
      sh_basis(dir, row + kEncodeDim);
      double raw[3];
      mlp_forward(model.store, model.color_mlp, row, raw, scratch.data());
      for (int c = 0; c < 3; ++c) targets[static_cast<size_t>(i) * 3 + c] = sigmoid(raw[c]);
    }
    tape.reset();
    SlotId in = tape.input(batch, in_dim, feats.data(), "distill.color.features");
    SlotId rgb = tape.sigmoid(tape_mlp(tape, *student, in));
    SlotId loss = tape.l1_loss(rgb, targets.data());
    double lv = tape.scalar_value(loss);
    if (!std::isfinite(lv) || window.diverged(lv, 100)) {
      model.store.restore(snap);
      model.store.clear_grads();
      res.aborted = true;
      res.abort_reason = std::isfinite(lv) ? "distillation diverged" : "non-finite distill loss";
      res.iters_done = it;
      log_line(log, json{{"distill", "color"}, {"width", width}, {"iter", it},
                         {"event", "abort"}, {"reason", res.abort_reason}});
      return res;
    }
    tape.backward(loss);
    model.store.adam_step(adam, it + 1, only);
    res.final_loss = lv;
    if (it % cfg.log_every == 0 || it + 1 == cfg.distill_iters) {
      log_line(log, json{{"distill", "color"}, {"width", width}, {"iter", it}, {"l1", lv}});
    }
  }
  res.iters_done = cfg.distill_iters;
  return res;
}

} // namespace svf
