#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "svf/config.hpp"
#include "svf/fields.hpp"
#include "svf/sampling.hpp"
#include "svf/scenes.hpp"
#include "svf/tape.hpp"

namespace svf {

// One optimization batch, fully materialized before the tape runs. Sample
// positions, encoder levels, residual bases, targets and probe points are
// frozen constants, so the tape gradient is exact for the assembled loss.
struct RayBatch {
  RaySegments segs;               // sample rows per kept ray
  std::vector<double> xyz;        // [n,3] sample positions
  std::vector<double> t;          // [n] distance along the ray
  std::vector<double> delta;      // [n] interval widths for compositing
  std::vector<double> level_grid; // [n] anti-alias levels, sdf family
  std::vector<double> level_plane;
  std::vector<double> color_level_grid;
  std::vector<double> color_level_plane;
  std::vector<double> base;       // [n] sphere residual added to the raw sdf
  std::vector<double> sh;         // [n,16] view-direction basis
  std::vector<double> target;     // [rays,3] pixel colors
  std::vector<double> beta;       // [n] per-sample beta (spatial mode only)

  // Eikonal probe subset: m picked samples, six probe rows each.
  std::vector<int64_t> eik_sample; // [m] row index into the samples
  std::vector<double> eik_probe;   // [6m,3] +x,-x,+y,-y,+z,-z blocks
  std::vector<double> eik_probe_level_grid;  // [6m]
  std::vector<double> eik_probe_level_plane; // [6m]
  std::vector<double> eik_probe_base;        // [6m]
  std::vector<double> eik_eta;               // [m]

  // Proposal supervision (stage 1 only; empty in stage 2).
  RaySegments prop_segs;
  std::vector<double> prop_xyz;   // [p,3] coarse bin centers
  std::vector<double> prop_t0, prop_t1, prop_width;
  std::vector<double> field_t0, field_t1; // [n] sample bins for the overlap test

  int64_t n_samples() const { return segs.sample_count(); }
  int64_t n_rays() const { return segs.ray_count(); }
};

// Slots the loss builder exposes so callers can read values and by-products.
struct LossSlots {
  SlotId total = -1;
  SlotId photo = -1;
  SlotId eik = -1;     // -1 when the batch has no probes
  SlotId prop = -1;    // -1 when the batch has no proposal bins
  SlotId weights = -1; // field render weights, [n,1]
};

// Draws rays_per_batch rays from random train views/pixels and places samples
// with the proposal field. Every ray keeps n_coarse + n_fine samples.
RayBatch assemble_batch_stage1(const FieldModel& model, const SceneDataset& data,
                               const TrainConfig& cfg, uint64_t seed, int64_t step);

// Stage-2 batch: fixed-step marching through occupied voxels, per-ray sample
// cap, per-sample beta from the surfaceness grid. Rays that never touch
// occupied space are dropped; throws if the whole batch comes up empty.
RayBatch assemble_batch_stage2(const FieldModel& model, const SceneDataset& data,
                               const OccupancyGrid& occ, const TrainConfig& cfg,
                               uint64_t seed, int64_t step);

// Builds photometric + eikonal + proposal terms on the tape and returns the
// slot ids. gnorm_out (when non-null) receives one gradient norm per probe
// point, for surfaceness accumulation.
LossSlots build_total_loss(Tape& tape, const FieldModel& model, const RayBatch& batch,
                           const TrainConfig& cfg, std::vector<double>* gnorm_out);

struct TrainResult {
  int64_t iters_done = 0;
  double final_photo = 0.0;
  double final_total = 0.0;
  int64_t beta_voxels_grown = 0; // stage 2 total over all windows
  bool aborted = false;
  std::string abort_reason;
};

// Stage 1: volumetric training of the shared field with the learned global
// beta and proposal supervision. Writes one JSON line per log_every iters to
// log when non-null. Non-finite losses abort after restoring the last
// window snapshot.
TrainResult train_stage1(FieldModel& model, const SceneDataset& data,
                         const TrainConfig& cfg, uint64_t seed, ThreadPool* pool,
                         std::ostream* log);

// Stage 2: bakes occupancy, freezes the global beta into the surfaceness
// grid, and finetunes with marching samples while the per-voxel beta grows
// window by window. Returns the baked grid through occ_out.
TrainResult train_stage2(FieldModel& model, const SceneDataset& data,
                         const TrainConfig& cfg, uint64_t seed, ThreadPool* pool,
                         std::ostream* log, OccupancyGrid& occ_out);

struct DistillResult {
  int64_t iters_done = 0;
  double final_loss = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

// Trains the narrow sdf head to match the wide one (L1 on raw outputs, the
// residual base cancels). Only student tensors move. Does not flip
// use_sdf_student; callers decide when the student takes over.
DistillResult distill_sdf(FieldModel& model, const TrainConfig& cfg, uint64_t seed,
                          ThreadPool* pool, std::ostream* log);

// Same for a color student (width 32 or 16), matching the teacher's
// post-sigmoid rgb over surface-biased points and random view directions.
DistillResult distill_color(FieldModel& model, int width, const TrainConfig& cfg,
                            uint64_t seed, ThreadPool* pool, std::ostream* log);

} // namespace svf
