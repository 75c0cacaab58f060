#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "svf/checkpoint.hpp"
#include "svf/config.hpp"
#include "svf/metrics.hpp"
#include "svf/rendering.hpp"
#include "svf/scenes.hpp"
#include "svf/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace svf;

namespace {

// Exit codes: 0 success, 2 bad config, 3 missing prerequisite, 4 numerical.
constexpr int kExitConfig = 2;
constexpr int kExitPrereq = 3;
constexpr int kExitNumerical = 4;

struct PrereqError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double wall_s_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CommonOpts {
  std::string out_dir;
  std::string config_path;
  std::vector<std::string> sets;
  uint64_t seed = 1;
  int threads = 0; // 0 picks hardware concurrency
};

void add_common(CLI::App* cmd, CommonOpts& c, bool out_required = true) {
  auto* out = cmd->add_option("--out", c.out_dir, "output directory");
  if (out_required) out->required();
  cmd->add_option("--config", c.config_path, "JSON config file (model/train/render sections)");
  cmd->add_option("--set", c.sets, "override, e.g. --set train.iters=100")->take_all();
  cmd->add_option("--seed", c.seed, "run seed");
  cmd->add_option("--threads", c.threads, "worker threads (0 = hardware)");
}

std::unique_ptr<ThreadPool> make_pool(int threads) {
  unsigned n = threads > 0 ? static_cast<unsigned>(threads) : std::thread::hardware_concurrency();
  if (n <= 1) return nullptr; // serial path, no pool overhead
  return std::make_unique<ThreadPool>(static_cast<int>(n));
}

// --set section.key=value; the value parses as JSON when it can, else string.
void apply_set(json& cfg, const std::string& expr) {
  size_t eq = expr.find('=');
  size_t dot = expr.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 ||
      eq == dot + 1) {
    throw ConfigError("--set wants section.key=value, got '" + expr + "'");
  }
  std::string section = expr.substr(0, dot);
  std::string key = expr.substr(dot + 1, eq - dot - 1);
  std::string raw = expr.substr(eq + 1);
  json v;
  try {
    v = json::parse(raw);
    if (!v.is_number() && !v.is_boolean() && !v.is_array()) v = raw;
  } catch (const json::exception&) {
    v = raw;
  }
  cfg[section][key] = v;
}

json load_config_json(const CommonOpts& c) {
  json cfg = json::object();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw PrereqError("config file not found: " + c.config_path);
    try {
      in >> cfg;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!cfg.is_object()) throw ConfigError("config root must be a JSON object");
  }
  for (const std::string& s : c.sets) apply_set(cfg, s);
  for (const auto& [key, v] : cfg.items()) {
    (void)v;
    if (key != "model" && key != "train" && key != "render") {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  return cfg;
}

struct Resolved {
  ModelConfig model;
  TrainConfig train;
  RenderConfig render;
};

Resolved resolve_configs(const json& cfg) {
  Resolved r;
  if (cfg.contains("model")) r.model = parse_model_config(cfg.at("model"));
  if (cfg.contains("train")) r.train = parse_train_config(cfg.at("train"));
  if (cfg.contains("render")) r.render = parse_render_config(cfg.at("render"));
  return r;
}

// The resolved run configuration lands next to the outputs so a run can be
// reproduced from its directory alone.
void write_run_config(const CommonOpts& c, const std::string& command, const Resolved& r,
                      const json& extra) {
  json run{{"command", command},
           {"seed", c.seed},
           {"threads", c.threads},
           {"model", model_config_to_json(r.model)},
           {"train", train_config_to_json(r.train)},
           {"render", render_config_to_json(r.render)}};
  for (const auto& [k, v] : extra.items()) run[k] = v;
  std::ofstream f(c.out_dir + "/config.json");
  f << run.dump(2) << "\n";
}

void write_summary(const std::string& out_dir, const json& summary) {
  std::ofstream f(out_dir + "/summary.json");
  if (!f) throw std::runtime_error("cannot write summary under " + out_dir);
  f << summary.dump(2) << "\n";
  std::cout << summary.dump(2) << std::endl;
}

SceneDataset load_data(const std::string& dir) {
  if (dir.empty()) throw PrereqError("this command needs --data");
  try {
    return load_dataset(dir);
  } catch (const std::exception& e) {
    throw PrereqError(e.what());
  }
}

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j) { return Vec3{j.at(0), j.at(1), j.at(2)}; }

// ---- checkpoint <-> model -------------------------------------------------

json model_meta_json(const FieldModel& model, int stage) {
  json meta;
  meta["stage"] = stage;
  meta["model"] = model_config_to_json(model.cfg);
  meta["bounds_lo"] = vec3_json(model.bounds.lo);
  meta["bounds_hi"] = vec3_json(model.bounds.hi);
  meta["scene_scale"] = model.scene_scale;
  meta["beta_source"] = model.beta_source == BetaSource::kGrid ? "grid" : "global";
  meta["use_sdf_student"] = model.use_sdf_student;
  meta["active_color_width"] = model.active_color_width;
  if (model.beta_source == BetaSource::kGrid && !model.surfaceness.empty()) {
    meta["surfaceness"] = json{{"res", model.surfaceness.res},
                               {"fallback_beta", model.surfaceness.fallback_beta}};
  }
  return meta;
}

void save_model(const std::string& path, const FieldModel& model, const OccupancyGrid* occ,
                int stage, int64_t step) {
  std::vector<ExtraBlob> extras;
  if (model.beta_source == BetaSource::kGrid && !model.surfaceness.empty()) {
    ExtraBlob b;
    b.name = "surfaceness_beta";
    b.dtype = "f64";
    int r = model.surfaceness.res;
    b.shape = {r, r, r};
    b.bytes.resize(model.surfaceness.beta.size() * sizeof(double));
    std::memcpy(b.bytes.data(), model.surfaceness.beta.data(), b.bytes.size());
    extras.push_back(std::move(b));
  }
  if (occ && !occ->empty()) {
    ExtraBlob b;
    b.name = "occupancy";
    b.dtype = "u8";
    b.shape = {occ->res, occ->res, occ->res};
    b.bytes = occ->occ;
    extras.push_back(std::move(b));
  }
  CheckpointMeta meta;
  meta.step = step;
  meta.meta_json = model_meta_json(model, stage).dump();
  save_checkpoint(path, model.store, extras, meta);
}

FieldModel load_model(const std::string& path, OccupancyGrid& occ_out) {
  if (path.empty()) throw PrereqError("this command needs --ckpt");
  if (!fs::exists(path)) throw PrereqError("checkpoint not found: " + path);
  json meta;
  try {
    meta = json::parse(read_checkpoint_manifest(path)).at("meta");
  } catch (const std::exception& e) {
    throw PrereqError(std::string("cannot read checkpoint manifest: ") + e.what());
  }
  ModelConfig mc = parse_model_config(meta.at("model"));
  AABB bounds{vec3_from(meta.at("bounds_lo")), vec3_from(meta.at("bounds_hi"))};
  FieldModel model = make_field_model(mc, bounds, meta.at("scene_scale").get<double>());

  std::map<std::string, ExtraBlob> extras;
  try {
    load_checkpoint(path, model.store, extras);
  } catch (const std::exception& e) {
    throw PrereqError(std::string("cannot load checkpoint: ") + e.what());
  }

  model.use_sdf_student = meta.value("use_sdf_student", false);
  model.active_color_width = meta.value("active_color_width", 0);
  if (meta.value("beta_source", "global") == std::string("grid")) {
    auto it = extras.find("surfaceness_beta");
    if (it == extras.end()) {
      throw PrereqError("checkpoint declares a beta grid but carries none: " + path);
    }
    const json& sj = meta.at("surfaceness");
    model.surfaceness.init(sj.at("res").get<int>(), bounds, sj.at("fallback_beta").get<double>());
    if (it->second.bytes.size() != model.surfaceness.beta.size() * sizeof(double)) {
      throw PrereqError("beta grid blob size mismatch in " + path);
    }
    std::memcpy(model.surfaceness.beta.data(), it->second.bytes.data(), it->second.bytes.size());
    model.beta_source = BetaSource::kGrid;
  }
  auto oc = extras.find("occupancy");
  if (oc != extras.end()) {
    occ_out.res = static_cast<int>(oc->second.shape.at(0));
    occ_out.bounds = bounds;
    occ_out.occ = oc->second.bytes;
  } else {
    occ_out = OccupancyGrid{};
  }
  return model;
}

// Head selection flags shared by render and eval.
struct HeadOpts {
  bool use_sdf_student = false;
  int color_head = 64;
};

void add_head_opts(CLI::App* cmd, HeadOpts& h) {
  cmd->add_flag("--use-sdf-student", h.use_sdf_student, "render with the distilled sdf head");
  cmd->add_option("--color-head", h.color_head, "color mlp width: 64 (teacher), 32 or 16");
}

void apply_head_opts(FieldModel& model, const HeadOpts& h) {
  model.use_sdf_student = h.use_sdf_student;
  if (h.color_head == 64) {
    model.active_color_width = 0;
  } else if (h.color_head == 32 || h.color_head == 16) {
    model.active_color_width = h.color_head;
  } else {
    throw ConfigError("--color-head must be 64, 32 or 16");
  }
}

json stats_json(const SampleStats& s) {
  return json{{"mean", s.mean}, {"p50", s.p50}, {"p90", s.p90}, {"p99", s.p99},
              {"total", s.total}};
}

// ---- commands ---------------------------------------------------------------

int run_make_scene(const CommonOpts& c, const std::string& preset, int views, int resolution) {
  auto t0 = std::chrono::steady_clock::now();
  AnalyticScene scene;
  try {
    scene = make_preset_scene(preset);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (views < 2 || resolution < 8) {
    throw ConfigError("make-scene needs at least 2 views and resolution >= 8");
  }
  fs::create_directories(c.out_dir);
  auto pool = make_pool(c.threads);
  SceneDataset ds = make_dataset(scene, views, resolution, c.seed, pool.get());
  save_dataset(ds, c.out_dir);
  write_summary(c.out_dir, json{{"command", "make-scene"},
                                {"preset", preset},
                                {"views", views},
                                {"resolution", resolution},
                                {"train_views", ds.train_idx.size()},
                                {"heldout_views", ds.heldout_idx.size()},
                                {"bounds_lo", vec3_json(ds.bounds.lo)},
                                {"bounds_hi", vec3_json(ds.bounds.hi)},
                                {"wall_s", wall_s_since(t0)}});
  return 0;
}

int run_train(const CommonOpts& c, const std::string& data_dir) {
  auto t0 = std::chrono::steady_clock::now();
  Resolved rc = resolve_configs(load_config_json(c));
  SceneDataset data = load_data(data_dir);
  fs::create_directories(c.out_dir);
  write_run_config(c, "train", rc, json{{"data", data_dir}});

  FieldModel model = make_field_model(rc.model, data.bounds, data.scale);
  auto pool = make_pool(c.threads);
  std::ofstream log(c.out_dir + "/train_log.jsonl");
  TrainResult tr = train_stage1(model, data, rc.train, c.seed, pool.get(), &log);

  json summary{{"command", "train"},
               {"stage", 1},
               {"iters_done", tr.iters_done},
               {"final_photo", tr.final_photo},
               {"final_total", tr.final_total},
               {"beta_bar", model.beta_bar()},
               {"params", model.store.total_params()},
               {"aborted", tr.aborted},
               {"wall_s", wall_s_since(t0)}};
  if (tr.aborted) {
    summary["abort_reason"] = tr.abort_reason;
    write_summary(c.out_dir, summary);
    throw NumericalError(tr.abort_reason);
  }
  std::string ckpt = c.out_dir + "/stage1.ckpt";
  save_model(ckpt, model, nullptr, 1, tr.iters_done);
  summary["checkpoint"] = ckpt;
  write_summary(c.out_dir, summary);
  return 0;
}

int run_finetune(const CommonOpts& c, const std::string& data_dir, const std::string& ckpt) {
  auto t0 = std::chrono::steady_clock::now();
  Resolved rc = resolve_configs(load_config_json(c));
  SceneDataset data = load_data(data_dir);
  OccupancyGrid occ_in;
  FieldModel model = load_model(ckpt, occ_in);
  fs::create_directories(c.out_dir);
  write_run_config(c, "finetune", rc, json{{"data", data_dir}, {"ckpt", ckpt}});

  auto pool = make_pool(c.threads);
  std::ofstream log(c.out_dir + "/train_log.jsonl");
  OccupancyGrid occ;
  TrainResult tr;
  try {
    tr = train_stage2(model, data, rc.train, c.seed, pool.get(), &log, occ);
  } catch (const std::exception& e) {
    throw NumericalError(e.what()); // bake or batch assembly found a dead model
  }

  json summary{{"command", "finetune"},
               {"stage", 2},
               {"iters_done", tr.iters_done},
               {"final_photo", tr.final_photo},
               {"final_total", tr.final_total},
               {"beta_voxels_grown", tr.beta_voxels_grown},
               {"occupied_voxels", occ.count_occupied()},
               {"aborted", tr.aborted},
               {"wall_s", wall_s_since(t0)}};
  if (tr.aborted) {
    summary["abort_reason"] = tr.abort_reason;
    write_summary(c.out_dir, summary);
    throw NumericalError(tr.abort_reason);
  }
  std::string out_ckpt = c.out_dir + "/stage2.ckpt";
  save_model(out_ckpt, model, &occ, 2, tr.iters_done);
  summary["checkpoint"] = out_ckpt;
  write_summary(c.out_dir, summary);
  return 0;
}

int run_distill(const CommonOpts& c, const std::string& ckpt, const std::string& heads) {
  auto t0 = std::chrono::steady_clock::now();
  Resolved rc = resolve_configs(load_config_json(c));
  OccupancyGrid occ;
  FieldModel model = load_model(ckpt, occ);
  fs::create_directories(c.out_dir);
  write_run_config(c, "distill", rc, json{{"ckpt", ckpt}, {"heads", heads}});

  auto pool = make_pool(c.threads);
  std::ofstream log(c.out_dir + "/train_log.jsonl");
  json per_head = json::object();
  std::string failed;
  for (size_t pos = 0; pos < heads.size();) {
    size_t comma = heads.find(',', pos);
    std::string head = heads.substr(pos, comma == std::string::npos ? comma : comma - pos);
    pos = comma == std::string::npos ? heads.size() : comma + 1;
    DistillResult dr;
    if (head == "sdf") dr = distill_sdf(model, rc.train, c.seed, pool.get(), &log);
    else if (head == "color32") dr = distill_color(model, 32, rc.train, c.seed, pool.get(), &log);
    else if (head == "color16") dr = distill_color(model, 16, rc.train, c.seed, pool.get(), &log);
    else throw ConfigError("unknown distill head '" + head + "' (sdf, color32, color16)");
    per_head[head] = json{{"iters_done", dr.iters_done},
                          {"final_loss", dr.final_loss},
                          {"aborted", dr.aborted}};
    if (dr.aborted) {
      per_head[head]["abort_reason"] = dr.abort_reason;
      failed = head + ": " + dr.abort_reason;
      break;
    }
  }

  json summary{{"command", "distill"},
               {"heads", per_head},
               {"aborted", !failed.empty()},
               {"wall_s", wall_s_since(t0)}};
  if (!failed.empty()) {
    write_summary(c.out_dir, summary);
    throw NumericalError(failed);
  }
  int stage = 2;
  std::string out_ckpt = c.out_dir + "/distilled.ckpt";
  save_model(out_ckpt, model, occ.empty() ? nullptr : &occ, stage, 0);
  summary["checkpoint"] = out_ckpt;
  write_summary(c.out_dir, summary);
  return 0;
}

int run_bake(const CommonOpts& c, const std::string& data_dir, const std::string& ckpt) {
  auto t0 = std::chrono::steady_clock::now();
  Resolved rc = resolve_configs(load_config_json(c));
  SceneDataset data = load_data(data_dir);
  OccupancyGrid occ_in;
  FieldModel model = load_model(ckpt, occ_in);
  fs::create_directories(c.out_dir);
  write_run_config(c, "bake", rc, json{{"data", data_dir}, {"ckpt", ckpt}});

  auto pool = make_pool(c.threads);
  OccupancyGrid occ;
  try {
    occ = bake_occupancy(model, data, rc.train.occ_threshold, rc.train.bake_n_coarse,
                         rc.train.bake_n_fine, pool.get());
  } catch (const std::exception& e) {
    throw NumericalError(e.what());
  }
  std::string out_ckpt = c.out_dir + "/baked.ckpt";
  save_model(out_ckpt, model, &occ, 2, 0);
  int64_t total = static_cast<int64_t>(occ.occ.size());
  write_summary(c.out_dir, json{{"command", "bake"},
                                {"occupied_voxels", occ.count_occupied()},
                                {"total_voxels", total},
                                {"occupied_fraction",
                                 static_cast<double>(occ.count_occupied()) / total},
                                {"checkpoint", out_ckpt},
                                {"wall_s", wall_s_since(t0)}});
  return 0;
}

struct CameraOpts {
  std::string data_dir;
  int view = -1;
  std::vector<double> orbit; // azimuth deg, elevation deg, radius
  int width = 128, height = 128;
  double fov = 45.0;
};

void add_camera_opts(CLI::App* cmd, CameraOpts& o) {
  cmd->add_option("--data", o.data_dir, "dataset directory (for --view cameras)");
  cmd->add_option("--view", o.view, "dataset view index to render");
  cmd->add_option("--orbit", o.orbit, "azimuth_deg elevation_deg radius")->expected(3);
  cmd->add_option("--width", o.width, "orbit camera width");
  cmd->add_option("--height", o.height, "orbit camera height");
  cmd->add_option("--fov", o.fov, "orbit camera vertical fov, degrees");
}

Camera camera_from_opts(const CameraOpts& o, const FieldModel& model,
                        const SceneDataset* data) {
  if (o.view >= 0) {
    if (!data) throw PrereqError("--view needs --data");
    if (o.view >= static_cast<int>(data->cameras.size())) {
      throw ConfigError("--view out of range (dataset has " +
                        std::to_string(data->cameras.size()) + " views)");
    }
    return data->cameras[o.view];
  }
  double az = 30.0, el = 20.0, radius = 3.0;
  if (!o.orbit.empty()) {
    az = o.orbit[0];
    el = o.orbit[1];
    radius = o.orbit[2];
  }
  double a = az * kPi / 180.0, e = el * kPi / 180.0;
  Vec3 center = model.bounds.center();
  Vec3 eye = center + Vec3{std::cos(e) * std::cos(a), std::sin(e), std::cos(e) * std::sin(a)} *
                          radius;
  return make_lookat_camera(eye, center, Vec3{0.0, 1.0, 0.0}, o.fov, o.width, o.height);
}

// Render modes that walk voxels need a baked grid; the beta grid needs the
// finetuned surfaceness. Validated up front so the error is a clean exit 3.
void check_render_prereqs(const FieldModel& model, const OccupancyGrid& occ,
                          const RenderConfig& rcfg) {
  bool needs_occ = rcfg.mode == RenderMode::kHybrid ||
                   rcfg.mode == RenderMode::kVolumetricOccupancy ||
                   rcfg.restrict_to_occupancy;
  if (needs_occ && occ.empty()) {
    throw PrereqError("this render mode needs a checkpoint with baked occupancy "
                      "(run finetune or bake first)");
  }
  if (rcfg.mode == RenderMode::kHybrid && model.beta_source == BetaSource::kGrid &&
      model.surfaceness.empty()) {
    throw PrereqError("hybrid rendering needs the surfaceness grid from finetuning");
  }
}

int run_render(const CommonOpts& c, const std::string& ckpt, const CameraOpts& cam_opts,
               const std::string& mode_flag, const HeadOpts& heads) {
  auto t0 = std::chrono::steady_clock::now();
  json cfg_json = load_config_json(c);
  if (!mode_flag.empty()) cfg_json["render"]["mode"] = mode_flag;
  Resolved rc = resolve_configs(cfg_json);

  OccupancyGrid occ;
  FieldModel model = load_model(ckpt, occ);
  apply_head_opts(model, heads);
  check_render_prereqs(model, occ, rc.render);

  std::unique_ptr<SceneDataset> data;
  if (!cam_opts.data_dir.empty()) data = std::make_unique<SceneDataset>(load_data(cam_opts.data_dir));
  Camera cam = camera_from_opts(cam_opts, model, data.get());

  fs::create_directories(c.out_dir);
  write_run_config(c, "render", rc, json{{"ckpt", ckpt}});
  auto pool = make_pool(c.threads);
  FrameBuffers fb = render_frame(model, cam, occ.empty() ? nullptr : &occ, rc.render, pool.get());

  std::string ppm = c.out_dir + "/render.ppm";
  save_ppm(ppm, fb.color);
  bool png = png_supported() && save_png16(c.out_dir + "/render.png", fb.color);

  double opacity_mean = 0.0;
  for (double v : fb.opacity) opacity_mean += v;
  opacity_mean /= std::max<size_t>(1, fb.opacity.size());

  json summary{{"command", "render"},
               {"mode", render_mode_name(rc.render.mode)},
               {"width", cam.width},
               {"height", cam.height},
               {"samples", stats_json(fb.stats)},
               {"opacity_mean", opacity_mean},
               {"image", ppm},
               {"png", png},
               {"wall_s", wall_s_since(t0)}};
  if (data && cam_opts.view >= 0) {
    summary["psnr_vs_view"] = psnr(fb.color, data->images[cam_opts.view]);
  }
  write_summary(c.out_dir, summary);
  return 0;
}

int run_eval(const CommonOpts& c, const std::string& ckpt, const std::string& data_dir,
             const std::string& mode_flag, const std::string& split, bool save_images,
             const HeadOpts& heads) {
  auto t0 = std::chrono::steady_clock::now();
  json cfg_json = load_config_json(c);
  if (!mode_flag.empty()) cfg_json["render"]["mode"] = mode_flag;
  Resolved rc = resolve_configs(cfg_json);

  SceneDataset data = load_data(data_dir);
  OccupancyGrid occ;
  FieldModel model = load_model(ckpt, occ);
  apply_head_opts(model, heads);
  check_render_prereqs(model, occ, rc.render);

  std::vector<int> views;
  if (split == "heldout") views = data.heldout_idx;
  else if (split == "train") views = data.train_idx;
  else if (split == "all") {
    views.resize(data.images.size());
    for (size_t i = 0; i < views.size(); ++i) views[i] = static_cast<int>(i);
  } else {
    throw ConfigError("--split must be heldout, train or all");
  }
  if (views.empty()) throw PrereqError("dataset has no views in split '" + split + "'");

  fs::create_directories(c.out_dir);
  write_run_config(c, "eval", rc, json{{"ckpt", ckpt}, {"data", data_dir}, {"split", split}});
  auto pool = make_pool(c.threads);

  json per_view = json::array();
  double psnr_sum = 0.0, ssim_sum = 0.0, samples_sum = 0.0;
  for (int v : views) {
    FrameBuffers fb = render_frame(model, data.cameras[v], occ.empty() ? nullptr : &occ,
                                   rc.render, pool.get());
    double p = psnr(fb.color, data.images[v]);
    double s = ssim(fb.color, data.images[v]);
    psnr_sum += p;
    ssim_sum += s;
    samples_sum += fb.stats.mean;
    per_view.push_back(json{{"view", v},
                            {"psnr", p},
                            {"ssim", s},
                            {"samples_mean", fb.stats.mean}});
    if (save_images) {
      char name[64];
      std::snprintf(name, sizeof(name), "/eval_view_%03d.ppm", v);
      save_ppm(c.out_dir + name, fb.color);
    }
  }
  double nv = static_cast<double>(views.size());
  write_summary(c.out_dir, json{{"command", "eval"},
                                {"mode", render_mode_name(rc.render.mode)},
                                {"split", split},
                                {"views", views.size()},
                                {"mean_psnr", psnr_sum / nv},
                                {"mean_ssim", ssim_sum / nv},
                                {"mean_samples_per_ray", samples_sum / nv},
                                {"per_view", per_view},
                                {"wall_s", wall_s_since(t0)}});
  return 0;
}

// Times the pieces that dominate a training run on this machine. Numbers are
// wall-clock and so inherently non-reproducible.
int run_bench(const CommonOpts& c, int iters) {
  Resolved rc = resolve_configs(load_config_json(c));
  auto pool = make_pool(c.threads);
  AnalyticScene scene = make_preset_scene("sphere");
  SceneDataset data = make_dataset(scene, 8, 64, c.seed, pool.get());
  FieldModel model = make_field_model(rc.model, data.bounds, data.scale);
  const TrainConfig& tc = rc.train;
  json out{{"command", "bench"}, {"iters", iters}};

  {
    auto t0 = std::chrono::steady_clock::now();
    Tape tape(&model.store, pool.get());
    std::vector<double> gnorm;
    for (int i = 0; i < iters; ++i) {
      RayBatch batch = assemble_batch_stage1(model, data, tc, c.seed, i);
      tape.reset();
      LossSlots loss = build_total_loss(tape, model, batch, tc, &gnorm);
      tape.backward(loss.total);
      AdamConfig adam;
      model.store.adam_step(adam, i + 1);
    }
    out["stage1_iter_ms"] = wall_s_since(t0) * 1000.0 / iters;
  }
  {
    Vec3 x = model.bounds.center();
    auto t0 = std::chrono::steady_clock::now();
    double acc = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      CounterRng rng(c.seed, rng_stream::kMisc, static_cast<uint64_t>(i));
      Vec3 p{x.x + rng.uniform(-1.0, 1.0), x.y + rng.uniform(-1.0, 1.0),
             x.z + rng.uniform(-1.0, 1.0)};
      acc += eval_sdf(model, p, 1e-3);
    }
    out["eval_sdf_us"] = wall_s_since(t0) * 1e6 / n;
    out["checksum"] = acc; // keeps the loop from being optimized away
  }
  {
    PresummedCache cache = build_presummed_cache(model.store, model.sdf_encoder, 0);
    auto t0 = std::chrono::steady_clock::now();
    double acc = 0.0;
    const int n = 20000;
    double feat[kEncodeDim];
    for (int i = 0; i < n; ++i) {
      CounterRng rng(c.seed, rng_stream::kMisc, static_cast<uint64_t>(i));
      Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      encode_point_cached(cache, p, 1.0, 2.0, feat);
      acc += feat[0];
    }
    out["encode_cached_us"] = wall_s_since(t0) * 1e6 / n;
  }
  if (!c.out_dir.empty()) {
    fs::create_directories(c.out_dir);
    write_summary(c.out_dir, out);
  } else {
    std::cout << out.dump(2) << std::endl;
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"trainer and renderer for hybrid surface-volume neural fields"};
  app.require_subcommand(1);
  int rc = 0;

  // make-scene
  CommonOpts ms_c;
  std::string ms_preset;
  int ms_views = 24, ms_res = 128;
  auto* ms = app.add_subcommand("make-scene", "render an analytic scene into a posed dataset");
  add_common(ms, ms_c);
  ms->add_option("--preset", ms_preset, "sphere, sphere+slab or box-room")->required();
  ms->add_option("--views", ms_views, "number of posed views");
  ms->add_option("--resolution", ms_res, "image side length");
  ms->callback([&] { rc = run_make_scene(ms_c, ms_preset, ms_views, ms_res); });

  // train
  CommonOpts tr_c;
  std::string tr_data;
  auto* tr = app.add_subcommand("train", "stage-1 volumetric training from scratch");
  add_common(tr, tr_c);
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->callback([&] { rc = run_train(tr_c, tr_data); });

  // finetune
  CommonOpts ft_c;
  std::string ft_data, ft_ckpt;
  auto* ft = app.add_subcommand("finetune", "stage-2 surfaceness finetuning of a checkpoint");
  add_common(ft, ft_c);
  ft->add_option("--data", ft_data, "dataset directory")->required();
  ft->add_option("--ckpt", ft_ckpt, "stage-1 checkpoint")->required();
  ft->callback([&] { rc = run_finetune(ft_c, ft_data, ft_ckpt); });

  // distill
  CommonOpts di_c;
  std::string di_ckpt, di_heads = "sdf,color32,color16";
  auto* di = app.add_subcommand("distill", "train the narrow sdf/color heads from the wide ones");
  add_common(di, di_c);
  di->add_option("--ckpt", di_ckpt, "trained checkpoint")->required();
  di->add_option("--heads", di_heads, "comma list of sdf, color32, color16");
  di->callback([&] { rc = run_distill(di_c, di_ckpt, di_heads); });

  // bake
  CommonOpts bk_c;
  std::string bk_data, bk_ckpt;
  auto* bk = app.add_subcommand("bake", "bake the occupancy grid for a checkpoint");
  add_common(bk, bk_c);
  bk->add_option("--data", bk_data, "dataset directory")->required();
  bk->add_option("--ckpt", bk_ckpt, "trained checkpoint")->required();
  bk->callback([&] { rc = run_bake(bk_c, bk_data, bk_ckpt); });

  // render
  CommonOpts rd_c;
  std::string rd_ckpt, rd_mode;
  CameraOpts rd_cam;
  HeadOpts rd_heads;
  auto* rd = app.add_subcommand("render", "render one frame from a checkpoint");
  add_common(rd, rd_c);
  rd->add_option("--ckpt", rd_ckpt, "trained checkpoint")->required();
  rd->add_option("--mode", rd_mode, "proposal, occupancy, dense or hybrid");
  add_camera_opts(rd, rd_cam);
  add_head_opts(rd, rd_heads);
  rd->callback([&] { rc = run_render(rd_c, rd_ckpt, rd_cam, rd_mode, rd_heads); });

  // eval
  CommonOpts ev_c;
  std::string ev_ckpt, ev_data, ev_mode, ev_split = "heldout";
  bool ev_save = false;
  HeadOpts ev_heads;
  auto* ev = app.add_subcommand("eval", "psnr/ssim over a dataset split");
  add_common(ev, ev_c);
  ev->add_option("--ckpt", ev_ckpt, "trained checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--mode", ev_mode, "render mode override");
  ev->add_option("--split", ev_split, "heldout, train or all");
  ev->add_flag("--save-images", ev_save, "write each rendered view");
  add_head_opts(ev, ev_heads);
  ev->callback([&] { rc = run_eval(ev_c, ev_ckpt, ev_data, ev_mode, ev_split, ev_save, ev_heads); });

  // bench
  CommonOpts bn_c;
  int bn_iters = 20;
  auto* bn = app.add_subcommand("bench", "time the dominant training and query paths");
  add_common(bn, bn_c, /*out_required=*/false);
  bn->add_option("--iters", bn_iters, "training iterations to time");
  bn->callback([&] { rc = run_bench(bn_c, bn_iters); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const PrereqError& e) {
    std::cerr << "prerequisite error: " << e.what() << "\n";
    return kExitPrereq;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return rc;
}
