#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "any2full/common.hpp"
#include "any2full/depth_domain.hpp"
#include "any2full/evaluation.hpp"
#include "any2full/io.hpp"
#include "any2full/losses.hpp"
#include "any2full/maps.hpp"
#include "any2full/mde_backbone.hpp"
#include "any2full/sape.hpp"
#include "any2full/scene_synth.hpp"
#include "any2full/spsa.hpp"

// Experiment orchestration: config parsing (schema-validated, unknown keys
// rejected), the per-pattern experiment runner with its unprompted baseline,
// the SPSA desk-scale fitting loop, and the gradient-check suite. Reports are
// canonical JSON (sorted keys, shortest-round-trip float formatting), so
// identical runs produce byte-identical files. Patterns may run on worker
// threads (A2F_THREADS); all outputs are assembled and written in declaration
// order, so results are independent of the worker count.

namespace a2f {

using nlohmann::json;

struct SceneSpec {
  std::uint64_t seed = 1;
  int height = 32;
  int width = 32;
  int objects = 3;
};

struct InputSpec {
  std::string rgb_ppm;
  std::string depth_pfm;
};

struct PatternSpec {
  std::string name;
  PatternConfig config;
};

struct ExperimentConfig {
  bool has_inputs = false;
  SceneSpec scene;
  InputSpec inputs;
  std::vector<PatternSpec> patterns;
  BackboneConfig backbone;
  SapeConfig sape;
  LossWeights weights;
  int grid_rows = 4;
  int grid_cols = 4;
  SpsaSettings fit;
  std::string params_in;
  std::string params_out;
  std::string out_dir;
  bool emit_images = false;
};

// ---------------------------------------------------------------------------
// Config parsing

namespace cfgdetail {

inline void require_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& ctx) {
  if (!j.is_object()) throw ConfigError("config: '" + ctx + "' must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("config: unknown key '" + item.key() + "' in " + ctx);
  }
}

template <class T>
inline T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

inline PatternConfig parse_pattern(const json& j, const std::string& ctx);

inline std::vector<PatternConfig> parse_components(const json& j, const std::string& ctx) {
  std::vector<PatternConfig> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(parse_pattern(j.at(i), ctx + ".components[" + std::to_string(i) + "]"));
  return out;
}

inline PatternConfig parse_pattern(const json& j, const std::string& ctx) {
  require_keys(j,
               {"name", "kind", "seed", "rects", "blob_count", "coverage_pct", "lo_pct", "hi_pct",
                "count", "fraction", "lines", "components"},
               ctx);
  const std::string kind = j.at("kind").get<std::string>();
  PatternConfig cfg;
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
  if (kind == "hole") {
    cfg.kind = PatternKind::Hole;
    cfg.blob_count = get_or<int>(j, "blob_count", 0);
    cfg.coverage_pct = get_or<double>(j, "coverage_pct", 0.0);
    if (j.contains("rects"))
      for (const auto& r : j.at("rects")) {
        if (!r.is_array() || r.size() != 4) throw ConfigError("config: rect must be [x,y,w,h]");
        cfg.rects.push_back({r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(),
                             r.at(3).get<int>()});
      }
  } else if (kind == "range") {
    cfg.kind = PatternKind::Range;
    cfg.lo_pct = get_or<double>(j, "lo_pct", 20.0);
    cfg.hi_pct = get_or<double>(j, "hi_pct", 80.0);
  } else if (kind == "sparse_random") {
    cfg.kind = PatternKind::SparseRandom;
    cfg.count = get_or<long long>(j, "count", -1);
    cfg.fraction = get_or<double>(j, "fraction", -1.0);
  } else if (kind == "sparse_lidar") {
    cfg.kind = PatternKind::SparseLidar;
    cfg.lines = get_or<int>(j, "lines", 1);
  } else if (kind == "mixed") {
    cfg.kind = PatternKind::Mixed;
    if (!j.contains("components")) throw ConfigError("config: mixed pattern needs components");
    cfg.components = parse_components(j.at("components"), ctx);
  } else if (kind == "training_sample") {
    cfg = sample_training_pattern(cfg.seed);
  } else {
    throw ConfigError("config: unknown pattern kind '" + kind + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace cfgdetail

inline ExperimentConfig parse_config(const json& j) {
  using cfgdetail::get_or;
  using cfgdetail::require_keys;
  require_keys(j,
               {"scene", "inputs", "patterns", "backbone", "sape", "loss_weights", "eval_grid",
                "fit", "params_in", "params_out", "out_dir", "emit_images"},
               "root");
  ExperimentConfig cfg;
  if (j.contains("scene") && j.contains("inputs"))
    throw ConfigError("config: give either scene or inputs, not both");
  if (j.contains("scene")) {
    const auto& s = j.at("scene");
    require_keys(s, {"seed", "height", "width", "objects"}, "scene");
    cfg.scene.seed = get_or<std::uint64_t>(s, "seed", 1);
    cfg.scene.height = get_or<int>(s, "height", 32);
    cfg.scene.width = get_or<int>(s, "width", 32);
    cfg.scene.objects = get_or<int>(s, "objects", 3);
  }
  if (j.contains("inputs")) {
    const auto& s = j.at("inputs");
    require_keys(s, {"rgb_ppm", "depth_pfm"}, "inputs");
    cfg.has_inputs = true;
    cfg.inputs.rgb_ppm = s.at("rgb_ppm").get<std::string>();
    cfg.inputs.depth_pfm = s.at("depth_pfm").get<std::string>();
  }
  if (j.contains("patterns")) {
    const auto& ps = j.at("patterns");
    if (!ps.is_array()) throw ConfigError("config: patterns must be an array");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const std::string ctx = "patterns[" + std::to_string(i) + "]";
      PatternSpec spec;
      spec.config = cfgdetail::parse_pattern(ps.at(i), ctx);
      spec.name = get_or<std::string>(ps.at(i), "name", pattern_kind_name(spec.config.kind));
      cfg.patterns.push_back(std::move(spec));
    }
    // unique names so report entries and image files never collide
    for (std::size_t i = 0; i < cfg.patterns.size(); ++i)
      for (std::size_t k = 0; k < i; ++k)
        if (cfg.patterns[k].name == cfg.patterns[i].name)
          cfg.patterns[i].name += "_" + std::to_string(i);
  }
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    require_keys(b,
                 {"input_height", "input_width", "patch", "dim", "heads", "groups",
                  "blocks_per_group", "mlp_ratio", "seed"},
                 "backbone");
    cfg.backbone.input_height = get_or<int>(b, "input_height", cfg.backbone.input_height);
    cfg.backbone.input_width = get_or<int>(b, "input_width", cfg.backbone.input_width);
    cfg.backbone.patch = get_or<int>(b, "patch", cfg.backbone.patch);
    cfg.backbone.dim = get_or<std::size_t>(b, "dim", cfg.backbone.dim);
    cfg.backbone.heads = get_or<std::size_t>(b, "heads", cfg.backbone.heads);
    cfg.backbone.groups = get_or<std::size_t>(b, "groups", cfg.backbone.groups);
    cfg.backbone.blocks_per_group =
        get_or<std::size_t>(b, "blocks_per_group", cfg.backbone.blocks_per_group);
    cfg.backbone.mlp_ratio = get_or<double>(b, "mlp_ratio", cfg.backbone.mlp_ratio);
    cfg.backbone.seed = get_or<std::uint64_t>(b, "seed", cfg.backbone.seed);
  }
  if (j.contains("sape")) {
    const auto& s = j.at("sape");
    require_keys(s, {"prompted_levels", "embed_divisors", "seed"}, "sape");
    cfg.sape.prompted_levels = get_or<std::size_t>(s, "prompted_levels", 0);
    if (s.contains("embed_divisors"))
      cfg.sape.embed_divisors = s.at("embed_divisors").get<std::vector<int>>();
    cfg.sape.seed = get_or<std::uint64_t>(s, "seed", cfg.sape.seed);
  }
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    require_keys(w, {"ssi", "gm", "anchor", "rssim"}, "loss_weights");
    cfg.weights.ssi = get_or<double>(w, "ssi", 0.5);
    cfg.weights.gm = get_or<double>(w, "gm", 0.5);
    cfg.weights.anchor = get_or<double>(w, "anchor", 0.5);
    cfg.weights.rssim = get_or<double>(w, "rssim", 0.5);
    if (cfg.weights.ssi < 0 || cfg.weights.gm < 0 || cfg.weights.anchor < 0 ||
        cfg.weights.rssim < 0)
      throw ConfigError("config: loss weights must be nonnegative");
  }
  if (j.contains("eval_grid")) {
    const auto& g = j.at("eval_grid");
    require_keys(g, {"rows", "cols"}, "eval_grid");
    cfg.grid_rows = get_or<int>(g, "rows", 4);
    cfg.grid_cols = get_or<int>(g, "cols", 4);
  }
  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    require_keys(f, {"steps", "c0", "a0", "a_offset", "seed"}, "fit");
    cfg.fit.steps = get_or<std::size_t>(f, "steps", cfg.fit.steps);
    cfg.fit.c0 = get_or<double>(f, "c0", cfg.fit.c0);
    cfg.fit.a0 = get_or<double>(f, "a0", cfg.fit.a0);
    cfg.fit.a_offset = get_or<double>(f, "a_offset", cfg.fit.a_offset);
    cfg.fit.seed = get_or<std::uint64_t>(f, "seed", cfg.fit.seed);
  }
  cfg.params_in = get_or<std::string>(j, "params_in", "");
  cfg.params_out = get_or<std::string>(j, "params_out", "");
  cfg.out_dir = get_or<std::string>(j, "out_dir", "");
  cfg.emit_images = get_or<bool>(j, "emit_images", false);
  cfg.backbone.validate();
  cfg.sape.resolved_levels(cfg.backbone);
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// JSON views of the domain structs

inline json to_json(const AlignmentFit& f) {
  return json{{"s", f.scale}, {"t", f.shift}, {"rms_residual", f.rms_residual},
              {"n_points", f.n_points}};
}
inline json to_json(const MetricsReport& m) {
  return json{{"absrel", m.absrel}, {"rmse", m.rmse}, {"n_pixels", m.n_pixels}};
}
inline json to_json(const LossReport& l) {
  return json{{"ssi", l.ssi},     {"gm", l.gm},           {"anchor", l.anchor},
              {"rssim", l.rssim}, {"total", l.total},     {"n_omega", l.n_omega},
              {"n_omega_s", l.n_omega_s}};
}
inline json to_json(const ScaleMap& s) {
  json regions = json::array();
  for (std::size_t k = 0; k < s.s.size(); ++k)
    regions.push_back(json{{"s", s.present[k] ? json(s.s[k]) : json()},
                           {"present", bool(s.present[k])},
                           {"pixels", s.counts[k]}});
  return json{{"rows", s.rows}, {"cols", s.cols}, {"variance", s.variance}, {"regions", regions}};
}

inline json pattern_to_json(const PatternConfig& c) {
  json j{{"kind", pattern_kind_name(c.kind)}, {"seed", c.seed}};
  switch (c.kind) {
    case PatternKind::Hole: {
      j["coverage_pct"] = c.coverage_pct;
      j["blob_count"] = c.blob_count;
      json rects = json::array();
      for (const auto& r : c.rects) rects.push_back(json::array({r.x0, r.y0, r.w, r.h}));
      j["rects"] = rects;
      break;
    }
    case PatternKind::Range:
      j["lo_pct"] = c.lo_pct;
      j["hi_pct"] = c.hi_pct;
      break;
    case PatternKind::SparseRandom:
      if (c.count >= 0)
        j["count"] = c.count;
      else
        j["fraction"] = c.fraction;
      break;
    case PatternKind::SparseLidar:
      j["lines"] = c.lines;
      break;
    case PatternKind::Mixed: {
      json comps = json::array();
      for (const auto& comp : c.components) comps.push_back(pattern_to_json(comp));
      j["components"] = comps;
      break;
    }
  }
  return j;
}

inline json config_to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.has_inputs)
    j["inputs"] = {{"rgb_ppm", cfg.inputs.rgb_ppm}, {"depth_pfm", cfg.inputs.depth_pfm}};
  else
    j["scene"] = {{"seed", cfg.scene.seed},
                  {"height", cfg.scene.height},
                  {"width", cfg.scene.width},
                  {"objects", cfg.scene.objects}};
  json pats = json::array();
  for (const auto& p : cfg.patterns) {
    json pj = pattern_to_json(p.config);
    pj["name"] = p.name;
    pats.push_back(pj);
  }
  j["patterns"] = pats;
  j["backbone"] = {{"input_height", cfg.backbone.input_height},
                   {"input_width", cfg.backbone.input_width},
                   {"patch", cfg.backbone.patch},
                   {"dim", cfg.backbone.dim},
                   {"heads", cfg.backbone.heads},
                   {"groups", cfg.backbone.groups},
                   {"blocks_per_group", cfg.backbone.blocks_per_group},
                   {"mlp_ratio", cfg.backbone.mlp_ratio},
                   {"seed", cfg.backbone.seed}};
  j["sape"] = {{"prompted_levels", cfg.sape.prompted_levels},
               {"embed_divisors", cfg.sape.embed_divisors},
               {"seed", cfg.sape.seed}};
  j["loss_weights"] = {{"ssi", cfg.weights.ssi},
                       {"gm", cfg.weights.gm},
                       {"anchor", cfg.weights.anchor},
                       {"rssim", cfg.weights.rssim}};
  j["eval_grid"] = {{"rows", cfg.grid_rows}, {"cols", cfg.grid_cols}};
  j["fit"] = {{"steps", cfg.fit.steps},
              {"c0", cfg.fit.c0},
              {"a0", cfg.fit.a0},
              {"a_offset", cfg.fit.a_offset},
              {"seed", cfg.fit.seed}};
  j["params_in"] = cfg.params_in;
  j["params_out"] = cfg.params_out;
  j["emit_images"] = cfg.emit_images;
  return j;
}

// ---------------------------------------------------------------------------
// Scene preparation

struct SceneData {
  RgbImage img;
  DepthMap gt;
  json provenance;
};

// backbone is the EFFECTIVE config (a loaded parameter container overrides
// the experiment config), since the scene must land on the model's grid.
inline SceneData prepare_scene(const ExperimentConfig& cfg, const BackboneConfig& backbone) {
  SceneData s;
  if (cfg.has_inputs) {
    s.img = read_ppm(cfg.inputs.rgb_ppm);
    s.gt = read_pfm(cfg.inputs.depth_pfm);
    if (s.img.height != s.gt.height || s.img.width != s.gt.width)
      throw ConfigError("inputs: RGB and depth dimensions differ");
  } else {
    auto [img, gt] = gen_scene(cfg.scene.seed, cfg.scene.height, cfg.scene.width, cfg.scene.objects);
    s.img = std::move(img);
    s.gt = std::move(gt);
  }
  s.provenance["height"] = s.gt.height;
  s.provenance["width"] = s.gt.width;
  s.provenance["resized"] = false;

  const int th = backbone.input_height;
  const int tw = backbone.input_width;
  if (s.gt.height != th || s.gt.width != tw) {
    if (s.gt.valid_count() != s.gt.pixels())
      throw ConfigError("inputs: resize to the backbone grid needs a fully valid depth map");
    Tensor d(std::size_t(s.gt.height), std::size_t(s.gt.width));
    for (std::size_t i = 0; i < s.gt.pixels(); ++i) d[i] = s.gt.values[i];
    const Tensor dr = bilinear_resize(d, std::size_t(th), std::size_t(tw));
    DepthMap gt2(th, tw);
    for (std::size_t i = 0; i < gt2.pixels(); ++i) {
      gt2.values[i] = dr[i];
      gt2.valid[i] = 1;
    }
    RgbImage img2(th, tw);
    for (int c = 0; c < 3; ++c) {
      Tensor ch(std::size_t(s.img.height), std::size_t(s.img.width));
      for (int y = 0; y < s.img.height; ++y)
        for (int x = 0; x < s.img.width; ++x) ch.at(std::size_t(y), std::size_t(x)) = s.img.rgb[s.img.idx(y, x, c)];
      const Tensor cr = bilinear_resize(ch, std::size_t(th), std::size_t(tw));
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x) img2.rgb[img2.idx(y, x, c)] = cr.at(std::size_t(y), std::size_t(x));
    }
    s.gt = std::move(gt2);
    s.img = std::move(img2);
    s.provenance["resized"] = true;
    s.provenance["resized_to"] = json::array({th, tw});
  }
  return s;
}

inline ModelBundle load_or_init_bundle(const ExperimentConfig& cfg) {
  if (!cfg.params_in.empty()) {
    ModelBundle b = read_params(cfg.params_in);
    return b;
  }
  ModelBundle b;
  b.backbone = cfg.backbone;
  b.sape_config = cfg.sape;
  b.model = make_model_params(cfg.backbone);
  b.sape = make_sape_params(cfg.backbone, cfg.sape);
  return b;
}

// ---------------------------------------------------------------------------
// Experiment runner

inline int worker_count(std::size_t jobs) {
  int n = 1;
  if (const char* e = std::getenv("A2F_THREADS")) n = std::max(1, std::atoi(e));
  return int(std::min<std::size_t>(std::size_t(n), jobs == 0 ? 1 : jobs));
}

namespace rundetail {

struct PatternOutput {
  json entry;
  std::vector<std::pair<std::string, std::string>> files;  // name -> bytes
  std::string error;
};

inline PatternOutput run_one_pattern(const ExperimentConfig& cfg, const SceneData& scene,
                                     const ModelBundle& bundle, const RelativeMap& baseline_rel,
                                     const DepthMap& gt_disp, const PatternSpec& spec) {
  PatternOutput out;
  const DepthMap degraded = apply_pattern(scene.gt, spec.config);
  const DepthMap degraded_disp = depth_to_disparity(degraded);

  const ForwardResult fwd = any2full_forward(scene.img, degraded, bundle.model, bundle.sape,
                                             bundle.backbone, bundle.sape_config);
  const AlignmentFit base_fit = lsq_align(baseline_rel, degraded);
  const DepthMap base_metric = apply_fit(baseline_rel, base_fit);

  const MetricsReport prompted = compute_metrics(fwd.metric, scene.gt);
  const MetricsReport baseline = compute_metrics(base_metric, scene.gt);
  const ScaleMap scale = scale_consistency(scene.gt, fwd.metric, cfg.grid_rows, cfg.grid_cols);
  const LossReport loss = loss_total_maps(fwd.relative, gt_disp, degraded_disp, cfg.weights);

  out.entry = json{{"name", spec.name},
                   {"pattern", pattern_to_json(spec.config)},
                   {"sparse_valid", degraded.valid_count()},
                   {"fit", to_json(fwd.fit)},
                   {"baseline_fit", to_json(base_fit)},
                   {"prompted", to_json(prompted)},
                   {"baseline", to_json(baseline)},
                   {"loss", to_json(loss)},
                   {"scale_map", to_json(scale)}};

  if (cfg.emit_images) {
    DepthMap err(scene.gt.height, scene.gt.width);
    for (std::size_t i = 0; i < err.pixels(); ++i)
      if (scene.gt.valid[i] && fwd.metric.valid[i]) {
        err.values[i] = std::fabs(fwd.metric.values[i] - scene.gt.values[i]);
        err.valid[i] = 1;
      }
    out.files.emplace_back("pattern_" + spec.name + "_sparse.ppm", encode_ppm(falsecolor(degraded)));
    out.files.emplace_back("pattern_" + spec.name + "_depth.ppm", encode_ppm(falsecolor(fwd.metric)));
    out.files.emplace_back("pattern_" + spec.name + "_baseline.ppm",
                           encode_ppm(falsecolor(base_metric)));
    out.files.emplace_back("pattern_" + spec.name + "_error.ppm", encode_ppm(falsecolor(err)));
    out.files.emplace_back("pattern_" + spec.name + "_sparse.pfm", encode_pfm(degraded));
    out.files.emplace_back("pattern_" + spec.name + "_depth.pfm", encode_pfm(fwd.metric));
  }
  return out;
}

}  // namespace rundetail

inline json run_experiment(const ExperimentConfig& cfg) {
  if (cfg.patterns.empty()) throw ConfigError("run: at least one pattern required");
  const ModelBundle bundle = load_or_init_bundle(cfg);
  const SceneData scene = prepare_scene(cfg, bundle.backbone);
  const DepthMap gt_disp = depth_to_disparity(scene.gt);
  const RelativeMap baseline_rel = predict_relative(scene.img, bundle.model, bundle.backbone);

  std::vector<rundetail::PatternOutput> results(cfg.patterns.size());
  const int threads = worker_count(cfg.patterns.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.patterns.size()) return;
      try {
        results[i] = rundetail::run_one_pattern(cfg, scene, bundle, baseline_rel, gt_disp,
                                                cfg.patterns[i]);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < results.size(); ++i)
    if (!results[i].error.empty())
      throw Error("pattern '" + cfg.patterns[i].name + "': " + results[i].error);

  json report;
  report["artifact_version"] = kArtifactVersion;
  report["prng"] = kRngId;
  report["config"] = config_to_json(cfg);
  report["scene"] = scene.provenance;
  json pats = json::array();
  for (auto& r : results) pats.push_back(std::move(r.entry));
  report["patterns"] = pats;

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    write_file_atomic((dir / "report.json").string(), report.dump(2) + "\n");
    if (cfg.emit_images) {
      write_file_atomic((dir / "scene_rgb.ppm").string(), encode_ppm(scene.img));
      write_file_atomic((dir / "scene_depth.ppm").string(), encode_ppm(falsecolor(scene.gt)));
      for (const auto& r : results)
        for (const auto& [name, bytes] : r.files) write_file_atomic((dir / name).string(), bytes);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Desk-scale fitting (SPSA over the prompt-encoder parameters; the backbone
// stays frozen)

struct FitOutcome {
  ModelBundle bundle;
  SpsaResult spsa;
  json report;
};

inline FitOutcome fit_scene(const ExperimentConfig& cfg) {
  if (cfg.patterns.empty()) throw ConfigError("fit: a training pattern is required");
  ModelBundle bundle = load_or_init_bundle(cfg);
  const SceneData scene = prepare_scene(cfg, bundle.backbone);
  const PatternSpec& train = cfg.patterns.front();

  const DepthMap degraded = apply_pattern(scene.gt, train.config);
  const DepthMap gt_disp = depth_to_disparity(scene.gt);
  const DepthMap degraded_disp = depth_to_disparity(degraded);

  const auto loss_of = [&](const SapeParams& sape) -> double {
    const RelativeMap rel = prompted_relative(scene.img, degraded, bundle.model, sape,
                                              bundle.backbone, bundle.sape_config);
    return loss_total_maps(rel, gt_disp, degraded_disp, cfg.weights).total;
  };

  FitOutcome out;
  out.spsa = spsa_minimize<SapeParams>(bundle.sape, loss_of, cfg.fit);
  out.bundle = bundle;

  out.report["artifact_version"] = kArtifactVersion;
  out.report["prng"] = kRngId;
  out.report["config"] = config_to_json(cfg);
  out.report["scene"] = scene.provenance;
  out.report["train_pattern"] = train.name;
  out.report["initial_loss"] = out.spsa.curve.front();
  out.report["final_loss"] = out.spsa.curve.back();
  out.report["loss_curve"] = out.spsa.curve;

  if (!cfg.params_out.empty()) write_params(cfg.params_out, out.bundle);
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    write_file_atomic((std::filesystem::path(cfg.out_dir) / "fit_report.json").string(),
                      out.report.dump(2) + "\n");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient-check suite (seeded 8x8 maps, all four losses)

struct GradCheckReport {
  double ssi = 0.0, gm = 0.0, anchor = 0.0, rssim = 0.0;
  double threshold = 1e-4;
  bool pass = false;
};

// corrupt_for_test deliberately breaks the reported analytic gradient of the
// first loss so the harness can prove it fails loudly.
inline GradCheckReport run_gradcheck(bool corrupt_for_test = false) {
  const int h = 8, w = 8;
  const std::size_t n = std::size_t(h) * w;
  Rng rng(2024);
  std::vector<double> pred(n), gt(n);
  for (auto& v : pred) v = rng.uniform(0.5, 2.5);
  for (auto& v : gt) v = rng.uniform(0.5, 2.5);
  std::vector<std::uint8_t> mask(n, 1);
  std::vector<std::uint8_t> mask_s(n, 0);
  for (std::size_t i = 0; i < n; ++i) mask_s[i] = rng.below(2) == 0 ? 1 : 0;
  std::size_t ns = 0;
  for (auto v : mask_s) ns += v;
  if (ns < 2) mask_s[0] = mask_s[1] = 1;

  const double step = 1e-6;
  bool first_call = true;
  const LossEvalFn ssi_fn = [&](const std::vector<double>& p) {
    LossValueGrad g = loss_ssi(p, gt, mask);
    if (corrupt_for_test && first_call) {
      first_call = false;  // grad_check's first evaluation provides the analytic gradient
      for (auto& v : g.grad) v += 1.0;
    }
    return g;
  };
  const LossEvalFn gm_fn = [&](const std::vector<double>& p) { return loss_gm(p, gt, mask, h, w); };
  const LossEvalFn anchor_fn = [&](const std::vector<double>& p) {
    return loss_anchor(p, gt, mask_s);
  };
  const LossEvalFn rssim_fn = [&](const std::vector<double>& p) {
    return loss_rssim(p, gt, mask, h, w);
  };

  GradCheckReport rep;
  rep.ssi = grad_check(ssi_fn, pred, mask, step, 11);
  rep.gm = grad_check(gm_fn, pred, mask, step, 12);
  rep.anchor = grad_check(anchor_fn, pred, mask_s, step, 13);
  rep.rssim = grad_check(rssim_fn, pred, mask, step, 14);
  rep.pass = rep.ssi <= rep.threshold && rep.gm <= rep.threshold && rep.anchor <= rep.threshold &&
             rep.rssim <= rep.threshold;
  return rep;
}

}  // namespace a2f
