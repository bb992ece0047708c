// Command-line surface for the Any2Full desk-scale pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "any2full/any2full.hpp"

namespace {

a2f::PatternConfig pattern_from_cli(const std::string& kind, std::uint64_t seed, double coverage,
                                    int blobs, const std::vector<std::vector<int>>& rects,
                                    double lo, double hi, long long count, double fraction,
                                    int lines) {
  a2f::PatternConfig cfg;
  cfg.seed = seed;
  if (kind == "hole") {
    cfg.kind = a2f::PatternKind::Hole;
    cfg.coverage_pct = coverage;
    cfg.blob_count = blobs;
    for (const auto& r : rects) {
      if (r.size() != 4) throw a2f::ConfigError("--rect needs x,y,w,h");
      cfg.rects.push_back({r[0], r[1], r[2], r[3]});
    }
  } else if (kind == "range") {
    cfg.kind = a2f::PatternKind::Range;
    cfg.lo_pct = lo;
    cfg.hi_pct = hi;
  } else if (kind == "sparse-random") {
    cfg.kind = a2f::PatternKind::SparseRandom;
    cfg.count = count;
    cfg.fraction = fraction;
  } else if (kind == "sparse-lidar") {
    cfg.kind = a2f::PatternKind::SparseLidar;
    cfg.lines = lines;
  } else if (kind == "training") {
    return a2f::sample_training_pattern(seed);
  } else {
    throw a2f::ConfigError("unknown pattern kind '" + kind + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Any2Full: one-stage prompted depth completion, desk scale"};
  app.require_subcommand(1);

  // gen-scene
  auto* gen = app.add_subcommand("gen-scene", "Generate a synthetic RGB-D scene");
  std::uint64_t gen_seed = 1;
  int gen_h = 32, gen_w = 32, gen_objects = 3;
  std::string gen_out = "out";
  gen->add_option("--seed", gen_seed, "scene seed");
  gen->add_option("--height", gen_h, "image height");
  gen->add_option("--width", gen_w, "image width");
  gen->add_option("--objects", gen_objects, "number of primitives");
  gen->add_option("--out-dir", gen_out, "output directory");

  // pattern
  auto* pat = app.add_subcommand("pattern", "Apply a depth degradation pattern to a PFM");
  std::string pat_in, pat_out, pat_kind = "sparse-random";
  std::uint64_t pat_seed = 0;
  double pat_cov = 30.0, pat_lo = 20.0, pat_hi = 80.0, pat_fraction = -1.0;
  int pat_blobs = 2, pat_lines = 8;
  long long pat_count = -1;
  std::vector<std::vector<int>> pat_rects;
  pat->add_option("--in", pat_in, "input depth PFM")->required();
  pat->add_option("--out", pat_out, "output depth PFM")->required();
  pat->add_option("--kind", pat_kind, "hole | range | sparse-random | sparse-lidar | training");
  pat->add_option("--seed", pat_seed, "pattern seed");
  pat->add_option("--coverage-pct", pat_cov, "hole: target invalid coverage in percent");
  pat->add_option("--blob-count", pat_blobs, "hole: number of random-walk blobs");
  pat->add_option("--rect", pat_rects, "hole: rectangle x,y,w,h (repeatable)")->delimiter(',');
  pat->add_option("--lo-pct", pat_lo, "range: lower percentile");
  pat->add_option("--hi-pct", pat_hi, "range: upper percentile");
  pat->add_option("--count", pat_count, "sparse-random: kept position count");
  pat->add_option("--fraction", pat_fraction, "sparse-random: kept fraction of valid pixels");
  pat->add_option("--lines", pat_lines, "sparse-lidar: scan line count");

  // run
  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  std::string run_config, run_out;
  bool run_images = false;
  std::int64_t run_seed = -1;
  run->add_option("--config", run_config, "experiment config JSON")->required();
  run->add_option("--out-dir", run_out, "override output directory");
  run->add_option("--seed", run_seed, "override scene seed");
  run->add_flag("--emit-images", run_images, "write false-color PPM renders");

  // fit
  auto* fit = app.add_subcommand("fit", "SPSA-fit the prompt encoder on one scene");
  std::string fit_config, fit_out, fit_params;
  std::int64_t fit_seed = -1;
  fit->add_option("--config", fit_config, "experiment config JSON")->required();
  fit->add_option("--out-dir", fit_out, "override output directory");
  fit->add_option("--params-out", fit_params, "override fitted parameter container path");
  fit->add_option("--seed", fit_seed, "override scene seed");

  // eval
  auto* ev = app.add_subcommand("eval", "AbsREL / RMSE between two metric depth PFMs");
  std::string ev_pred, ev_gt;
  ev->add_option("--pred", ev_pred, "predicted depth PFM")->required();
  ev->add_option("--gt", ev_gt, "ground-truth depth PFM")->required();

  // scale-map
  auto* sm = app.add_subcommand("scale-map", "Region-wise scale consistency analysis");
  std::string sm_pred, sm_gt, sm_render;
  int sm_rows = 4, sm_cols = 4;
  sm->add_option("--pred", sm_pred, "predicted depth PFM")->required();
  sm->add_option("--gt", sm_gt, "ground-truth depth PFM")->required();
  sm->add_option("--rows", sm_rows, "grid rows");
  sm->add_option("--cols", sm_cols, "grid cols");
  sm->add_option("--render", sm_render, "write a false-color PPM of the scale map");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of all four loss gradients");
  bool gc_corrupt = false;
  gc->add_flag("--inject-error", gc_corrupt,
               "corrupt one analytic gradient to prove the harness fails");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      auto [img, depth] = a2f::gen_scene(gen_seed, gen_h, gen_w, gen_objects);
      std::filesystem::create_directories(gen_out);
      const std::filesystem::path dir(gen_out);
      a2f::write_ppm((dir / "rgb.ppm").string(), img);
      a2f::write_pfm((dir / "depth.pfm").string(), depth);
      std::cout << "wrote " << (dir / "rgb.ppm").string() << " and "
                << (dir / "depth.pfm").string() << "\n";
    } else if (*pat) {
      const a2f::DepthMap in = a2f::read_pfm(pat_in);
      const a2f::PatternConfig cfg = pattern_from_cli(pat_kind, pat_seed, pat_cov, pat_blobs,
                                                      pat_rects, pat_lo, pat_hi, pat_count,
                                                      pat_fraction, pat_lines);
      const a2f::DepthMap out = a2f::apply_pattern(in, cfg);
      a2f::write_pfm(pat_out, out);
      std::cout << a2f::pattern_to_json(cfg).dump(2) << "\n";
      std::cout << "valid " << out.valid_count() << " / " << out.pixels() << "\n";
    } else if (*run) {
      a2f::ExperimentConfig cfg = a2f::parse_config_file(run_config);
      if (!run_out.empty()) cfg.out_dir = run_out;
      if (run_seed >= 0) cfg.scene.seed = std::uint64_t(run_seed);
      if (run_images) cfg.emit_images = true;
      if (cfg.out_dir.empty()) cfg.out_dir = "out";
      const a2f::json report = a2f::run_experiment(cfg);
      for (const auto& p : report.at("patterns"))
        std::cout << p.at("name").get<std::string>()
                  << ": prompted absrel=" << p.at("prompted").at("absrel").get<double>()
                  << " baseline absrel=" << p.at("baseline").at("absrel").get<double>() << "\n";
      std::cout << "report: " << (std::filesystem::path(cfg.out_dir) / "report.json").string()
                << "\n";
    } else if (*fit) {
      a2f::ExperimentConfig cfg = a2f::parse_config_file(fit_config);
      if (!fit_out.empty()) cfg.out_dir = fit_out;
      if (!fit_params.empty()) cfg.params_out = fit_params;
      if (fit_seed >= 0) cfg.scene.seed = std::uint64_t(fit_seed);
      if (cfg.out_dir.empty()) cfg.out_dir = "out";
      const a2f::FitOutcome outcome = a2f::fit_scene(cfg);
      std::cout << "initial loss " << outcome.spsa.curve.front() << ", final loss "
                << outcome.spsa.curve.back() << " after " << (outcome.spsa.curve.size() - 1)
                << " steps\n";
      if (!cfg.params_out.empty()) std::cout << "params: " << cfg.params_out << "\n";
    } else if (*ev) {
      const a2f::MetricsReport m =
          a2f::compute_metrics(a2f::read_pfm(ev_pred), a2f::read_pfm(ev_gt));
      std::cout << a2f::to_json(m).dump(2) << "\n";
    } else if (*sm) {
      const a2f::ScaleMap s =
          a2f::scale_consistency(a2f::read_pfm(sm_gt), a2f::read_pfm(sm_pred), sm_rows, sm_cols);
      std::cout << a2f::to_json(s).dump(2) << "\n";
      if (!sm_render.empty()) {
        a2f::DepthMap grid(s.rows, s.cols);
        for (std::size_t i = 0; i < grid.pixels(); ++i) {
          grid.values[i] = s.s[i];
          grid.valid[i] = s.present[i];
        }
        // nearest upscale x16 so the render is viewable
        a2f::DepthMap big(s.rows * 16, s.cols * 16);
        for (int y = 0; y < big.height; ++y)
          for (int x = 0; x < big.width; ++x) {
            const std::size_t src = grid.idx(y / 16, x / 16);
            big.values[big.idx(y, x)] = grid.values[src];
            big.valid[big.idx(y, x)] = grid.valid[src];
          }
        a2f::write_ppm(sm_render, a2f::falsecolor(big));
      }
    } else if (*gc) {
      const a2f::GradCheckReport rep = a2f::run_gradcheck(gc_corrupt);
      std::printf("ssi    max rel err %.3e\n", rep.ssi);
      std::printf("gm     max rel err %.3e\n", rep.gm);
      std::printf("anchor max rel err %.3e\n", rep.anchor);
      std::printf("rssim  max rel err %.3e\n", rep.rssim);
      std::printf("%s (threshold %.1e)\n", rep.pass ? "PASS" : "FAIL", rep.threshold);
      return rep.pass ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
