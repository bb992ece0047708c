// Minimal end-to-end walkthrough: synthesize a scene, degrade its depth,
// run the prompted forward pass next to the unprompted baseline, and print
// metric-space errors for both.

#include <cstdio>

#include "any2full/any2full.hpp"

int main() {
  const a2f::BackboneConfig bcfg;  // 32x32 input, patch 8, D=8, 4 groups of 2 blocks
  const a2f::SapeConfig scfg;      // 3 prompted levels, {1,2,4} embed pyramid

  const auto [img, gt] = a2f::gen_scene(/*seed=*/7, bcfg.input_height, bcfg.input_width,
                                        /*object_count=*/3);

  a2f::PatternConfig sparse;
  sparse.kind = a2f::PatternKind::SparseRandom;
  sparse.count = 200;
  sparse.seed = 42;
  const a2f::DepthMap degraded = a2f::apply_sparse_random(gt, sparse);

  const a2f::ModelParams model = a2f::make_model_params(bcfg);
  const a2f::SapeParams sape = a2f::make_sape_params(bcfg, scfg);

  const a2f::ForwardResult fwd = a2f::any2full_forward(img, degraded, model, sape, bcfg, scfg);

  const a2f::RelativeMap base_rel = a2f::predict_relative(img, model, bcfg);
  const a2f::AlignmentFit base_fit = a2f::lsq_align(base_rel, degraded);
  const a2f::DepthMap base_metric = a2f::apply_fit(base_rel, base_fit);

  const a2f::MetricsReport prompted = a2f::compute_metrics(fwd.metric, gt);
  const a2f::MetricsReport baseline = a2f::compute_metrics(base_metric, gt);
  std::printf("sparse points: %zu of %zu\n", degraded.valid_count(), degraded.pixels());
  std::printf("alignment: s=%.4f t=%.4f residual=%.4f\n", fwd.fit.scale, fwd.fit.shift,
              fwd.fit.rms_residual);
  std::printf("prompted  absrel=%.4f rmse=%.4f m\n", prompted.absrel, prompted.rmse);
  std::printf("baseline  absrel=%.4f rmse=%.4f m\n", baseline.absrel, baseline.rmse);
  std::printf("(identical at identity init; fit the prompt encoder to separate them)\n");
  return 0;
}
