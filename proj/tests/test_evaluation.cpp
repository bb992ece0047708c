#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "any2full/evaluation.hpp"
#include "any2full/rng.hpp"

using namespace a2f;

namespace {

DepthMap seeded_depth(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  DepthMap d(h, w);
  for (std::size_t i = 0; i < d.pixels(); ++i) {
    d.values[i] = rng.uniform(0.5, 4.0);
    d.valid[i] = 1;
  }
  return d;
}

}  // namespace

TEST_CASE("absrel basics", "[evaluation]") {
  const DepthMap gt = seeded_depth(5, 5, 1);
  CHECK(absrel(gt, gt) == 0.0);

  DepthMap scaled = gt;
  for (auto& v : scaled.values) v *= 1.1;
  CHECK(absrel(scaled, gt) == Catch::Approx(0.1).margin(1e-12));

  DepthMap p(1, 1), g(1, 1);
  p.values[0] = 2.0;
  p.valid[0] = 1;
  g.values[0] = 4.0;
  g.valid[0] = 1;
  CHECK(absrel(p, g) == 0.5);

  DepthMap none(2, 2);
  CHECK_THROWS_AS(compute_metrics(none, none), EmptyInput);
}

TEST_CASE("rmse basics and the two-pixel oracle", "[evaluation]") {
  const DepthMap gt = seeded_depth(4, 4, 2);
  DepthMap shifted = gt;
  for (auto& v : shifted.values) v += 0.5;
  CHECK(rmse(shifted, gt) == Catch::Approx(0.5).margin(1e-12));
  CHECK(rmse(gt, gt) == 0.0);

  DepthMap p(1, 2), g(1, 2);
  p.values = {4.0, 9.0};
  p.valid = {1, 1};
  g.values = {1.0, 5.0};
  g.valid = {1, 1};
  // diffs {3,4} -> sqrt(25/2)
  CHECK(rmse(p, g) == Catch::Approx(3.535533905932737622).margin(1e-12));
}

TEST_CASE("metrics respect joint validity and rescaling", "[evaluation]") {
  DepthMap gt = seeded_depth(6, 6, 3);
  DepthMap pred = seeded_depth(6, 6, 4);
  gt.invalidate(0, 0);
  pred.invalidate(5, 5);
  const MetricsReport m = compute_metrics(pred, gt);
  CHECK(m.n_pixels == 34);

  // joint unit rescale: absrel invariant, rmse linear
  DepthMap gt2 = gt, pred2 = pred;
  for (auto& v : gt2.values) v *= 3.0;
  for (auto& v : pred2.values) v *= 3.0;
  const MetricsReport m2 = compute_metrics(pred2, gt2);
  CHECK(m2.absrel == Catch::Approx(m.absrel).margin(1e-12));
  CHECK(m2.rmse == Catch::Approx(3.0 * m.rmse).margin(1e-12));
}

TEST_CASE("scale_consistency uniform maps", "[evaluation]") {
  const DepthMap gt = seeded_depth(16, 16, 5);
  for (double c : {0.5, 1.0, 2.0}) {
    DepthMap pred = gt;
    for (auto& v : pred.values) v = v / c;  // gt/pred = c everywhere
    const ScaleMap s = scale_consistency(gt, pred, 4, 4);
    for (int k = 0; k < 16; ++k) {
      REQUIRE(s.present[k] == 1);
      CHECK(s.s[k] == c);
    }
    CHECK(s.variance == 0.0);
  }
}

TEST_CASE("scale_consistency half-scaled construction", "[evaluation]") {
  const DepthMap gt = seeded_depth(8, 8, 6);
  DepthMap pred = gt;
  for (int y = 0; y < 8; ++y)
    for (int x = 4; x < 8; ++x) pred.values[pred.idx(y, x)] = gt.values[gt.idx(y, x)] / 2.0;
  const ScaleMap s = scale_consistency(gt, pred, 1, 2);
  REQUIRE(s.s.size() == 2);
  CHECK(s.s[0] == 1.0);
  CHECK(s.s[1] == 2.0);
  // population variance of {1,2}
  CHECK(s.variance == Catch::Approx(0.25).margin(1e-9));
}

TEST_CASE("scale_consistency medians and absent regions", "[evaluation]") {
  // median is permutation-invariant; even counts take the middle-pair mean
  DepthMap gt(2, 4), pred(2, 4);
  const double ratios[8] = {1.0, 3.0, 2.0, 8.0, 5.0, 4.0, 7.0, 6.0};
  for (int i = 0; i < 8; ++i) {
    gt.values[i] = ratios[i];
    gt.valid[i] = 1;
    pred.values[i] = 1.0;
    pred.valid[i] = 1;
  }
  const ScaleMap one = scale_consistency(gt, pred, 1, 1);
  CHECK(one.s[0] == Catch::Approx((4.0 + 5.0) / 2.0).margin(1e-15));

  // shuffle pixels, same median
  DepthMap gt2 = gt;
  std::reverse(gt2.values.begin(), gt2.values.end());
  CHECK(scale_consistency(gt2, pred, 1, 1).s[0] == one.s[0]);

  // a region with no valid pixels is absent and excluded from the variance
  DepthMap gt3 = gt;
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) gt3.invalidate(y, x);
  const ScaleMap sm = scale_consistency(gt3, pred, 1, 2);
  CHECK(sm.present[0] == 0);
  CHECK(sm.present[1] == 1);
  CHECK(sm.counts[0] == 0);
  CHECK(sm.variance == 0.0);

  DepthMap all_invalid(4, 4);
  DepthMap p(4, 4);
  for (std::size_t i = 0; i < p.pixels(); ++i) {
    p.values[i] = 1.0;
    p.valid[i] = 1;
  }
  CHECK_THROWS_AS(scale_consistency(all_invalid, p, 2, 2), EmptyInput);
}
