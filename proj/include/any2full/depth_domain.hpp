#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>

#include "any2full/common.hpp"
#include "any2full/maps.hpp"

// Conversions between metric depth, disparity, and the normalized relative
// domain, plus the closed-form least-squares relative-to-metric alignment.
// Alignment is solved in disparity space (the backbone's relative domain) and
// inverted to meters afterwards.

namespace a2f {

// Documented floors: sigma keeps normalization finite on near-constant input,
// disp keeps recovered depth positive.
inline constexpr double kSigmaFloor = 1e-8;
inline constexpr double kDispFloor = 1e-6;

struct NormStats {
  double mu = 0.0;
  double sigma = kSigmaFloor;  // population std over valid pixels, floored
};

struct AlignmentFit {
  double scale = 1.0;
  double shift = 0.0;
  double rms_residual = 0.0;
  std::size_t n_points = 0;
};

// Valid pixels map to 1/value; invalid pixels stay invalid. Works in both
// directions since disparity and depth are mutual reciprocals.
inline DepthMap depth_to_disparity(const DepthMap& d) {
  DepthMap out = d;
  for (std::size_t i = 0; i < out.pixels(); ++i)
    if (out.valid[i]) out.values[i] = 1.0 / out.values[i];
  return out;
}

// Population mean/std over a masked value set. Shared by normalize and the
// losses, which re-normalize over their own masks.
template <class MapT>
inline NormStats masked_stats(const MapT& m) {
  double mu = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.pixels(); ++i)
    if (m.valid[i]) {
      mu += m.values[i];
      ++n;
    }
  if (n == 0) throw EmptyInput("masked_stats: no valid pixels");
  mu /= double(n);
  double var = 0.0;
  for (std::size_t i = 0; i < m.pixels(); ++i)
    if (m.valid[i]) {
      const double c = m.values[i] - mu;
      var += c * c;
    }
  var /= double(n);
  NormStats s;
  s.mu = mu;
  s.sigma = std::max(std::sqrt(var), kSigmaFloor);
  return s;
}

// d~_i = (d_i - mu) / max(sigma, floor) over valid pixels of a disparity map.
inline std::pair<RelativeMap, NormStats> normalize(const DepthMap& disp) {
  const NormStats s = masked_stats(disp);
  RelativeMap out(disp.height, disp.width);
  out.valid = disp.valid;
  for (std::size_t i = 0; i < disp.pixels(); ++i)
    if (disp.valid[i]) out.values[i] = (disp.values[i] - s.mu) / s.sigma;
  return {out, s};
}

// Closed-form normal equations for (s, t) minimizing
//   sum over valid sparse pixels of (s*pred_i + t - disp(metric_i))^2.
// Degenerate when pred is constant over the sparse support.
inline AlignmentFit lsq_align(const RelativeMap& pred, const DepthMap& sparse_metric) {
  if (pred.height != sparse_metric.height || pred.width != sparse_metric.width)
    throw ShapeError("lsq_align: map sizes differ");
  double sp = 0.0, spp = 0.0, sy = 0.0, spy = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.pixels(); ++i) {
    if (!sparse_metric.valid[i]) continue;
    if (!pred.valid[i]) throw ShapeError("lsq_align: pred invalid at a sparse pixel");
    const double p = pred.values[i];
    const double y = 1.0 / sparse_metric.values[i];
    sp += p;
    spp += p * p;
    sy += y;
    spy += p * y;
    ++n;
  }
  if (n < 2) throw EmptySparseInput("lsq_align: fewer than 2 valid sparse points");
  const double nn = double(n);
  const double mean_p = sp / nn;
  const double var_p = spp / nn - mean_p * mean_p;
  if (!(var_p > 1e-12 * std::max(1.0, mean_p * mean_p)))
    throw ScaleDegenerate("lsq_align: prediction constant over sparse support");

  const double det = nn * spp - sp * sp;
  AlignmentFit fit;
  fit.scale = (nn * spy - sp * sy) / det;
  fit.shift = (spp * sy - sp * spy) / det;
  fit.n_points = n;

  double ss = 0.0;
  for (std::size_t i = 0; i < pred.pixels(); ++i) {
    if (!sparse_metric.valid[i]) continue;
    const double r = fit.scale * pred.values[i] + fit.shift - 1.0 / sparse_metric.values[i];
    ss += r * r;
  }
  fit.rms_residual = std::sqrt(ss / nn);
  return fit;
}

// disparity = max(s*pred + t, floor); depth = 1/disparity. Fully valid output.
inline DepthMap apply_fit(const RelativeMap& pred, const AlignmentFit& fit) {
  DepthMap out(pred.height, pred.width);
  for (std::size_t i = 0; i < pred.pixels(); ++i) {
    const double disp = std::max(fit.scale * pred.values[i] + fit.shift, kDispFloor);
    out.values[i] = 1.0 / disp;
    out.valid[i] = 1;
  }
  return out;
}

}  // namespace a2f
