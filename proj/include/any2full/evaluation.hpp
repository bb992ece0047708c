#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "any2full/common.hpp"
#include "any2full/maps.hpp"

// Metric-space evaluation (AbsREL, RMSE) and the region-wise
// scale-consistency analysis: per region the median of gt/pred ratios, with
// the population variance of the present medians as the inconsistency proxy.

namespace a2f {

struct MetricsReport {
  double absrel = 0.0;
  double rmse = 0.0;
  std::size_t n_pixels = 0;
};

inline MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw ShapeError("metrics: map sizes differ");
  double s_rel = 0.0, s_sq = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.pixels(); ++i) {
    if (!pred.valid[i] || !gt.valid[i]) continue;
    const double d = pred.values[i] - gt.values[i];
    s_rel += std::fabs(d) / gt.values[i];
    s_sq += d * d;
    ++n;
  }
  if (n == 0) throw EmptyInput("metrics: no jointly valid pixels");
  MetricsReport r;
  r.absrel = s_rel / double(n);
  r.rmse = std::sqrt(s_sq / double(n));
  r.n_pixels = n;
  return r;
}

inline double absrel(const DepthMap& pred, const DepthMap& gt) { return compute_metrics(pred, gt).absrel; }
inline double rmse(const DepthMap& pred, const DepthMap& gt) { return compute_metrics(pred, gt).rmse; }

struct ScaleMap {
  int rows = 0, cols = 0;
  std::vector<double> s;               // per region median of gt/pred; meaningless when absent
  std::vector<std::uint8_t> present;   // region had >= 1 usable pixel
  std::vector<std::size_t> counts;     // usable pixels per region
  double variance = 0.0;               // population variance over present regions
};

// Even-count median = mean of the two middle values.
inline double median_of(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline ScaleMap scale_consistency(const DepthMap& gt, const DepthMap& pred, int grid_rows,
                                  int grid_cols) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw ShapeError("scale_consistency: map sizes differ");
  if (grid_rows < 1 || grid_cols < 1) throw ConfigError("scale_consistency: bad grid");
  ScaleMap out;
  out.rows = grid_rows;
  out.cols = grid_cols;
  out.s.assign(std::size_t(grid_rows) * grid_cols, 0.0);
  out.present.assign(std::size_t(grid_rows) * grid_cols, 0);
  out.counts.assign(std::size_t(grid_rows) * grid_cols, 0);

  std::vector<double> ratios;
  std::size_t n_present = 0;
  double mean = 0.0;
  std::vector<double> medians;
  for (int gr = 0; gr < grid_rows; ++gr)
    for (int gc = 0; gc < grid_cols; ++gc) {
      const int y0 = gr * gt.height / grid_rows, y1 = (gr + 1) * gt.height / grid_rows;
      const int x0 = gc * gt.width / grid_cols, x1 = (gc + 1) * gt.width / grid_cols;
      ratios.clear();
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          const std::size_t i = gt.idx(y, x);
          if (!gt.valid[i] || !pred.valid[i]) continue;
          if (!(pred.values[i] > 0.0)) throw DataError("scale_consistency: nonpositive prediction");
          ratios.push_back(gt.values[i] / pred.values[i]);
        }
      const std::size_t k = std::size_t(gr) * grid_cols + gc;
      out.counts[k] = ratios.size();
      if (ratios.empty()) continue;
      out.s[k] = median_of(ratios);
      out.present[k] = 1;
      medians.push_back(out.s[k]);
      mean += out.s[k];
      ++n_present;
    }
  if (n_present == 0) throw EmptyInput("scale_consistency: no region has usable pixels");
  mean /= double(n_present);
  double var = 0.0;
  for (double m : medians) var += (m - mean) * (m - mean);
  out.variance = var / double(n_present);
  return out;
}

}  // namespace a2f
