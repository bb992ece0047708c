#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "any2full/common.hpp"
#include "any2full/maps.hpp"
#include "any2full/rng.hpp"

// Procedural desk-scale RGB-D scenes and the depth-degradation patterns
// (Hole, Range, Sparse-Random, Sparse-LiDAR, Mixed).
//
// Every pattern generator is a pure restriction: per pixel, either
// (value, valid) is unchanged or valid flips true->false. Values are never
// rewritten, and identical (input, config, seed) gives bitwise-identical
// output.

namespace a2f {

enum class PatternKind { Hole, Range, SparseRandom, SparseLidar, Mixed };

inline const char* pattern_kind_name(PatternKind k) {
  switch (k) {
    case PatternKind::Hole: return "hole";
    case PatternKind::Range: return "range";
    case PatternKind::SparseRandom: return "sparse_random";
    case PatternKind::SparseLidar: return "sparse_lidar";
    case PatternKind::Mixed: return "mixed";
  }
  return "?";
}

struct HoleRect {
  int x0 = 0, y0 = 0, w = 0, h = 0;
};

struct PatternConfig {
  PatternKind kind = PatternKind::Hole;
  std::uint64_t seed = 0;

  // hole
  std::vector<HoleRect> rects;
  int blob_count = 0;
  double coverage_pct = 0.0;  // target invalid coverage of the whole map

  // range
  double lo_pct = 0.0;
  double hi_pct = 100.0;

  // sparse_random: count wins when >= 0, otherwise fraction of valid pixels
  long long count = -1;
  double fraction = -1.0;

  // sparse_lidar
  int lines = 0;

  // mixed
  std::vector<PatternConfig> components;

  void validate() const {
    if (kind == PatternKind::Range && !(0.0 <= lo_pct && lo_pct < hi_pct && hi_pct <= 100.0))
      throw ConfigError("pattern: need 0 <= lo_pct < hi_pct <= 100");
    if (kind == PatternKind::SparseRandom && count < 0 && !(fraction >= 0.0 && fraction <= 1.0))
      throw ConfigError("pattern: sparse_random needs count >= 0 or fraction in [0,1]");
    if (kind == PatternKind::Mixed)
      for (const auto& c : components) c.validate();
  }
};

// ---------------------------------------------------------------------------
// Scene generation

// Dense ground truth: a tilted background plane plus z-buffered primitives
// (spheres and boxes). RGB is shaded from depth normals and per-object albedo
// so texture correlates with geometry. Output is fully valid.
inline std::pair<RgbImage, DepthMap> gen_scene(std::uint64_t seed, int height, int width,
                                               int object_count) {
  if (height < 16 || width < 16) throw ConfigError("gen_scene: height and width must be >= 16");
  Rng rng(seed);

  DepthMap depth(height, width);
  std::vector<double> albedo(std::size_t(height) * width * 3, 0.0);

  const double z0 = rng.uniform(1.0, 1.8);
  const double slope_y = rng.uniform(0.4, 1.0);
  const double slope_x = rng.uniform(-0.25, 0.25);
  const double bg_col[3] = {rng.uniform(0.25, 0.85), rng.uniform(0.25, 0.85),
                            rng.uniform(0.25, 0.85)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = depth.idx(y, x);
      depth.values[i] = z0 + slope_y * (double(y) / double(height - 1)) +
                        slope_x * (double(x) / double(width - 1));
      depth.valid[i] = 1;
      for (int c = 0; c < 3; ++c) albedo[i * 3 + c] = bg_col[c];
    }
  }

  for (int obj = 0; obj < object_count; ++obj) {
    const bool sphere = rng.below(2) == 0;
    const double col[3] = {rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95),
                           rng.uniform(0.15, 0.95)};
    if (sphere) {
      const double cy = rng.uniform(0.15, 0.85) * (height - 1);
      const double cx = rng.uniform(0.15, 0.85) * (width - 1);
      const double r = rng.uniform(0.08, 0.25) * std::min(height, width);
      const double z_front = rng.uniform(0.5, z0 - 0.1);
      const double bump = rng.uniform(0.05, 0.3);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          const double dy = y - cy, dx = x - cx;
          const double d2 = (dy * dy + dx * dx) / (r * r);
          if (d2 > 1.0) continue;
          const double z = z_front + bump * (1.0 - std::sqrt(1.0 - d2));
          const std::size_t i = depth.idx(y, x);
          if (z < depth.values[i]) {
            depth.values[i] = z;
            for (int c = 0; c < 3; ++c) albedo[i * 3 + c] = col[c];
          }
        }
      }
    } else {
      const int bw = 1 + int(rng.below(std::uint64_t(std::max(2, width / 2))));
      const int bh = 1 + int(rng.below(std::uint64_t(std::max(2, height / 2))));
      const int x0 = int(rng.below(std::uint64_t(std::max(1, width - bw))));
      const int y0 = int(rng.below(std::uint64_t(std::max(1, height - bh))));
      const double z_front = rng.uniform(0.5, z0 - 0.1);
      const double gx = rng.uniform(-0.2, 0.2), gy = rng.uniform(-0.2, 0.2);
      for (int y = y0; y < std::min(height, y0 + bh); ++y) {
        for (int x = x0; x < std::min(width, x0 + bw); ++x) {
          const double z = z_front + gx * (double(x - x0) / std::max(1, bw)) +
                           gy * (double(y - y0) / std::max(1, bh));
          const std::size_t i = depth.idx(y, x);
          if (z > 0.05 && z < depth.values[i]) {
            depth.values[i] = z;
            for (int c = 0; c < 3; ++c) albedo[i * 3 + c] = col[c];
          }
        }
      }
    }
  }

  // Shade from depth normals; gain exaggerates desk-scale relief.
  RgbImage img(height, width);
  const double lx = 0.4, ly = -0.5, lz = 1.0;
  const double ln = std::sqrt(lx * lx + ly * ly + lz * lz);
  const double gain = 40.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int xm = std::max(0, x - 1), xp = std::min(width - 1, x + 1);
      const int ym = std::max(0, y - 1), yp = std::min(height - 1, y + 1);
      const double dzx = (depth.values[depth.idx(y, xp)] - depth.values[depth.idx(y, xm)]) /
                         double(xp - xm == 0 ? 1 : xp - xm);
      const double dzy = (depth.values[depth.idx(yp, x)] - depth.values[depth.idx(ym, x)]) /
                         double(yp - ym == 0 ? 1 : yp - ym);
      double nx = -dzx * gain, ny = -dzy * gain, nz = 1.0;
      const double nn = std::sqrt(nx * nx + ny * ny + nz * nz);
      nx /= nn;
      ny /= nn;
      nz /= nn;
      const double lambert = std::max(0.0, (nx * lx + ny * ly + nz * lz) / ln);
      const double shade = 0.25 + 0.75 * lambert;
      const std::size_t i = depth.idx(y, x);
      for (int c = 0; c < 3; ++c)
        img.rgb[i * 3 + c] = std::clamp(albedo[i * 3 + c] * shade, 0.0, 1.0);
    }
  }
  return {std::move(img), std::move(depth)};
}

// ---------------------------------------------------------------------------
// Degradation patterns

// Rectangles plus seeded random-walk blobs. Blob growth stops the moment the
// map-wide invalid count reaches the coverage target, so achieved coverage is
// within one pixel of it. Walkers teleport after long stretches without
// progress so high targets still terminate.
inline DepthMap apply_hole(const DepthMap& d, const PatternConfig& cfg) {
  if (cfg.kind != PatternKind::Hole) throw ConfigError("apply_hole: wrong pattern kind");
  if (cfg.coverage_pct >= 100.0) throw ConfigError("apply_hole: coverage target must be < 100%");
  DepthMap out = d;
  for (const auto& r : cfg.rects) {
    const int x1 = std::min(out.width, r.x0 + r.w), y1 = std::min(out.height, r.y0 + r.h);
    for (int y = std::max(0, r.y0); y < y1; ++y)
      for (int x = std::max(0, r.x0); x < x1; ++x) out.invalidate(y, x);
  }
  if (cfg.coverage_pct <= 0.0) return out;

  const std::size_t total = out.pixels();
  const std::size_t target =
      std::size_t(std::llround(cfg.coverage_pct / 100.0 * double(total)));
  std::size_t invalid = total - out.valid_count();
  if (invalid >= target) return out;

  Rng rng(cfg.seed);
  const int nb = std::max(1, cfg.blob_count);
  std::vector<std::pair<int, int>> walkers(nb);
  for (auto& wpos : walkers)
    wpos = {int(rng.below(std::uint64_t(out.height))), int(rng.below(std::uint64_t(out.width)))};

  const long stall_limit = 8L * (out.height + out.width);
  long stalled = 0;
  while (invalid < target) {
    for (auto& [wy, wx] : walkers) {
      const std::size_t i = out.idx(wy, wx);
      if (out.valid[i]) {
        out.invalidate(wy, wx);
        ++invalid;
        stalled = 0;
        if (invalid >= target) break;
      } else if (++stalled > stall_limit) {
        wy = int(rng.below(std::uint64_t(out.height)));
        wx = int(rng.below(std::uint64_t(out.width)));
        stalled = 0;
        continue;
      }
      switch (rng.below(4)) {
        case 0: wy = std::max(0, wy - 1); break;
        case 1: wy = std::min(out.height - 1, wy + 1); break;
        case 2: wx = std::max(0, wx - 1); break;
        default: wx = std::min(out.width - 1, wx + 1); break;
      }
    }
  }
  return out;
}

// Nearest-rank percentile over the sorted valid list: element at index
// max(1, ceil(q*N/100)), 1-based.
inline double nearest_rank_percentile(const std::vector<double>& sorted_vals, double q) {
  if (sorted_vals.empty()) throw EmptyInput("percentile of empty list");
  const std::size_t n = sorted_vals.size();
  std::size_t rank = std::size_t(std::ceil(q * double(n) / 100.0));
  if (rank < 1) rank = 1;
  if (rank > n) rank = n;
  return sorted_vals[rank - 1];
}

// Keep pixels whose value lies within the [lo_pct, hi_pct] nearest-rank
// percentile band of the valid values.
inline DepthMap apply_range(const DepthMap& d, double lo_pct, double hi_pct) {
  if (!(0.0 <= lo_pct && lo_pct < hi_pct && hi_pct <= 100.0))
    throw ConfigError("apply_range: need 0 <= lo_pct < hi_pct <= 100");
  std::vector<double> vals;
  vals.reserve(d.pixels());
  for (std::size_t i = 0; i < d.pixels(); ++i)
    if (d.valid[i]) vals.push_back(d.values[i]);
  if (vals.empty()) throw EmptyInput("apply_range: no valid pixels");
  std::sort(vals.begin(), vals.end());
  const double p_lo = nearest_rank_percentile(vals, lo_pct);
  const double p_hi = nearest_rank_percentile(vals, hi_pct);
  DepthMap out = d;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const std::size_t i = out.idx(y, x);
      if (out.valid[i] && (out.values[i] < p_lo || out.values[i] > p_hi)) out.invalidate(y, x);
    }
  return out;
}

// Seeded keep-set of distinct grid positions; validity survives only there.
// The keep-set is drawn from the full grid, independent of the input's
// validity, which is what makes composed patterns intersect cleanly. On a
// fully valid map exactly min(count, pixels) pixels survive; on a partially
// valid map the survivor count is |keep-set AND valid|.
inline DepthMap apply_sparse_random(const DepthMap& d, const PatternConfig& cfg) {
  if (cfg.kind != PatternKind::SparseRandom)
    throw ConfigError("apply_sparse_random: wrong pattern kind");
  cfg.validate();
  const std::size_t total = d.pixels();
  std::size_t count;
  if (cfg.count >= 0) {
    count = std::size_t(cfg.count);
  } else {
    count = std::size_t(std::llround(cfg.fraction * double(d.valid_count())));
  }
  count = std::min(count, total);

  Rng rng(cfg.seed);
  const auto keep = rng.sample_distinct(std::uint32_t(total), std::uint32_t(count));
  std::vector<std::uint8_t> keep_mask(total, 0);
  for (auto i : keep) keep_mask[i] = 1;

  DepthMap out = d;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const std::size_t i = out.idx(y, x);
      if (out.valid[i] && !keep_mask[i]) out.invalidate(y, x);
    }
  return out;
}

// Keep rows floor(i*height/lines) for i = 0..lines-1, invalidate the rest.
inline DepthMap apply_sparse_lidar(const DepthMap& d, int lines) {
  if (lines < 1 || lines > d.height) throw ConfigError("apply_sparse_lidar: need 1 <= lines <= height");
  std::vector<std::uint8_t> keep_row(std::size_t(d.height), 0);
  for (int i = 0; i < lines; ++i)
    keep_row[std::size_t((long long)i * d.height / lines)] = 1;
  DepthMap out = d;
  for (int y = 0; y < out.height; ++y) {
    if (keep_row[std::size_t(y)]) continue;
    for (int x = 0; x < out.width; ++x)
      if (out.valid[out.idx(y, x)]) out.invalidate(y, x);
  }
  return out;
}

inline DepthMap apply_pattern(const DepthMap& d, const PatternConfig& cfg) {
  cfg.validate();
  switch (cfg.kind) {
    case PatternKind::Hole: return apply_hole(d, cfg);
    case PatternKind::Range: return apply_range(d, cfg.lo_pct, cfg.hi_pct);
    case PatternKind::SparseRandom: return apply_sparse_random(d, cfg);
    case PatternKind::SparseLidar: return apply_sparse_lidar(d, cfg.lines);
    case PatternKind::Mixed: {
      DepthMap out = d;
      for (const auto& c : cfg.components) out = apply_pattern(out, c);
      return out;
    }
  }
  throw ConfigError("apply_pattern: unknown kind");
}

// Training-time degradation draw: a fair coin between Random Sampling
// (fraction log-uniform in [0.001, 0.5]) and Hole Sampling (coverage uniform
// in [10%, 60%], 1-4 blobs).
inline PatternConfig sample_training_pattern(std::uint64_t seed) {
  Rng rng(seed);
  PatternConfig cfg;
  if (rng.below(2) == 0) {
    cfg.kind = PatternKind::SparseRandom;
    cfg.fraction = std::exp(rng.uniform(std::log(0.001), std::log(0.5)));
    cfg.count = -1;
  } else {
    cfg.kind = PatternKind::Hole;
    cfg.coverage_pct = rng.uniform(10.0, 60.0);
    cfg.blob_count = 1 + int(rng.below(4));
  }
  cfg.seed = rng.next_u64();
  cfg.validate();
  return cfg;
}

}  // namespace a2f
