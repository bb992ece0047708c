#pragma once

#include <cstdint>
#include <vector>

#include "any2full/common.hpp"

namespace a2f {

// Pixel grids used throughout the pipeline. Depth values are meters; invalid
// pixels carry the sentinel 0.0 and must never be read as data.
struct DepthMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;       // meters (or disparity, see depth_domain)
  std::vector<std::uint8_t> valid;  // per pixel

  DepthMap() = default;
  DepthMap(int h, int w) : height(h), width(w), values(std::size_t(h) * w, 0.0), valid(std::size_t(h) * w, 0) {}

  std::size_t idx(int y, int x) const { return std::size_t(y) * width + x; }
  std::size_t pixels() const { return values.size(); }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v ? 1 : 0;
    return n;
  }

  void invalidate(int y, int x) {
    const std::size_t i = idx(y, x);
    valid[i] = 0;
    values[i] = 0.0;  // sentinel
  }
};

// Unitless normalized-disparity grid (same layout as DepthMap, different domain).
struct RelativeMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  RelativeMap() = default;
  RelativeMap(int h, int w) : height(h), width(w), values(std::size_t(h) * w, 0.0), valid(std::size_t(h) * w, 0) {}

  std::size_t idx(int y, int x) const { return std::size_t(y) * width + x; }
  std::size_t pixels() const { return values.size(); }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v ? 1 : 0;
    return n;
  }
};

// Interleaved RGB in [0,1], three channels per pixel.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<double> rgb;  // r,g,b per pixel, row-major

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), rgb(std::size_t(h) * w * 3, 0.0) {}

  std::size_t idx(int y, int x, int c) const { return (std::size_t(y) * width + x) * 3 + c; }
};

}  // namespace a2f
