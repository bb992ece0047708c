#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "any2full/common.hpp"
#include "any2full/tensor.hpp"

// Deterministic dense kernels shared by the neural modules. All loops run in
// a fixed serial order so results are bit-reproducible across thread counts.

namespace a2f {

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.at(i, j) = acc;
    }
  }
  return c;
}

inline Tensor transpose(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

// Row-wise softmax with per-row max subtraction. Masked entries (mask value 0)
// get exactly zero weight. A fully masked row throws EmptyRow unless
// fallback_uniform is set, in which case the row becomes uniform over all
// entries.
inline Tensor softmax_rows(const Tensor& logits, const std::vector<std::uint8_t>* mask = nullptr,
                           bool fallback_uniform = false) {
  if (logits.rank() != 2) throw ShapeError("softmax_rows: rank-2 input required");
  if (mask && mask->size() != logits.size())
    throw ShapeError("softmax_rows: mask size mismatch");
  const std::size_t m = logits.rows(), n = logits.cols();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    std::size_t live = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[i * n + j]) continue;
      ++live;
      mx = std::max(mx, logits.at(i, j));
    }
    if (live == 0) {
      if (!fallback_uniform) throw EmptyRow("softmax_rows: fully masked row");
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) = 1.0 / static_cast<double>(n);
      continue;
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[i * n + j]) {
        out.at(i, j) = 0.0;
        continue;
      }
      const double e = std::exp(logits.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[i * n + j]) continue;
      out.at(i, j) /= sum;
    }
  }
  return out;
}

// Per-token standardization over the last axis, then affine. Population
// variance; eps keeps the denominator positive.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() != 2) throw ShapeError("layer_norm: rank-2 input required");
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d) throw ShapeError("layer_norm: affine size mismatch");
  Tensor out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x.at(i, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x.at(i, j) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j)
      out.at(i, j) = (x.at(i, j) - mu) * inv * gain[j] + bias[j];
  }
  return out;
}

// Bilinear resize, align-corners-false: source coordinate of output cell i is
//   src = (i + 0.5) * in/out - 0.5,
// neighbor indices clamped to the valid range. Interpolation uses the
// lerp form a + t*(b-a) so constant maps and identity resizes are preserved
// bitwise.
inline Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 2) throw ShapeError("bilinear_resize: rank-2 input required");
  const std::size_t h = x.rows(), w = x.cols();
  if (h < 1 || w < 1 || out_h < 1 || out_w < 1)
    throw ShapeError("bilinear_resize: degenerate size");
  Tensor out(out_h, out_w);
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  auto clamp_idx = [](long v, long hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  for (std::size_t i = 0; i < out_h; ++i) {
    const double fy = (static_cast<double>(i) + 0.5) * sy - 0.5;
    const long y0 = static_cast<long>(std::floor(fy));
    const double ty = fy - static_cast<double>(y0);
    const long yi0 = clamp_idx(y0, static_cast<long>(h) - 1);
    const long yi1 = clamp_idx(y0 + 1, static_cast<long>(h) - 1);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double fx = (static_cast<double>(j) + 0.5) * sx - 0.5;
      const long x0 = static_cast<long>(std::floor(fx));
      const double tx = fx - static_cast<double>(x0);
      const long xi0 = clamp_idx(x0, static_cast<long>(w) - 1);
      const long xi1 = clamp_idx(x0 + 1, static_cast<long>(w) - 1);
      const double a = x.at(yi0, xi0), b = x.at(yi0, xi1);
      const double c = x.at(yi1, xi0), d = x.at(yi1, xi1);
      const double top = a + tx * (b - a);
      const double bot = c + tx * (d - c);
      out.at(i, j) = top + ty * (bot - top);
    }
  }
  return out;
}

}  // namespace a2f
