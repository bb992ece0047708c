#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "any2full/common.hpp"
#include "any2full/maps.hpp"
#include "any2full/numkernel.hpp"
#include "any2full/rng.hpp"
#include "any2full/tensor.hpp"

// Mask-aware sparse depth embedding: patchify, multi-size nearest-fill,
// joint (depth, mask) linear encoding per pyramid size, positional
// embeddings, and a mean CLS token. The stored values of invalid pixels are
// never read, so the output is invariant to them.

namespace a2f {

struct PatchBlock {
  int size = 0;                     // side length in pixels
  std::vector<double> values;       // size*size, row-major
  std::vector<std::uint8_t> valid;  // size*size
};

// Non-overlapping patches in row-major patch order.
inline std::vector<PatchBlock> patchify(const RelativeMap& rel, int patch) {
  if (patch < 1 || rel.height % patch != 0 || rel.width % patch != 0)
    throw ShapeError("patchify: dimensions not divisible by patch size");
  const int rows = rel.height / patch, cols = rel.width / patch;
  std::vector<PatchBlock> blocks(std::size_t(rows) * cols);
  for (int pr = 0; pr < rows; ++pr)
    for (int pc = 0; pc < cols; ++pc) {
      PatchBlock& b = blocks[std::size_t(pr) * cols + pc];
      b.size = patch;
      b.values.resize(std::size_t(patch) * patch);
      b.valid.resize(std::size_t(patch) * patch);
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x) {
          const std::size_t src = rel.idx(pr * patch + y, pc * patch + x);
          b.values[std::size_t(y) * patch + x] = rel.values[src];
          b.valid[std::size_t(y) * patch + x] = rel.valid[src];
        }
    }
  return blocks;
}

// Each invalid pixel takes the value of the nearest valid pixel by Euclidean
// pixel distance; ties break on smaller row, then smaller column. A block
// with no valid pixel fills with zeros. Works on arbitrary h x w blocks.
inline std::vector<double> nearest_fill(const std::vector<double>& values,
                                        const std::vector<std::uint8_t>& valid, int h, int w) {
  std::vector<double> out(values.size(), 0.0);
  bool any_valid = false;
  for (auto v : valid)
    if (v) {
      any_valid = true;
      break;
    }
  if (!any_valid) return out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = std::size_t(y) * w + x;
      if (valid[i]) {
        out[i] = values[i];
        continue;
      }
      long best_d2 = -1;
      int best_y = 0, best_x = 0;
      for (int vy = 0; vy < h; ++vy)
        for (int vx = 0; vx < w; ++vx) {
          if (!valid[std::size_t(vy) * w + vx]) continue;
          const long dy = vy - y, dx = vx - x;
          const long d2 = dy * dy + dx * dx;
          if (best_d2 < 0 || d2 < best_d2 ||
              (d2 == best_d2 && (vy < best_y || (vy == best_y && vx < best_x)))) {
            best_d2 = d2;
            best_y = vy;
            best_x = vx;
          }
        }
      out[i] = values[std::size_t(best_y) * w + best_x];
    }
  return out;
}

// True iff the patch holds at least one valid measurement.
inline std::vector<std::uint8_t> patch_validity(const std::vector<PatchBlock>& blocks) {
  std::vector<std::uint8_t> out(blocks.size(), 0);
  for (std::size_t p = 0; p < blocks.size(); ++p)
    for (auto v : blocks[p].valid)
      if (v) {
        out[p] = 1;
        break;
      }
  return out;
}

// Mean-over-valid pooling of a block down to (size/div) x (size/div) cells;
// a cell with no valid source pixels stays invalid.
inline PatchBlock downsample_block(const PatchBlock& b, int div) {
  PatchBlock out;
  out.size = std::max(1, b.size / div);
  out.values.assign(std::size_t(out.size) * out.size, 0.0);
  out.valid.assign(std::size_t(out.size) * out.size, 0);
  const int cell = b.size / out.size;
  for (int cy = 0; cy < out.size; ++cy)
    for (int cx = 0; cx < out.size; ++cx) {
      double sum = 0.0;
      int n = 0;
      for (int y = cy * cell; y < (cy + 1) * cell; ++y)
        for (int x = cx * cell; x < (cx + 1) * cell; ++x)
          if (b.valid[std::size_t(y) * b.size + x]) {
            sum += b.values[std::size_t(y) * b.size + x];
            ++n;
          }
      if (n > 0) {
        out.values[std::size_t(cy) * out.size + cx] = sum / double(n);
        out.valid[std::size_t(cy) * out.size + cx] = 1;
      }
    }
  return out;
}

struct PatchFeatures {
  Tensor tokens;                          // (P+1) x D, row 0 = CLS
  std::vector<std::uint8_t> patch_valid;  // length P
  int grid_rows = 0;
  int grid_cols = 0;
};

// Per-size linear maps from (filled depth || mask) to D, plus learned
// positional embeddings for CLS and patches.
struct EmbedParams {
  std::vector<int> divisors;     // pyramid: patch/div per size, e.g. {1,2,4}
  std::vector<Tensor> weights;   // per size: (2*s*s) x D
  std::vector<Tensor> biases;    // per size: 1 x D
  Tensor pos;                    // (P+1) x D

  template <class F>
  void visit(F&& f) {
    for (auto& w : weights) f(w);
    for (auto& b : biases) f(b);
    f(pos);
  }
  template <class F>
  void visit(F&& f) const {
    for (const auto& w : weights) f(w);
    for (const auto& b : biases) f(b);
    f(pos);
  }
};

inline EmbedParams make_embed_params(int patch, int grid_rows, int grid_cols, std::size_t dim,
                                     const std::vector<int>& divisors, Rng& rng) {
  EmbedParams p;
  p.divisors = divisors;
  for (int div : divisors) {
    const int s = std::max(1, patch / div);
    p.weights.push_back(Tensor::random(std::size_t(2) * s * s, dim, rng, -0.05, 0.05));
    p.biases.push_back(Tensor::random(1, dim, rng, -0.05, 0.05));
  }
  p.pos = Tensor::random(std::size_t(grid_rows) * grid_cols + 1, dim, rng, -0.05, 0.05);
  return p;
}

// Patch embedding: per pyramid size, downsample (mean over valid), nearest
// fill, linearly encode values and mask jointly, then average across sizes.
// CLS is the mean of the patch embeddings before positional embeddings are
// added; every token then receives its own positional embedding.
inline PatchFeatures embed_patches(const RelativeMap& rel, int patch, const EmbedParams& params) {
  if (params.divisors.empty()) throw ConfigError("embed_patches: empty size list");
  const auto blocks = patchify(rel, patch);
  const int rows = rel.height / patch, cols = rel.width / patch;
  const std::size_t P = blocks.size();
  const std::size_t D = params.pos.cols();
  if (params.pos.rows() != P + 1) throw ShapeError("embed_patches: positional table size mismatch");

  PatchFeatures out;
  out.grid_rows = rows;
  out.grid_cols = cols;
  out.patch_valid = patch_validity(blocks);
  out.tokens = Tensor(P + 1, D);

  std::vector<double> cls(D, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    std::vector<double> feat(D, 0.0);
    for (std::size_t si = 0; si < params.divisors.size(); ++si) {
      const PatchBlock small = downsample_block(blocks[p], params.divisors[si]);
      const auto filled = nearest_fill(small.values, small.valid, small.size, small.size);
      const std::size_t cells = filled.size();
      // input vector: filled values, then mask as 0/1
      const Tensor& W = params.weights[si];
      const Tensor& b = params.biases[si];
      if (W.rows() != 2 * cells) throw ShapeError("embed_patches: weight size mismatch");
      for (std::size_t d = 0; d < D; ++d) {
        double acc = b.at(0, d);
        for (std::size_t c = 0; c < cells; ++c) acc += filled[c] * W.at(c, d);
        for (std::size_t c = 0; c < cells; ++c)
          acc += (small.valid[c] ? 1.0 : 0.0) * W.at(cells + c, d);
        feat[d] += acc;
      }
    }
    const double inv_sizes = 1.0 / double(params.divisors.size());
    for (std::size_t d = 0; d < D; ++d) {
      feat[d] *= inv_sizes;
      cls[d] += feat[d];
      out.tokens.at(p + 1, d) = feat[d] + params.pos.at(p + 1, d);
    }
  }
  for (std::size_t d = 0; d < D; ++d)
    out.tokens.at(0, d) = cls[d] / double(P) + params.pos.at(0, d);
  return out;
}

}  // namespace a2f
