#pragma once

#include <cstdint>
#include <vector>

#include "any2full/common.hpp"
#include "any2full/maps.hpp"
#include "any2full/numkernel.hpp"
#include "any2full/rng.hpp"
#include "any2full/tensor.hpp"
#include "any2full/transformer.hpp"

// Toy ViT-style monocular depth backbone. The encoder runs G groups of n
// pre-norm blocks and records every block output as a tap; decoder level l
// consumes tap phi(l) = l*n. The decoder reassembles patch tokens onto a
// common fusion grid (patch grid upsampled x2), sums coarse-to-fine with a
// per-level residual refinement MLP, and upsamples a linear head to the
// requested output size. The backbone stays frozen; only the prompt encoder
// is ever fitted.

namespace a2f {

struct BackboneConfig {
  int input_height = 32;
  int input_width = 32;
  int patch = 8;
  std::size_t dim = 8;
  std::size_t heads = 2;
  std::size_t groups = 4;            // G, also the number of decoder levels
  std::size_t blocks_per_group = 2;  // n
  double mlp_ratio = 2.0;
  std::uint64_t seed = 11;

  std::size_t total_blocks() const { return groups * blocks_per_group; }
  std::size_t grid_rows() const { return std::size_t(input_height / patch); }
  std::size_t grid_cols() const { return std::size_t(input_width / patch); }
  std::size_t patches() const { return grid_rows() * grid_cols(); }

  // phi(l) = l*n maps decoder level l (1-based) to its encoder tap.
  std::size_t tap_index(std::size_t level) const { return level * blocks_per_group; }

  void validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0)
      throw ConfigError("backbone: dim must be divisible by heads");
    if (groups < 2) throw ConfigError("backbone: groups must be >= 2");
    if (blocks_per_group < 1) throw ConfigError("backbone: blocks_per_group must be >= 1");
    if (patch < 1 || input_height % patch != 0 || input_width % patch != 0)
      throw ConfigError("backbone: input dims must be divisible by patch");
    if (mlp_ratio <= 0.0) throw ConfigError("backbone: mlp_ratio must be positive");
    for (std::size_t l = 1; l <= groups; ++l)
      if (tap_index(l) > total_blocks())
        throw ConfigError("backbone: tap bookkeeping broken");  // unreachable by construction
  }
};

struct BackboneTaps {
  Tensor embed;                // tap 0: patch-embed tokens
  std::vector<Tensor> blocks;  // taps 1..G*n, output of each block

  const Tensor& tap(std::size_t j) const { return j == 0 ? embed : blocks[j - 1]; }
};

struct DecoderParams {
  std::vector<Tensor> proj_w;    // per level: D x F
  std::vector<Tensor> proj_b;    // per level: 1 x F
  std::vector<MlpParams> refine; // per level, F -> 2F -> F, applied residually
  Tensor head_w;                 // F x 1
  Tensor head_b;                 // 1 x 1
};

struct ModelParams {
  Tensor patch_w;  // (3*patch*patch) x D
  Tensor patch_b;  // 1 x D
  Tensor cls;      // 1 x D
  Tensor pos;      // (P+1) x D
  std::vector<BlockParams> blocks;
  DecoderParams decoder;

  // Serialization and flattening order. Keep in sync with the A2F1 layout
  // documented in io.hpp.
  template <class F>
  void visit(F&& f) {
    f(patch_w);
    f(patch_b);
    f(cls);
    f(pos);
    for (auto& b : blocks) {
      f(b.ln1.gain);
      f(b.ln1.bias);
      f(b.attn.wq);
      f(b.attn.bq);
      f(b.attn.wk);
      f(b.attn.bk);
      f(b.attn.wv);
      f(b.attn.bv);
      f(b.attn.wo);
      f(b.attn.bo);
      f(b.ln2.gain);
      f(b.ln2.bias);
      f(b.mlp.w1);
      f(b.mlp.b1);
      f(b.mlp.w2);
      f(b.mlp.b2);
    }
    for (auto& w : decoder.proj_w) f(w);
    for (auto& b : decoder.proj_b) f(b);
    for (auto& m : decoder.refine) {
      f(m.w1);
      f(m.b1);
      f(m.w2);
      f(m.b2);
    }
    f(decoder.head_w);
    f(decoder.head_b);
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit([&](Tensor& t) { f(const_cast<const Tensor&>(t)); });
  }
};

inline ModelParams make_model_params(const BackboneConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t D = cfg.dim;
  const std::size_t F = D;  // decoder fusion dim
  const std::size_t hidden = std::size_t(cfg.mlp_ratio * double(D) + 0.5);

  ModelParams p;
  p.patch_w = Tensor::random(std::size_t(3) * cfg.patch * cfg.patch, D, rng, -0.05, 0.05);
  p.patch_b = Tensor::random(1, D, rng, -0.05, 0.05);
  p.cls = Tensor::random(1, D, rng, -0.05, 0.05);
  p.pos = Tensor::random(cfg.patches() + 1, D, rng, -0.05, 0.05);
  for (std::size_t b = 0; b < cfg.total_blocks(); ++b) {
    BlockParams bp;
    bp.ln1 = make_layer_norm(D);
    bp.attn = make_attn(D, rng);
    bp.ln2 = make_layer_norm(D);
    bp.mlp = make_mlp(D, hidden, D, rng);
    p.blocks.push_back(std::move(bp));
  }
  for (std::size_t l = 0; l < cfg.groups; ++l) {
    p.decoder.proj_w.push_back(Tensor::random(D, F, rng, -0.05, 0.05));
    p.decoder.proj_b.push_back(Tensor::random(1, F, rng, -0.05, 0.05));
  }
  for (std::size_t l = 0; l < cfg.groups; ++l)
    p.decoder.refine.push_back(make_mlp(F, 2 * F, F, rng));
  p.decoder.head_w = Tensor::random(F, 1, rng, -0.05, 0.05);
  p.decoder.head_b = Tensor::random(1, 1, rng, -0.05, 0.05);
  return p;
}

// Per-patch linear projection of flattened RGB plus positional embeddings and
// a learned CLS token.
inline Tensor patch_embed_rgb(const RgbImage& img, const ModelParams& params,
                              const BackboneConfig& cfg) {
  if (img.height % cfg.patch != 0 || img.width % cfg.patch != 0)
    throw ShapeError("patch_embed_rgb: image dims not divisible by patch");
  const std::size_t rows = std::size_t(img.height / cfg.patch);
  const std::size_t cols = std::size_t(img.width / cfg.patch);
  const std::size_t P = rows * cols;
  const std::size_t D = cfg.dim;
  if (params.pos.rows() != P + 1) throw ShapeError("patch_embed_rgb: positional table mismatch");

  Tensor tokens(P + 1, D);
  for (std::size_t d = 0; d < D; ++d) tokens.at(0, d) = params.cls.at(0, d) + params.pos.at(0, d);
  const std::size_t flat = std::size_t(3) * cfg.patch * cfg.patch;
  std::vector<double> x(flat);
  for (std::size_t pr = 0; pr < rows; ++pr)
    for (std::size_t pc = 0; pc < cols; ++pc) {
      std::size_t k = 0;
      for (int y = 0; y < cfg.patch; ++y)
        for (int xx = 0; xx < cfg.patch; ++xx)
          for (int c = 0; c < 3; ++c)
            x[k++] = img.rgb[img.idx(int(pr) * cfg.patch + y, int(pc) * cfg.patch + xx, c)];
      const std::size_t p = pr * cols + pc;
      for (std::size_t d = 0; d < D; ++d) {
        double acc = params.patch_b.at(0, d);
        for (std::size_t i = 0; i < flat; ++i) acc += x[i] * params.patch_w.at(i, d);
        tokens.at(p + 1, d) = acc + params.pos.at(p + 1, d);
      }
    }
  return tokens;
}

// Sequential pre-norm blocks; the output of every block is recorded as a tap.
// attn_traces, when given, receives per block a vector of per-head weights.
inline BackboneTaps encode(const Tensor& tokens, const ModelParams& params,
                           const BackboneConfig& cfg,
                           std::vector<std::vector<Tensor>>* attn_traces = nullptr) {
  BackboneTaps taps;
  taps.embed = tokens;
  Tensor x = tokens;
  for (std::size_t b = 0; b < cfg.total_blocks(); ++b) {
    std::vector<Tensor> w;
    x = vit_block_forward(params.blocks[b], x, cfg.heads, attn_traces ? &w : nullptr);
    if (attn_traces) attn_traces->push_back(std::move(w));
    taps.blocks.push_back(x);
  }
  return taps;
}

// Decode one token set per level (level_tokens[l-1] corresponds to tap
// phi(l)). CLS is dropped, patch tokens are projected and resized onto the
// common fusion grid, summed coarse to fine with residual refinement, and a
// linear head is upsampled to the output size.
inline RelativeMap decode(const std::vector<Tensor>& level_tokens, const ModelParams& params,
                          const BackboneConfig& cfg, int out_h, int out_w) {
  if (level_tokens.size() != cfg.groups) throw ShapeError("decode: one token set per level required");
  const std::size_t rows = cfg.grid_rows(), cols = cfg.grid_cols();
  const std::size_t P = rows * cols;
  const std::size_t F = params.decoder.head_w.rows();
  const std::size_t ch = rows * 2, cw = cols * 2;  // common fusion grid
  const std::size_t N = ch * cw;

  Tensor acc(N, F);
  for (std::size_t li = cfg.groups; li >= 1; --li) {
    const Tensor& tok = level_tokens[li - 1];
    if (tok.rows() != P + 1) throw ShapeError("decode: token count mismatch");
    Tensor patches(P, tok.cols());
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t d = 0; d < tok.cols(); ++d) patches.at(p, d) = tok.at(p + 1, d);
    const Tensor proj = linear(patches, params.decoder.proj_w[li - 1], params.decoder.proj_b[li - 1]);
    // per channel: patch grid -> common grid
    Tensor level(N, F);
    for (std::size_t f = 0; f < F; ++f) {
      Tensor g(rows, cols);
      for (std::size_t p = 0; p < P; ++p) g[p] = proj.at(p, f);
      const Tensor up = bilinear_resize(g, ch, cw);
      for (std::size_t i = 0; i < N; ++i) level.at(i, f) = up[i];
    }
    acc = add(acc, level);
    acc = add(acc, mlp_forward(params.decoder.refine[li - 1], acc));
  }
  const Tensor head = linear(acc, params.decoder.head_w, params.decoder.head_b);
  Tensor g(ch, cw);
  for (std::size_t i = 0; i < N; ++i) g[i] = head.at(i, 0);
  const Tensor full = bilinear_resize(g, std::size_t(out_h), std::size_t(out_w));

  RelativeMap out(out_h, out_w);
  for (std::size_t i = 0; i < out.pixels(); ++i) {
    out.values[i] = full[i];
    out.valid[i] = 1;
  }
  return out;
}

// Baseline M(I): encode, then decode the unmodulated taps.
inline RelativeMap predict_relative(const RgbImage& img, const ModelParams& params,
                                    const BackboneConfig& cfg) {
  const BackboneTaps taps = encode(patch_embed_rgb(img, params, cfg), params, cfg);
  std::vector<Tensor> levels;
  for (std::size_t l = 1; l <= cfg.groups; ++l) levels.push_back(taps.tap(cfg.tap_index(l)));
  return decode(levels, params, cfg, img.height, img.width);
}

}  // namespace a2f
