#pragma once

#include <cstdint>
#include <vector>

#include "any2full/common.hpp"
#include "any2full/depth_domain.hpp"
#include "any2full/maps.hpp"
#include "any2full/mde_backbone.hpp"
#include "any2full/sparse_embed.hpp"
#include "any2full/tensor.hpp"
#include "any2full/transformer.hpp"

// Scale-Aware Prompt Encoder and the prompted forward pass.
//
// Local Enrichment: token-wise FiLM of backbone features conditioned on the
// sparse depth embedding. Global Propagation: L_p geometry-guided blocks
// where attention weights come only from backbone features and the scale
// stream supplies the values; the patch-validity mask applies in block 1
// only. Scale Prompt Fusion: per prompted decoder level, token-wise FiLM of
// the decoder tap, gamma conditioned on the prompt alone and beta on prompt
// and tap. Fusion heads are identity-initialized (zero final weights, gamma
// bias 1, beta bias 0) so the prompted output at init equals the baseline
// bitwise.

namespace a2f {

struct SapeConfig {
  std::size_t prompted_levels = 0;  // L_p; 0 means the default G-1
  std::vector<int> embed_divisors = {1, 2, 4};
  std::uint64_t seed = 13;

  std::size_t resolved_levels(const BackboneConfig& bcfg) const {
    const std::size_t lp = prompted_levels == 0 ? bcfg.groups - 1 : prompted_levels;
    if (lp < 1 || lp > bcfg.groups - 1)
      throw ConfigError("sape: prompted_levels must be in [1, groups-1]");
    return lp;
  }
  // Lowest prompted decoder level; the levels below it stay unprompted.
  std::size_t first_prompted_level(const BackboneConfig& bcfg) const {
    return bcfg.groups - resolved_levels(bcfg) + 1;
  }
  // Tap guiding propagation step k (1-based): phi(level_k) - 1.
  std::size_t guide_tap(const BackboneConfig& bcfg, std::size_t k) const {
    return bcfg.tap_index(first_prompted_level(bcfg) + k - 1) - 1;
  }
  // Tap whose features condition Local Enrichment.
  std::size_t enrich_tap(const BackboneConfig& bcfg) const { return guide_tap(bcfg, 1); }
};

// A FiLM head is a pair of 2-layer MLPs (hidden 2D, smooth-ramp activation)
// emitting per-channel gamma and beta. The gamma and beta trunks may take
// differently sized conditioning inputs.
struct FiLMHead {
  MlpParams gamma;
  MlpParams beta;
};

inline Tensor film_mlp_forward(const MlpParams& p, const Tensor& x) {
  Tensor h = linear(x, p.w1, p.b1);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = softplus(h[i]);
  return linear(h, p.w2, p.b2);
}

inline FiLMHead make_film_head(std::size_t gamma_in, std::size_t beta_in, std::size_t d, Rng& rng,
                               bool identity_init) {
  FiLMHead head;
  head.gamma = make_mlp(gamma_in, 2 * d, d, rng);
  head.beta = make_mlp(beta_in, 2 * d, d, rng);
  if (identity_init) {
    // zero final weights; gamma bias 1, beta bias 0
    head.gamma.w2 = Tensor(2 * d, d);
    head.gamma.b2 = Tensor(1, d);
    for (std::size_t j = 0; j < d; ++j) head.gamma.b2[j] = 1.0;
    head.beta.w2 = Tensor(2 * d, d);
    head.beta.b2 = Tensor(1, d);
  }
  return head;
}

// Geometry-guided block parameters: layer norms for the two streams, the
// attention projections and the MLP.
struct PropBlockParams {
  LayerNormParams ln_mde, ln_glo, ln2;
  AttnParams attn;
  MlpParams mlp;
};

struct SapeParams {
  EmbedParams embed;
  FiLMHead enrich;                      // gamma and beta condition on (f_dep, f_mde)
  std::vector<PropBlockParams> blocks;  // L_p
  std::vector<FiLMHead> fusion;         // L_p, identity-initialized

  template <class F>
  void visit(F&& f) {
    embed.visit(f);
    f(enrich.gamma.w1);
    f(enrich.gamma.b1);
    f(enrich.gamma.w2);
    f(enrich.gamma.b2);
    f(enrich.beta.w1);
    f(enrich.beta.b1);
    f(enrich.beta.w2);
    f(enrich.beta.b2);
    for (auto& b : blocks) {
      f(b.ln_mde.gain);
      f(b.ln_mde.bias);
      f(b.ln_glo.gain);
      f(b.ln_glo.bias);
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
    for (auto& h : fusion) {
      f(h.gamma.w1);
      f(h.gamma.b1);
      f(h.gamma.w2);
      f(h.gamma.b2);
      f(h.beta.w1);
      f(h.beta.b1);
      f(h.beta.w2);
      f(h.beta.b2);
    }
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<SapeParams*>(this)->visit([&](Tensor& t) { f(const_cast<const Tensor&>(t)); });
  }
};

inline SapeParams make_sape_params(const BackboneConfig& bcfg, const SapeConfig& scfg) {
  bcfg.validate();
  const std::size_t lp = scfg.resolved_levels(bcfg);
  const std::size_t D = bcfg.dim;
  Rng rng(scfg.seed);
  SapeParams p;
  p.embed = make_embed_params(bcfg.patch, int(bcfg.grid_rows()), int(bcfg.grid_cols()), D,
                              scfg.embed_divisors, rng);
  p.enrich = make_film_head(2 * D, 2 * D, D, rng, /*identity_init=*/false);
  const std::size_t hidden = std::size_t(bcfg.mlp_ratio * double(D) + 0.5);
  for (std::size_t k = 0; k < lp; ++k) {
    PropBlockParams b;
    b.ln_mde = make_layer_norm(D);
    b.ln_glo = make_layer_norm(D);
    b.attn = make_attn(D, rng);
    b.ln2 = make_layer_norm(D);
    b.mlp = make_mlp(D, hidden, D, rng);
    p.blocks.push_back(std::move(b));
  }
  for (std::size_t k = 0; k < lp; ++k)
    p.fusion.push_back(make_film_head(D, 2 * D, D, rng, /*identity_init=*/true));
  return p;
}

// Token-wise FiLM: out_i = gamma(dep_i, mde_i) * mde_i + beta(dep_i, mde_i).
inline Tensor local_enrich(const PatchFeatures& f_dep, const Tensor& f_mde, const FiLMHead& head) {
  if (!f_dep.tokens.same_shape(f_mde)) throw ShapeError("local_enrich: token shapes disagree");
  const std::size_t T = f_mde.rows(), D = f_mde.cols();
  Tensor cond(T, 2 * D);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t d = 0; d < D; ++d) {
      cond.at(i, d) = f_dep.tokens.at(i, d);
      cond.at(i, D + d) = f_mde.at(i, d);
    }
  const Tensor gamma = film_mlp_forward(head.gamma, cond);
  const Tensor beta = film_mlp_forward(head.beta, cond);
  Tensor out(T, D);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t d = 0; d < D; ++d)
      out.at(i, d) = gamma.at(i, d) * f_mde.at(i, d) + beta.at(i, d);
  return out;
}

// One propagation block. Attention weights are computed from f_mde only
// (queries and keys); f_glo supplies the values, so the weight tensor is
// independent of the scale stream. patch_mask, when given, removes the keys
// of invalid patches; the CLS key always stays valid, so attention stays
// total even when every patch is masked.
inline Tensor geometry_attention_block(const Tensor& f_glo, const Tensor& f_mde,
                                       const PropBlockParams& p, std::size_t heads,
                                       const std::vector<std::uint8_t>* patch_mask = nullptr,
                                       std::vector<Tensor>* weights_out = nullptr) {
  if (!f_glo.same_shape(f_mde)) throw ShapeError("geometry_attention_block: shapes disagree");
  const std::size_t T = f_glo.rows();
  std::vector<std::uint8_t> key_mask;
  if (patch_mask) {
    if (patch_mask->size() != T - 1)
      throw ShapeError("geometry_attention_block: patch mask length mismatch");
    key_mask.resize(T);
    key_mask[0] = 1;  // CLS
    for (std::size_t p_i = 0; p_i + 1 < T; ++p_i) key_mask[p_i + 1] = (*patch_mask)[p_i];
  }
  const Tensor qk = layer_norm(f_mde, p.ln_mde.gain, p.ln_mde.bias, kLnEps);
  const Tensor v = layer_norm(f_glo, p.ln_glo.gain, p.ln_glo.bias, kLnEps);
  const Tensor att =
      attention(p.attn, qk, qk, v, heads, patch_mask ? &key_mask : nullptr, weights_out);
  const Tensor y = add(f_glo, att);
  const Tensor m = layer_norm(y, p.ln2.gain, p.ln2.bias, kLnEps);
  return add(y, mlp_forward(p.mlp, m));
}

// All intermediate states are retained as prompts, one per prompted level.
struct ScalePrompts {
  std::vector<Tensor> levels;  // F_glo^1 .. F_glo^{L_p}
};

inline ScalePrompts global_propagate(const Tensor& f_loc, const BackboneTaps& taps,
                                     const std::vector<std::uint8_t>& patch_mask,
                                     const SapeParams& params, const BackboneConfig& bcfg,
                                     const SapeConfig& scfg,
                                     std::vector<std::vector<Tensor>>* attn_traces = nullptr) {
  const std::size_t lp = scfg.resolved_levels(bcfg);
  ScalePrompts prompts;
  Tensor f = f_loc;
  for (std::size_t k = 1; k <= lp; ++k) {
    const Tensor& guide = taps.tap(scfg.guide_tap(bcfg, k));
    std::vector<Tensor> w;
    f = geometry_attention_block(f, guide, params.blocks[k - 1], bcfg.heads,
                                 k == 1 ? &patch_mask : nullptr, attn_traces ? &w : nullptr);
    if (attn_traces) attn_traces->push_back(std::move(w));
    prompts.levels.push_back(f);
  }
  return prompts;
}

// Token-wise fusion FiLM: gamma conditions on the prompt alone, beta on
// prompt and tap.
inline Tensor prompt_fuse(const Tensor& f_glo, const Tensor& f_mde, const FiLMHead& head) {
  if (!f_glo.same_shape(f_mde)) throw ShapeError("prompt_fuse: shapes disagree");
  const std::size_t T = f_glo.rows(), D = f_glo.cols();
  Tensor cond_b(T, 2 * D);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t d = 0; d < D; ++d) {
      cond_b.at(i, d) = f_glo.at(i, d);
      cond_b.at(i, D + d) = f_mde.at(i, d);
    }
  const Tensor gamma = film_mlp_forward(head.gamma, f_glo);
  const Tensor beta = film_mlp_forward(head.beta, cond_b);
  Tensor out(T, D);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t d = 0; d < D; ++d)
      out.at(i, d) = gamma.at(i, d) * f_mde.at(i, d) + beta.at(i, d);
  return out;
}

struct ForwardResult {
  RelativeMap relative;
  AlignmentFit fit;
  DepthMap metric;
};

// The prompted relative prediction: normalize sparse disparity, embed,
// enrich, propagate, fuse prompts into the prompted decoder taps, decode
// once. No intermediate dense depth exists before this single decode.
inline RelativeMap prompted_relative(const RgbImage& img, const DepthMap& sparse_metric,
                                     const ModelParams& model, const SapeParams& sape,
                                     const BackboneConfig& bcfg, const SapeConfig& scfg) {
  if (img.height != sparse_metric.height || img.width != sparse_metric.width)
    throw ShapeError("any2full_forward: image and sparse map sizes differ");
  if (sparse_metric.valid_count() < 2)
    throw EmptySparseInput("any2full_forward: need >= 2 valid sparse pixels");

  const auto [rel_sparse, stats] = normalize(depth_to_disparity(sparse_metric));
  (void)stats;
  const PatchFeatures f_dep = embed_patches(rel_sparse, bcfg.patch, sape.embed);

  const BackboneTaps taps = encode(patch_embed_rgb(img, model, bcfg), model, bcfg);

  const Tensor f_loc = local_enrich(f_dep, taps.tap(scfg.enrich_tap(bcfg)), sape.enrich);
  const ScalePrompts prompts =
      global_propagate(f_loc, taps, f_dep.patch_valid, sape, bcfg, scfg);

  const std::size_t first = scfg.first_prompted_level(bcfg);
  std::vector<Tensor> levels;
  for (std::size_t l = 1; l <= bcfg.groups; ++l) {
    const Tensor& tap = taps.tap(bcfg.tap_index(l));
    if (l < first) {
      levels.push_back(tap);
    } else {
      levels.push_back(prompt_fuse(prompts.levels[l - first], tap, sape.fusion[l - first]));
    }
  }
  return decode(levels, model, bcfg, img.height, img.width);
}

// The full one-stage pass: prompted relative prediction followed by the
// closed-form alignment to the sparse metric input and inversion to meters.
inline ForwardResult any2full_forward(const RgbImage& img, const DepthMap& sparse_metric,
                                      const ModelParams& model, const SapeParams& sape,
                                      const BackboneConfig& bcfg, const SapeConfig& scfg) {
  ForwardResult res;
  res.relative = prompted_relative(img, sparse_metric, model, sape, bcfg, scfg);
  res.fit = lsq_align(res.relative, sparse_metric);
  res.metric = apply_fit(res.relative, res.fit);
  return res;
}

}  // namespace a2f
