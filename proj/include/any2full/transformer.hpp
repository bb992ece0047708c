#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "any2full/common.hpp"
#include "any2full/numkernel.hpp"
#include "any2full/rng.hpp"
#include "any2full/tensor.hpp"

// Building blocks shared by the MDE backbone and the prompt encoder:
// multi-head attention with optional key masking, pre-norm blocks, and the
// small parameter structs they use.

namespace a2f {

inline constexpr double kLnEps = 1e-6;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// ln(1 + e^x), overflow-safe. The smooth ramp used by the FiLM heads.
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

// y = x * W + b with b broadcast over rows. W is (in x out).
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  if (b.size() != y.cols()) throw ShapeError("linear: bias size mismatch");
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) += b[j];
  return y;
}

struct LayerNormParams {
  Tensor gain, bias;  // 1 x D
};

struct AttnParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // D x D weights, 1 x D biases
};

struct MlpParams {
  Tensor w1, b1, w2, b2;
};

struct BlockParams {
  LayerNormParams ln1, ln2;
  AttnParams attn;
  MlpParams mlp;
};

inline LayerNormParams make_layer_norm(std::size_t d) {
  LayerNormParams p;
  p.gain = Tensor(1, d);
  p.bias = Tensor(1, d);
  for (std::size_t j = 0; j < d; ++j) p.gain[j] = 1.0;
  return p;
}

inline AttnParams make_attn(std::size_t d, Rng& rng) {
  AttnParams p;
  p.wq = Tensor::random(d, d, rng, -0.05, 0.05);
  p.bq = Tensor::random(1, d, rng, -0.05, 0.05);
  p.wk = Tensor::random(d, d, rng, -0.05, 0.05);
  p.bk = Tensor::random(1, d, rng, -0.05, 0.05);
  p.wv = Tensor::random(d, d, rng, -0.05, 0.05);
  p.bv = Tensor::random(1, d, rng, -0.05, 0.05);
  p.wo = Tensor::random(d, d, rng, -0.05, 0.05);
  p.bo = Tensor::random(1, d, rng, -0.05, 0.05);
  return p;
}

inline MlpParams make_mlp(std::size_t d_in, std::size_t hidden, std::size_t d_out, Rng& rng) {
  MlpParams p;
  p.w1 = Tensor::random(d_in, hidden, rng, -0.05, 0.05);
  p.b1 = Tensor::random(1, hidden, rng, -0.05, 0.05);
  p.w2 = Tensor::random(hidden, d_out, rng, -0.05, 0.05);
  p.b2 = Tensor::random(1, d_out, rng, -0.05, 0.05);
  return p;
}

inline Tensor mlp_forward(const MlpParams& p, const Tensor& x) {
  Tensor h = linear(x, p.w1, p.b1);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = gelu(h[i]);
  return linear(h, p.w2, p.b2);
}

// Multi-head attention. Queries and keys come from q_src/k_src, values from
// v_src (self-attention passes the same tensor three times). key_mask, when
// given, has one entry per token; keys of masked tokens get zero weight for
// every query. weights_out, when given, receives one T x T matrix per head.
inline Tensor attention(const AttnParams& p, const Tensor& q_src, const Tensor& k_src,
                        const Tensor& v_src, std::size_t heads,
                        const std::vector<std::uint8_t>* key_mask = nullptr,
                        std::vector<Tensor>* weights_out = nullptr) {
  const std::size_t T = q_src.rows(), D = q_src.cols();
  if (k_src.rows() != T || v_src.rows() != T || k_src.cols() != D || v_src.cols() != D)
    throw ShapeError("attention: token shapes disagree");
  if (D % heads != 0) throw ShapeError("attention: dim not divisible by heads");
  if (key_mask && key_mask->size() != T) throw ShapeError("attention: key mask length mismatch");
  const std::size_t hd = D / heads;
  const double scale = 1.0 / std::sqrt(double(hd));

  const Tensor q = linear(q_src, p.wq, p.bq);
  const Tensor k = linear(k_src, p.wk, p.bk);
  const Tensor v = linear(v_src, p.wv, p.bv);

  std::vector<std::uint8_t> mask_matrix;
  if (key_mask) {
    mask_matrix.resize(T * T);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j) mask_matrix[i * T + j] = (*key_mask)[j];
  }

  Tensor concat(T, D);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor scores(T, T);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < hd; ++c) acc += q.at(i, h * hd + c) * k.at(j, h * hd + c);
        scores.at(i, j) = acc * scale;
      }
    const Tensor w = softmax_rows(scores, key_mask ? &mask_matrix : nullptr);
    if (weights_out) weights_out->push_back(w);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t c = 0; c < hd; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < T; ++j) acc += w.at(i, j) * v.at(j, h * hd + c);
        concat.at(i, h * hd + c) = acc;
      }
  }
  return linear(concat, p.wo, p.bo);
}

// Pre-norm ViT block: x + Attn(LN(x)), then x + MLP(LN(x)).
inline Tensor vit_block_forward(const BlockParams& bp, const Tensor& x, std::size_t heads,
                                std::vector<Tensor>* attn_weights = nullptr) {
  const Tensor h = layer_norm(x, bp.ln1.gain, bp.ln1.bias, kLnEps);
  const Tensor y = add(x, attention(bp.attn, h, h, h, heads, nullptr, attn_weights));
  const Tensor m = layer_norm(y, bp.ln2.gain, bp.ln2.bias, kLnEps);
  return add(y, mlp_forward(bp.mlp, m));
}

}  // namespace a2f
