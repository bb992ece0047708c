#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "any2full/common.hpp"
#include "any2full/depth_domain.hpp"
#include "any2full/maps.hpp"
#include "any2full/rng.hpp"

// The four training losses with analytic gradients w.r.t. the raw prediction,
// plus a central-difference gradient checker. Both operands are normalized
// (mean 0, population std 1, sigma floored) over the loss's own mask before
// comparison, so every loss is invariant to positive affine transforms of the
// raw inputs. L1 subgradient at exact zeros is 0.

namespace a2f {

struct LossWeights {
  double ssi = 0.5, gm = 0.5, anchor = 0.5, rssim = 0.5;
};

struct LossReport {
  double ssi = 0.0, gm = 0.0, anchor = 0.0, rssim = 0.0, total = 0.0;
  std::size_t n_omega = 0, n_omega_s = 0;
};

// Value, full-map gradient w.r.t. the raw prediction, and the signed L1 terms
// used by the gradient checker to detect kink crossings (empty for smooth
// losses).
struct LossValueGrad {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<double> kink_terms;
};

namespace detail {

struct MaskedNorm {
  std::vector<double> normed;  // full size, only masked entries meaningful
  double mu = 0.0;
  double sigma = kSigmaFloor;
  bool floored = false;
  std::size_t n = 0;
};

inline MaskedNorm norm_over(const std::vector<double>& vals, const std::vector<std::uint8_t>& mask) {
  MaskedNorm out;
  out.normed.assign(vals.size(), 0.0);
  double mu = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i)
    if (mask[i]) {
      mu += vals[i];
      ++out.n;
    }
  if (out.n == 0) throw EmptyInput("loss: empty mask");
  mu /= double(out.n);
  double var = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i)
    if (mask[i]) {
      const double c = vals[i] - mu;
      var += c * c;
    }
  var /= double(out.n);
  const double sigma_raw = std::sqrt(var);
  out.mu = mu;
  out.floored = sigma_raw < kSigmaFloor;
  out.sigma = out.floored ? kSigmaFloor : sigma_raw;
  for (std::size_t i = 0; i < vals.size(); ++i)
    if (mask[i]) out.normed[i] = (vals[i] - mu) / out.sigma;
  return out;
}

// Pull a gradient w.r.t. the normalized prediction back through the
// normalization chain:
//   d p~_i / d p_j = (delta_ij - 1/N)/sigma - p~_i p~_j / (N sigma),
// with the last term absent when sigma sits on the floor (constant).
inline std::vector<double> chain_through_norm(const std::vector<double>& upstream,
                                              const MaskedNorm& nrm,
                                              const std::vector<std::uint8_t>& mask) {
  double sum_u = 0.0, sum_up = 0.0;
  for (std::size_t i = 0; i < upstream.size(); ++i)
    if (mask[i]) {
      sum_u += upstream[i];
      sum_up += upstream[i] * nrm.normed[i];
    }
  const double invN = 1.0 / double(nrm.n);
  std::vector<double> grad(upstream.size(), 0.0);
  for (std::size_t j = 0; j < upstream.size(); ++j) {
    if (!mask[j]) continue;
    double g = upstream[j] - sum_u * invN;
    if (!nrm.floored) g -= nrm.normed[j] * sum_up * invN;
    grad[j] = g / nrm.sigma;
  }
  return grad;
}

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

// Mean absolute difference of the normalized maps over the mask.
inline LossValueGrad loss_ssi(const std::vector<double>& pred, const std::vector<double>& gt,
                              const std::vector<std::uint8_t>& mask) {
  if (pred.size() != gt.size() || pred.size() != mask.size())
    throw ShapeError("loss_ssi: size mismatch");
  const auto np = detail::norm_over(pred, mask);
  const auto ng = detail::norm_over(gt, mask);
  LossValueGrad out;
  std::vector<double> upstream(pred.size(), 0.0);
  double sum = 0.0;
  const double invN = 1.0 / double(np.n);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double t = np.normed[i] - ng.normed[i];
    out.kink_terms.push_back(t);
    sum += std::fabs(t);
    upstream[i] = detail::sgn(t) * invN;
  }
  out.value = sum * invN;
  out.grad = detail::chain_through_norm(upstream, np, mask);
  return out;
}

// Mean over the mask of |forward-x difference| + |forward-y difference| of
// the normalized residual; a pair contributes only when both pixels are in
// the mask, and the last column/row is excluded from the respective term.
inline LossValueGrad loss_gm(const std::vector<double>& pred, const std::vector<double>& gt,
                             const std::vector<std::uint8_t>& mask, int h, int w) {
  if (h < 2 || w < 2) throw ShapeError("loss_gm: map must be at least 2x2");
  if (pred.size() != std::size_t(h) * w) throw ShapeError("loss_gm: size mismatch");
  const auto np = detail::norm_over(pred, mask);
  const auto ng = detail::norm_over(gt, mask);
  std::vector<double> r(pred.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (mask[i]) r[i] = np.normed[i] - ng.normed[i];

  LossValueGrad out;
  std::vector<double> upstream(pred.size(), 0.0);
  double sum = 0.0;
  auto pair_term = [&](std::size_t a, std::size_t b) {
    if (!mask[a] || !mask[b]) return;
    const double t = r[b] - r[a];
    out.kink_terms.push_back(t);
    sum += std::fabs(t);
    const double s = detail::sgn(t);
    upstream[b] += s;
    upstream[a] -= s;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) pair_term(std::size_t(y) * w + x, std::size_t(y) * w + x + 1);
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) pair_term(std::size_t(y) * w + x, std::size_t(y + 1) * w + x);

  const double invN = 1.0 / double(np.n);
  out.value = sum * invN;
  for (auto& u : upstream) u *= invN;
  out.grad = detail::chain_through_norm(upstream, np, mask);
  return out;
}

// The SSI loss restricted to the sparse anchors; normalization statistics
// come from the anchor set itself.
inline LossValueGrad loss_anchor(const std::vector<double>& pred, const std::vector<double>& gt_sparse,
                                 const std::vector<std::uint8_t>& mask_s) {
  return loss_ssi(pred, gt_sparse, mask_s);
}

inline constexpr int kRssimWindow = 7;
inline constexpr double kRssimC = 1e-4;

// 1 - (2*cov + C)/(var_p + var_g + C), averaged over sliding windows of the
// normalized maps; windows with fewer than 2 masked pixels are skipped.
// Window statistics are population moments over the masked pixels inside the
// window. Each term lies in [0, 2) because 2|cov| <= var_p + var_g.
inline LossValueGrad loss_rssim(const std::vector<double>& pred, const std::vector<double>& gt,
                                const std::vector<std::uint8_t>& mask, int h, int w,
                                int window = kRssimWindow, double C = kRssimC) {
  if (pred.size() != std::size_t(h) * w) throw ShapeError("loss_rssim: size mismatch");
  const auto np = detail::norm_over(pred, mask);
  const auto ng = detail::norm_over(gt, mask);

  std::vector<double> upstream(pred.size(), 0.0);
  double sum = 0.0;
  std::size_t n_windows = 0;
  std::vector<std::size_t> px;
  px.reserve(std::size_t(window) * window);
  for (int wy = 0; wy + window <= h; ++wy)
    for (int wx = 0; wx + window <= w; ++wx) {
      px.clear();
      for (int y = wy; y < wy + window; ++y)
        for (int x = wx; x < wx + window; ++x) {
          const std::size_t i = std::size_t(y) * w + x;
          if (mask[i]) px.push_back(i);
        }
      const std::size_t m = px.size();
      if (m < 2) continue;
      double mp = 0.0, mg = 0.0;
      for (auto i : px) {
        mp += np.normed[i];
        mg += ng.normed[i];
      }
      mp /= double(m);
      mg /= double(m);
      double vp = 0.0, vg = 0.0, cov = 0.0;
      for (auto i : px) {
        const double a = np.normed[i] - mp;
        const double b = ng.normed[i] - mg;
        vp += a * a;
        vg += b * b;
        cov += a * b;
      }
      vp /= double(m);
      vg /= double(m);
      cov /= double(m);
      const double A = 2.0 * cov + C;
      const double B = vp + vg + C;
      sum += 1.0 - A / B;
      ++n_windows;
      // dT/dp~_k = -2(g~_k - mg)/(m*B) + 2*A*(p~_k - mp)/(m*B^2)
      for (auto i : px) {
        const double a = np.normed[i] - mp;
        const double b = ng.normed[i] - mg;
        upstream[i] += -2.0 * b / (double(m) * B) + 2.0 * A * a / (double(m) * B * B);
      }
    }
  if (n_windows == 0) throw EmptyInput("loss_rssim: no window has >= 2 masked pixels");

  LossValueGrad out;
  out.value = sum / double(n_windows);
  for (auto& u : upstream) u /= double(n_windows);
  out.grad = detail::chain_through_norm(upstream, np, mask);
  return out;
}

// Weighted sum; component masks are the dense mask for ssi/gm/rssim and the
// anchor mask for the anchor term.
inline LossReport loss_total(const std::vector<double>& pred, const std::vector<double>& gt,
                             const std::vector<double>& gt_sparse,
                             const std::vector<std::uint8_t>& mask,
                             const std::vector<std::uint8_t>& mask_s, int h, int w,
                             const LossWeights& weights) {
  LossReport rep;
  const auto ssi = loss_ssi(pred, gt, mask);
  const auto gm = loss_gm(pred, gt, mask, h, w);
  const auto anchor = loss_anchor(pred, gt_sparse, mask_s);
  const auto rssim = loss_rssim(pred, gt, mask, h, w);
  rep.ssi = ssi.value;
  rep.gm = gm.value;
  rep.anchor = anchor.value;
  rep.rssim = rssim.value;
  rep.total = weights.ssi * rep.ssi + weights.gm * rep.gm + weights.anchor * rep.anchor +
              weights.rssim * rep.rssim;
  std::size_t n = 0, ns = 0;
  for (auto v : mask) n += v ? 1 : 0;
  for (auto v : mask_s) ns += v ? 1 : 0;
  rep.n_omega = n;
  rep.n_omega_s = ns;
  return rep;
}

// Map-level convenience used by the fitting loop and the experiment runner.
inline LossReport loss_total_maps(const RelativeMap& pred, const DepthMap& gt_disp,
                                  const DepthMap& sparse_disp, const LossWeights& weights) {
  if (pred.height != gt_disp.height || pred.width != gt_disp.width)
    throw ShapeError("loss_total_maps: sizes disagree");
  std::vector<std::uint8_t> mask(pred.pixels()), mask_s(pred.pixels());
  for (std::size_t i = 0; i < pred.pixels(); ++i) {
    mask[i] = pred.valid[i] && gt_disp.valid[i];
    mask_s[i] = pred.valid[i] && sparse_disp.valid[i];
  }
  return loss_total(pred.values, gt_disp.values, sparse_disp.values, mask, mask_s, pred.height,
                    pred.width, weights);
}

// ---------------------------------------------------------------------------
// Gradient checking

using LossEvalFn = std::function<LossValueGrad(const std::vector<double>& pred)>;

// Central finite differences against the analytic gradient on a seeded subset
// of masked pixels (at least 64 when available). A pixel is skipped when any
// signed L1 term changes sign (or touches zero) between the +h and -h
// evaluations, i.e. the difference interval crosses a kink. Relative error
// uses an absolute floor of 1e-8 in the denominator.
inline double grad_check(const LossEvalFn& loss, const std::vector<double>& pred,
                         const std::vector<std::uint8_t>& mask, double h,
                         std::uint64_t seed = 1234, std::size_t min_pixels = 64) {
  if (!(h > 0.0)) throw ConfigError("grad_check: h must be positive");
  const LossValueGrad base = loss(pred);

  std::vector<std::uint32_t> candidates;
  for (std::uint32_t i = 0; i < mask.size(); ++i)
    if (mask[i]) candidates.push_back(i);
  Rng rng(seed);
  std::vector<std::uint32_t> order =
      rng.sample_distinct(std::uint32_t(candidates.size()),
                          std::uint32_t(std::min(candidates.size(), std::max(min_pixels, std::size_t(64)))));

  auto signs_of = [](const std::vector<double>& terms) {
    std::vector<int> s(terms.size());
    for (std::size_t i = 0; i < terms.size(); ++i)
      s[i] = terms[i] > 0.0 ? 1 : (terms[i] < 0.0 ? -1 : 0);
    return s;
  };

  double max_rel = 0.0;
  std::vector<double> work = pred;
  for (auto ci : order) {
    const std::size_t j = candidates[ci];
    const double keep = work[j];
    work[j] = keep + h;
    const LossValueGrad plus = loss(work);
    work[j] = keep - h;
    const LossValueGrad minus = loss(work);
    work[j] = keep;

    if (!plus.kink_terms.empty()) {
      const auto sp = signs_of(plus.kink_terms);
      const auto sm = signs_of(minus.kink_terms);
      bool crossed = sp.size() != sm.size();
      for (std::size_t t = 0; !crossed && t < sp.size(); ++t)
        crossed = sp[t] != sm[t] || sp[t] == 0;
      if (crossed) continue;
    }

    const double fd = (plus.value - minus.value) / (2.0 * h);
    const double an = base.grad[j];
    const double denom = std::max({1e-8, std::fabs(fd), std::fabs(an)});
    max_rel = std::max(max_rel, std::fabs(an - fd) / denom);
  }
  return max_rel;
}

}  // namespace a2f
