#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "any2full/common.hpp"
#include "any2full/rng.hpp"
#include "any2full/tensor.hpp"

// Simultaneous-perturbation stochastic approximation over any parameter
// struct exposing visit(). Two forward evaluations per step regardless of the
// parameter count; one more evaluation records the loss curve. Schedules:
//   c_k = c0 / (k+1)^0.101,   a_k = a0 / (k+1+A)^0.602.

namespace a2f {

struct SpsaSettings {
  std::size_t steps = 500;
  double c0 = 0.01;
  double a0 = 0.05;
  double a_offset = 50.0;
  std::uint64_t seed = 17;
};

template <class Params>
inline std::vector<double> flatten_params(const Params& p) {
  std::vector<double> out;
  p.visit([&](const Tensor& t) { out.insert(out.end(), t.raw().begin(), t.raw().end()); });
  return out;
}

template <class Params>
inline void unflatten_params(Params& p, const std::vector<double>& flat) {
  std::size_t pos = 0;
  p.visit([&](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = flat[pos++];
  });
  if (pos != flat.size()) throw ShapeError("unflatten_params: size mismatch");
}

struct SpsaResult {
  std::vector<double> curve;  // curve[0] = initial loss, then one entry per step
};

// loss is evaluated on candidate parameter structs; params is updated in
// place. Throws DataError with the step index if a loss turns non-finite.
template <class Params>
inline SpsaResult spsa_minimize(Params& params, const std::function<double(const Params&)>& loss,
                                const SpsaSettings& s) {
  std::vector<double> theta = flatten_params(params);
  Params work = params;
  Rng rng(s.seed);

  SpsaResult res;
  const double initial = loss(params);
  if (!std::isfinite(initial)) throw DataError("spsa: non-finite initial loss");
  res.curve.push_back(initial);

  std::vector<double> delta(theta.size());
  std::vector<double> cand(theta.size());
  for (std::size_t k = 0; k < s.steps; ++k) {
    const double ck = s.c0 / std::pow(double(k + 1), 0.101);
    const double ak = s.a0 / std::pow(double(k + 1) + s.a_offset, 0.602);
    for (auto& d : delta) d = rng.sign();

    for (std::size_t i = 0; i < theta.size(); ++i) cand[i] = theta[i] + ck * delta[i];
    unflatten_params(work, cand);
    const double lp = loss(work);
    for (std::size_t i = 0; i < theta.size(); ++i) cand[i] = theta[i] - ck * delta[i];
    unflatten_params(work, cand);
    const double lm = loss(work);
    if (!std::isfinite(lp) || !std::isfinite(lm))
      throw DataError("spsa: non-finite loss at step " + std::to_string(k));

    const double diff = (lp - lm) / (2.0 * ck);
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= ak * diff * delta[i];

    unflatten_params(work, theta);
    const double cur = loss(work);
    if (!std::isfinite(cur)) throw DataError("spsa: non-finite loss at step " + std::to_string(k));
    res.curve.push_back(cur);
  }
  unflatten_params(params, theta);
  return res;
}

}  // namespace a2f
