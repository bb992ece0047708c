#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace a2f {

// Seeded RNG used everywhere in the artifact. Only the standard-specified
// mt19937_64 integer stream is consumed; real and bounded draws are derived
// with explicit mappings below, so sequences are identical across standard
// library implementations. Identifier recorded in experiment reports.
inline constexpr const char* kRngId = "mt19937_64/u53";

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0,1) from the top 53 bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Rademacher draw: +1 or -1.
  double sign() { return (gen_() & 1u) ? 1.0 : -1.0; }

  // First k entries of a seeded partial Fisher-Yates shuffle of [0, n).
  std::vector<std::uint32_t> sample_distinct(std::uint32_t n, std::uint32_t k) {
    std::vector<std::uint32_t> idx(n);
    for (std::uint32_t i = 0; i < n; ++i) idx[i] = i;
    if (k > n) k = n;
    for (std::uint32_t i = 0; i < k; ++i) {
      const std::uint32_t j = i + static_cast<std::uint32_t>(below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace a2f
