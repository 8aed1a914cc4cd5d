#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <vector>

#include "lmc/error.hpp"

namespace lmc {

// Deterministic random stream.
//
// Wraps std::mt19937_64, whose output sequence is fixed by the standard, and
// hand-rolls every variate transform on top of it. The std <random>
// distributions are implementation-defined, so using them would make seeds
// produce different draws on different toolchains; these transforms do not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on the open interval (0, 1); safe to pass to log().
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Unbiased uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw DomainError("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; the second variate of each pair is
  // cached so consecutive calls consume uniforms at half rate.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    const double a = 2.0 * std::numbers::pi * uniform01();
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double exponential() { return -std::log(uniform_open()); }

  // Binomial(n, p) by CDF inversion. The pmf recursion runs in log space so
  // large n does not underflow the starting term.
  int binomial(int n, double p) {
    if (n < 0) throw DomainError("Rng::binomial: n must be nonnegative");
    if (p < 0.0 || p > 1.0) throw DomainError("Rng::binomial: p outside [0,1]");
    if (n == 0 || p == 0.0) return 0;
    if (p == 1.0) return n;
    const double u = uniform01();
    const double log_p = std::log(p);
    const double log_1mp = std::log1p(-p);
    double log_pmf = n * log_1mp;
    double cdf = std::exp(log_pmf);
    int k = 0;
    while (u > cdf && k < n) {
      log_pmf += std::log(static_cast<double>(n - k) / (k + 1)) + log_p - log_1mp;
      ++k;
      cdf += std::exp(log_pmf);
    }
    return k;
  }

  // Multinomial(trials; 1/M, ..., 1/M) by sequential binomial conditioning:
  // component j is Binomial(remaining, 1/(M-j)).
  std::vector<int> multinomial_uniform(int trials, int M) {
    if (M < 1) throw DomainError("Rng::multinomial_uniform: M must be >= 1");
    if (trials < 0) throw DomainError("Rng::multinomial_uniform: negative trials");
    std::vector<int> counts(M, 0);
    int remaining = trials;
    for (int j = 0; j + 1 < M; ++j) {
      counts[j] = binomial(remaining, 1.0 / (M - j));
      remaining -= counts[j];
    }
    counts[M - 1] = remaining;
    return counts;
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

  // Derives a sub-seed as a deterministic mix of the inputs (SplitMix64
  // absorption). Used to carve independent streams out of one user seed.
  static std::uint64_t derive(std::uint64_t seed,
                              std::initializer_list<std::uint64_t> words) {
    std::uint64_t state = seed;
    auto mix = [&state](std::uint64_t w) {
      state += 0x9e3779b97f4a7c15ULL + w;
      std::uint64_t z = state;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      state = z ^ (z >> 31);
    };
    mix(0);
    for (std::uint64_t w : words) mix(w);
    return state;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace lmc
