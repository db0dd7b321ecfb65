#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cdrop {

// SplitMix64 finalizer; used to derive child seeds from (root, index) pairs.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a) noexcept {
  return mix64(mix64(root) ^ mix64(a + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a,
                                    std::uint64_t b) noexcept {
  return derive_seed(derive_seed(root, a), b);
}

/// Seeded random stream.
///
/// Split rule: the stream for trajectory `index` under `root` is an
/// mt19937_64 seeded through std::seed_seq with the four 32-bit halves of
/// (root, index). Both the engine and seed_seq are fully specified by the
/// standard, and every variate below is derived from raw engine output, so
/// sequences are identical across platforms and standard libraries.
class RandomStream {
public:
  explicit RandomStream(std::uint64_t root, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                      static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on (0, 1]; zero is never returned.
  double uniform_open_closed() {
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Exp(rate) by inverse transform, -ln(U)/rate with U on (0, 1].
  double exponential(double rate) { return -std::log(uniform_open_closed()) / rate; }

  /// Standard normal via Box-Muller (one variate per call, no cached state).
  double normal() {
    const double u1 = uniform_open_closed();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  bool bernoulli(double prob) { return uniform() < prob; }

  /// Uniform integer in [0, n) by rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace cdrop
