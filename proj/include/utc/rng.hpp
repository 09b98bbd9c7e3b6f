#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace utc {

// SplitMix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p));
  return h;
}

/// Counter-based generator: the n-th draw of a stream is mix(key, n), so draws
/// never depend on how many other streams were consumed before.
class CounterRng {
 public:
  CounterRng() = default;
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  std::uint64_t next() noexcept { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform double in [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Poisson draw by sequential inversion; large means are split into chunks
  /// so exp(-mean) never underflows.
  std::uint64_t poisson(double mean) noexcept {
    std::uint64_t total = 0;
    while (mean > 0.0) {
      const double chunk = mean > 200.0 ? 200.0 : mean;
      mean -= chunk;
      double p = std::exp(-chunk);
      double cdf = p;
      const double u = uniform();
      std::uint64_t k = 0;
      while (u > cdf && k < 10000) {
        ++k;
        p *= chunk / static_cast<double>(k);
        cdf += p;
        if (p == 0.0) break;
      }
      total += k;
    }
    return total;
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace utc
