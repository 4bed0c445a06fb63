#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "cf/errors.hpp"

namespace cf {

// All randomness flows through this wrapper. The raw engine is std::mt19937_64,
// whose output sequence is fixed by the standard; the distribution transforms
// below are written out by hand because the std::*_distribution classes are
// allowed to differ between standard libraries. Result: identical seeds give
// identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second deviate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Unbiased integer in [0, n) by rejection.
  std::size_t index(std::size_t n) {
    if (n == 0) throw ContractError("Rng::index requires n > 0");
    const std::uint64_t span = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t draw = bits();
    while (draw >= limit) draw = bits();
    return static_cast<std::size_t>(draw % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates, back to front.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = index(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// SplitMix64 finalizer; used to derive decorrelated child seeds from a master
// seed plus a stream tag, so that consuming one stream never shifts another.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(seed ^ mix_seed(stream));
}

// Stream tags. Each independent consumer of randomness in a training run gets
// its own tag so adding or removing one consumer leaves the others bit-stable.
namespace streams {
inline constexpr std::uint64_t init = 0x01;
inline constexpr std::uint64_t data_order = 0x02;
inline constexpr std::uint64_t split = 0x03;
inline constexpr std::uint64_t dropout = 0x04;
inline constexpr std::uint64_t history = 0x05;
}  // namespace streams

}  // namespace cf
