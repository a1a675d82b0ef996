#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace aes {

inline constexpr std::string_view kGeneratorId = "std::mt19937_64+splitmix64-substreams";

/// SplitMix64 finalizer, used to derive substream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// FNV-1a, stable across platforms.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

constexpr std::uint64_t substream_seed(std::uint64_t seed, std::string_view cell_id) noexcept {
  return splitmix64(splitmix64(seed) ^ fnv1a(cell_id));
}

/// Seeded generator. Every stochastic choice in the library draws from one of these.
///
/// Uniform variates are produced with fixed bit manipulation rather than
/// <random> distributions so that streams do not depend on the standard
/// library implementation.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view cell_id) : engine_(substream_seed(seed, cell_id)) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n) {
    // Lemire's multiply-shift; the bias is below 2^-64 * n and irrelevant here.
    const auto x = static_cast<unsigned __int128>(engine_()) * n;
    return static_cast<std::size_t>(x >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one variate per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Child generator for an independent substream.
  Rng split(std::string_view tag) { return Rng(engine_(), tag); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace aes
