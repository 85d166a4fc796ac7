#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace wtrak {

// Deterministic counter-based generator. Platform RNGs (std::mt19937
// distributions, rand) are deliberately avoided: every synthetic fixture and
// sampled pair set must reproduce bit-exactly across compilers and platforms,
// so the algorithm and its constants are part of the artifact contract.
//
// The k-th 64-bit output is a bijective mix of seed + k*gamma (splitmix64):
//   gamma = 0x9E3779B97F4A7C15
//   z ^= z>>30; z *= 0xBF58476D1CE4E5B9; z ^= z>>27; z *= 0x94D049BB133111EB;
//   z ^= z>>31
// Uniform doubles take the top 53 bits: (z >> 11) * 2^-53, giving [0, 1).
// Gaussians are Box-Muller pairs from two consecutive uniforms.
class Rng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Independent substream: reseeds with a mix of (seed, tag) so the feature
  // draw, rotation draw and flip draw of one spec never share outputs.
  static Rng stream(std::uint64_t seed, std::uint64_t tag) {
    return Rng(mix(seed + kGamma * (tag + 1)));
  }

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Unbiased-enough index draw via 128-bit multiply-shift; bias ~ m/2^64.
  std::uint64_t next_below(std::uint64_t m) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * m) >> 64);
  }

  // Standard normal pair; u1 shifted away from 0 so log stays finite.
  void next_gaussian_pair(double& g0, double& g1) {
    const double u1 = 1.0 - next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    g0 = r * std::cos(a);
    g1 = r * std::sin(a);
  }

  double next_gaussian() {
    double g0, g1;
    next_gaussian_pair(g0, g1);
    return g0;  // the paired draw is discarded for scalar use
  }

  // First k entries of a Fisher-Yates shuffle of {0..n-1}; enough for
  // choose-k-without-replacement and cheaper than permuting all of n.
  std::vector<std::uint64_t> choose(std::uint64_t n, std::uint64_t k) {
    std::vector<std::uint64_t> perm(n);
    for (std::uint64_t i = 0; i < n; ++i) perm[i] = i;
    if (k > n) k = n;
    for (std::uint64_t i = 0; i < k; ++i) {
      const std::uint64_t j = i + next_below(n - i);
      std::swap(perm[i], perm[j]);
    }
    perm.resize(k);
    return perm;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace wtrak
