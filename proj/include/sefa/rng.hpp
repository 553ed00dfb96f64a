#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sefa/errors.hpp"
#include "sefa/tensor.hpp"

namespace sefa {

// Deterministic pseudo-random generation.
//
// Generator: splitmix64 (Steele/Lea/Vigna). The state advances by the golden
// gamma 0x9E3779B97F4A7C15 and passes through the standard 64-bit finalizer.
// Uniform doubles take the top 53 output bits, so u in [0,1) has a fixed
// bit-level meaning on every platform.
//
// Gaussians use the Box-Muller transform: u1 in (0,1], u2 in [0,1) give
//   z0 = sqrt(-2 ln u1) * cos(2 pi u2),   z1 = sqrt(-2 ln u1) * sin(2 pi u2)
// and z1 is cached, so consuming 2N gaussians advances the uniform stream by
// exactly 2N draws.

inline std::uint64_t splitmix64_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives an independent child seed for a named stream. Used to key
// per-episode, per-observation, and per-stage generators off one root seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64_finalize(seed + 0x9E3779B97F4A7C15ULL * (stream + 1));
}

struct DeterministicRng {
  static constexpr const char* kAlgorithm = "splitmix64+boxmuller";

  std::uint64_t state = 0;
  bool has_spare = false;
  double spare = 0.0;

  explicit DeterministicRng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    state += 0x9E3779B97F4A7C15ULL;
    return splitmix64_finalize(state);
  }

  // Uniform on [0,1) with 53 random bits.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0,1]; keeps log() in Box-Muller away from zero.
  double next_uniform_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
  }

  // Unbiasedness of the modulo is irrelevant at these ranges (n << 2^64).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  double next_gaussian() {
    if (has_spare) {
      has_spare = false;
      return spare;
    }
    const double u1 = next_uniform_open();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare = r * std::sin(theta);
    has_spare = true;
    return r * std::cos(theta);
  }

  std::vector<double> gaussian_vector(int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& v : out) v = next_gaussian();
    return out;
  }
};

inline TensorBuffer rng_gaussian(DeterministicRng& rng, const std::vector<int>& shape) {
  const std::int64_t n = checked_numel(shape);  // rejects [] and dims < 1
  TensorBuffer out(shape);
  for (std::int64_t i = 0; i < n; ++i) {
    out.data[static_cast<std::size_t>(i)] = rng.next_gaussian();
  }
  return out;
}

}  // namespace sefa
