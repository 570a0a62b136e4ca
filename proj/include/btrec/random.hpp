#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace btrec {

/// Engine used throughout. Every draw below is written against the raw
/// 64-bit output so results do not depend on the standard library's
/// distribution implementations.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and a path of keys,
/// e.g. derive_seed(seed, {epoch, sentence}).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t state = seed;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t k : keys) {
    state = out ^ (k * 0xd1b54a32d192ed03ULL);
    out = splitmix64(state);
  }
  return out;
}

/// Uniform in [0, 1) with 53 random bits.
template <typename Engine>
double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n). n must be positive.
template <typename Engine>
std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
  return rng() % n;
}

/// Standard normal via Box-Muller (no cached spare, so each call consumes
/// exactly two engine outputs).
template <typename Engine>
double standard_normal(Engine& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Gamma(shape, 1) by Marsaglia-Tsang, with the shape < 1 boost.
template <typename Engine>
double gamma_draw(Engine& rng, double shape) {
  if (shape < 1.0) {
    const double u = uniform01(rng);
    return gamma_draw(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = standard_normal(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace btrec
