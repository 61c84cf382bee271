#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/error.hpp"

namespace cvfcn {

using Rng = std::mt19937_64;

/// Uniform draw on the open interval (0, 1), built from the top 53 bits.
inline double uniform_open01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Independent sub-seed for a named purpose (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

enum class InitScheme {
  RayleighPhase,  // Rayleigh magnitude, uniform phase
  UniformParts,   // independent uniform real and imaginary parts
};

struct InitSpec {
  InitScheme scheme = InitScheme::RayleighPhase;
  std::uint64_t seed = 0;
  /// Per-part bound for UniformParts; <= 0 selects sqrt(6/fan_in)/sqrt(2).
  double uniform_bound = 0.0;
};

/// He standard deviation of a weight: sqrt(2 / fan_in).
inline double he_sigma(long long fan_in) {
  if (fan_in < 1) throw DomainError("he_sigma: fan_in must be >= 1, got " + std::to_string(fan_in));
  return std::sqrt(2.0 / static_cast<double>(fan_in));
}

/// Rayleigh parameter that gives Var(W) = E|W|^2 = 2 s^2 = 2 / fan_in.
inline double rayleigh_scale(long long fan_in) { return he_sigma(fan_in) / std::numbers::sqrt2; }

inline double default_uniform_bound(long long fan_in) {
  if (fan_in < 1) throw DomainError("default_uniform_bound: fan_in must be >= 1");
  return std::sqrt(6.0 / static_cast<double>(fan_in)) / std::numbers::sqrt2;
}

/// W = |W| e^{j theta} with |W| ~ Rayleigh(rayleigh_scale(fan_in)) drawn by
/// inverse CDF and theta ~ U(-pi, pi).
template <typename T = float>
Tensor<T> init_rayleigh_phase(const Shape& shape, long long fan_in, Rng& rng) {
  const double s = rayleigh_scale(fan_in);
  Tensor<T> w(shape);
  for (auto& v : w.data()) {
    const double mag = s * std::sqrt(-2.0 * std::log(uniform_open01(rng)));
    const double theta = std::numbers::pi * (2.0 * uniform_open01(rng) - 1.0);
    v = {static_cast<T>(mag * std::cos(theta)), static_cast<T>(mag * std::sin(theta))};
  }
  return w;
}

/// re, im i.i.d. ~ U(-bound, bound).
template <typename T = float>
Tensor<T> init_uniform_parts(const Shape& shape, double bound, Rng& rng) {
  if (!(bound > 0.0)) throw DomainError("init_uniform_parts: bound must be positive");
  Tensor<T> w(shape);
  for (auto& v : w.data()) {
    const double re = bound * (2.0 * uniform_open01(rng) - 1.0);
    const double im = bound * (2.0 * uniform_open01(rng) - 1.0);
    v = {static_cast<T>(re), static_cast<T>(im)};
  }
  return w;
}

template <typename T = float>
Tensor<T> init_weights(const Shape& shape, long long fan_in, const InitSpec& spec, Rng& rng) {
  switch (spec.scheme) {
    case InitScheme::RayleighPhase: return init_rayleigh_phase<T>(shape, fan_in, rng);
    case InitScheme::UniformParts:
      return init_uniform_parts<T>(shape, spec.uniform_bound > 0 ? spec.uniform_bound : default_uniform_bound(fan_in),
                                   rng);
  }
  throw ConfigError("unknown init scheme");
}

inline const char* to_string(InitScheme s) { return s == InitScheme::RayleighPhase ? "rayleigh" : "uniform"; }

inline InitScheme parse_init_scheme(const std::string& s) {
  if (s == "rayleigh" || s == "rayleigh-phase" || s == "cwi1") return InitScheme::RayleighPhase;
  if (s == "uniform" || s == "uniform-parts" || s == "cwi2") return InitScheme::UniformParts;
  throw ConfigError("unknown init scheme '" + s + "' (expected rayleigh|uniform)");
}

}  // namespace cvfcn
