#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvfcn/error.hpp"
#include "cvfcn/init.hpp"

namespace cvfcn {

/// Empirical audit of an initialization scheme over n i.i.d. draws.
struct InitStats {
  InitScheme scheme = InitScheme::RayleighPhase;
  long long fan_in = 1;
  std::size_t samples = 0;
  double mean_re = 0.0, mean_im = 0.0;  // E[W]
  double mean_abs = 0.0;                // E|W|
  double var = 0.0;                     // E|W - E[W]|^2
  double expected_mean_abs = 0.0;
  double expected_var = 0.0;
  std::size_t phase_bins = 16;
  double phase_chi2 = 0.0;              // against a uniform phase on (-pi, pi]
  double phase_chi2_critical = 0.0;     // 1% critical value, phase_bins - 1 dof
  double ks = 0.0;                      // |W| against Rayleigh(rayleigh_scale(fan_in))
  double ks_critical = 0.0;             // 1% critical value, asymptotic

  bool phase_uniform() const { return phase_chi2 < phase_chi2_critical; }
  bool ks_pass() const { return ks < ks_critical; }
};

/// Upper 1% point of chi-square with `dof` degrees of freedom
/// (Wilson-Hilferty approximation).
inline double chi2_critical_1pct(std::size_t dof) {
  const double k = static_cast<double>(dof), z = 2.3263478740408408;
  const double t = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
  return k * t * t * t;
}

/// Asymptotic 1% critical value of the one-sample Kolmogorov-Smirnov statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

inline double rayleigh_cdf(double r, double s) { return r <= 0.0 ? 0.0 : 1.0 - std::exp(-r * r / (2.0 * s * s)); }

/// sup |F_n - F| of the samples (sorted in place) against a CDF.
template <typename F>
double ks_statistic(std::vector<double>& x, F&& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

inline InitStats init_stats(InitScheme scheme, long long fan_in, std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw ConfigError("init-stats: n_samples must be positive");
  if (fan_in < 1) throw ConfigError("init-stats: fan_in must be >= 1");
  InitSpec spec;
  spec.scheme = scheme;
  Rng rng(seed);
  const auto w = init_weights<double>({samples}, fan_in, spec, rng);

  InitStats s;
  s.scheme = scheme;
  s.fan_in = fan_in;
  s.samples = samples;
  const double n = static_cast<double>(samples);
  std::vector<double> mags(samples);
  std::vector<std::size_t> bins(s.phase_bins, 0);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto v = w[i];
    s.mean_re += v.real();
    s.mean_im += v.imag();
    mags[i] = std::abs(v);
    s.mean_abs += mags[i];
    // arg lies in [-pi, pi]; map to bins over (-pi, pi].
    const double u = (std::arg(v) + std::numbers::pi) / (2.0 * std::numbers::pi);
    bins[std::min(s.phase_bins - 1, static_cast<std::size_t>(u * static_cast<double>(s.phase_bins)))]++;
  }
  s.mean_re /= n;
  s.mean_im /= n;
  s.mean_abs /= n;
  for (std::size_t i = 0; i < samples; ++i) s.var += std::norm(w[i] - std::complex<double>(s.mean_re, s.mean_im));
  s.var /= n;

  const double expected = n / static_cast<double>(s.phase_bins);
  for (auto b : bins) s.phase_chi2 += (static_cast<double>(b) - expected) * (static_cast<double>(b) - expected) / expected;
  s.phase_chi2_critical = chi2_critical_1pct(s.phase_bins - 1);

  const double rs = rayleigh_scale(fan_in);
  s.ks = ks_statistic(mags, [rs](double r) { return rayleigh_cdf(r, rs); });
  s.ks_critical = ks_critical_1pct(samples);

  if (scheme == InitScheme::RayleighPhase) {
    s.expected_mean_abs = rs * std::sqrt(std::numbers::pi) / std::numbers::sqrt2;
    s.expected_var = 2.0 * rs * rs;
  } else {
    // Two independent U(-a, a) parts: Var = 2 a^2 / 3.
    const double a = default_uniform_bound(fan_in);
    s.expected_var = 2.0 * a * a / 3.0;
    s.expected_mean_abs = std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

inline nlohmann::json to_json(const InitStats& s) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"scheme", to_string(s.scheme)},
          {"fan_in", s.fan_in},
          {"n_samples", s.samples},
          {"mean", {s.mean_re, s.mean_im}},
          {"mean_abs", s.mean_abs},
          {"expected_mean_abs", num(s.expected_mean_abs)},
          {"var", s.var},
          {"expected_var", s.expected_var},
          {"phase_bins", s.phase_bins},
          {"phase_chi2", s.phase_chi2},
          {"phase_chi2_critical_1pct", s.phase_chi2_critical},
          {"ks_rayleigh", s.ks},
          {"ks_critical_1pct", s.ks_critical}};
}

}  // namespace cvfcn
