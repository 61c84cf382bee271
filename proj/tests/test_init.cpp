#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cvfcn/init.hpp"
#include "cvfcn/init_stats.hpp"

using namespace cvfcn;

TEST(Init, HeSigmaWorkedValues) {
  EXPECT_DOUBLE_EQ(he_sigma(2), 1.0);
  EXPECT_NEAR(he_sigma(108), 0.136083, 1e-6);
  EXPECT_DOUBLE_EQ(he_sigma(8), 0.5);
  EXPECT_THROW(he_sigma(0), DomainError);
  EXPECT_THROW(he_sigma(-3), DomainError);
}

TEST(Init, RayleighScaleGivesVarianceTwoOverFanIn) {
  for (long long n : {1, 8, 100, 1728}) {
    const double s = rayleigh_scale(n);
    EXPECT_NEAR(2.0 * s * s, 2.0 / static_cast<double>(n), 1e-15);
  }
}

TEST(Init, RayleighMomentsOverManyDraws) {
  Rng rng(11);
  const auto w = init_rayleigh_phase<double>({100000}, 100, rng);
  double mean_abs = 0, var = 0;
  for (auto v : w.data()) {
    mean_abs += std::abs(v);
    var += std::norm(v);
  }
  mean_abs /= 1e5;
  var /= 1e5;
  EXPECT_NEAR(mean_abs, 0.12533, 0.02 * 0.12533);
  EXPECT_NEAR(var, 0.02, 0.05 * 0.02);
}

TEST(Init, RayleighPhaseHistogramIsFlat) {
  Rng rng(12);
  const auto w = init_rayleigh_phase<double>({100000}, 100, rng);
  std::vector<int> bins(16, 0);
  for (auto v : w.data()) {
    const double u = (std::arg(v) + std::numbers::pi) / (2 * std::numbers::pi);
    bins[std::min(15, static_cast<int>(u * 16))]++;
  }
  for (int b : bins) EXPECT_NEAR(b / 1e5, 0.0625, 0.01);
}

TEST(Init, RayleighMagnitudesStrictlyPositive) {
  Rng rng(13);
  const auto w = init_rayleigh_phase<float>({50000}, 1728, rng);
  for (auto v : w.data()) EXPECT_GT(std::abs(v), 0.0f);
}

TEST(Init, UniformPartsSupportMeanAndVariance) {
  Rng rng(14);
  const double bound = 0.05;
  const auto w = init_uniform_parts<double>({100000}, bound, rng);
  double mean = 0, var = 0;
  for (auto v : w.data()) {
    EXPECT_LE(std::abs(v.real()), bound);
    EXPECT_LE(std::abs(v.imag()), bound);
    mean += v.real();
  }
  mean /= 1e5;
  for (auto v : w.data()) var += (v.real() - mean) * (v.real() - mean);
  var /= 1e5;
  const double sd = bound / std::sqrt(3.0);
  EXPECT_LT(std::abs(mean), 3 * sd / std::sqrt(1e5));
  EXPECT_NEAR(var, bound * bound / 3, 0.05 * bound * bound / 3);
  EXPECT_THROW(init_uniform_parts<float>({4}, 0.0, rng), DomainError);
  EXPECT_THROW(init_uniform_parts<float>({4}, -1.0, rng), DomainError);
}

TEST(Init, SameSeedSameBytes) {
  for (auto scheme : {InitScheme::RayleighPhase, InitScheme::UniformParts}) {
    InitSpec spec;
    spec.scheme = scheme;
    Rng a(42), b(42), c(43);
    const auto wa = init_weights<float>({3, 3, 4, 5}, 36, spec, a);
    const auto wb = init_weights<float>({3, 3, 4, 5}, 36, spec, b);
    const auto wc = init_weights<float>({3, 3, 4, 5}, 36, spec, c);
    EXPECT_EQ(wa, wb);
    EXPECT_NE(wa, wc);
  }
}

TEST(Init, ParseSchemeNames) {
  EXPECT_EQ(parse_init_scheme("rayleigh"), InitScheme::RayleighPhase);
  EXPECT_EQ(parse_init_scheme("cwi2"), InitScheme::UniformParts);
  EXPECT_THROW(parse_init_scheme("gauss"), ConfigError);
}

TEST(Init, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

TEST(InitStats, RayleighAuditPassesAtStandardFanIns) {
  for (long long fan_in : {8LL, 108LL, 1728LL}) {
    const auto s = init_stats(InitScheme::RayleighPhase, fan_in, 100000, 7);
    EXPECT_NEAR(s.var, 2.0 / static_cast<double>(fan_in), 0.05 * 2.0 / static_cast<double>(fan_in)) << fan_in;
    EXPECT_NEAR(s.mean_abs, s.expected_mean_abs, 0.02 * s.expected_mean_abs) << fan_in;
    EXPECT_TRUE(s.ks_pass()) << fan_in << " ks=" << s.ks;
    EXPECT_TRUE(s.phase_uniform()) << fan_in << " chi2=" << s.phase_chi2;
  }
}

TEST(InitStats, ExpectedValuesAndCriticalPoints) {
  const auto s = init_stats(InitScheme::RayleighPhase, 108, 1000, 1);
  EXPECT_NEAR(s.expected_var, 2.0 / 108, 1e-12);
  EXPECT_NEAR(s.expected_mean_abs, 0.120604, 1e-5);
  // Tabulated chi-square 1% point with 15 dof is 30.578.
  EXPECT_NEAR(chi2_critical_1pct(15), 30.578, 0.05);
  EXPECT_NEAR(ks_critical_1pct(10000), 0.016276, 1e-9);
}

TEST(InitStats, UniformSchemeFailsRayleighKs) {
  const auto s = init_stats(InitScheme::UniformParts, 108, 100000, 3);
  EXPECT_NEAR(s.var, s.expected_var, 0.05 * s.expected_var);
  EXPECT_FALSE(s.ks_pass());
  EXPECT_TRUE(std::isnan(s.expected_mean_abs));
  EXPECT_TRUE(to_json(s)["expected_mean_abs"].is_null());
}

TEST(InitStats, RejectsBadArguments) {
  EXPECT_THROW(init_stats(InitScheme::RayleighPhase, 108, 0, 1), ConfigError);
  EXPECT_THROW(init_stats(InitScheme::RayleighPhase, 0, 10, 1), ConfigError);
}

TEST(InitStats, KsStatisticOfExactQuantilesIsSmall) {
  std::vector<double> x;
  const double s = 0.3;
  for (int i = 0; i < 1000; ++i) {
    const double p = (i + 0.5) / 1000.0;
    x.push_back(s * std::sqrt(-2 * std::log(1 - p)));
  }
  EXPECT_NEAR(ks_statistic(x, [s](double r) { return rayleigh_cdf(r, s); }), 0.0005, 1e-9);
}
