#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "cvfcn/init.hpp"
#include "cvfcn/layers.hpp"

using namespace cvfcn;
using CF = std::complex<float>;
using CD = std::complex<double>;
using TD = Tensor<double>;

namespace {

TD random_d(const Shape& s, Rng& rng, double scale = 1.0) {
  TD t(s);
  for (auto& v : t.data()) v = {scale * (2 * uniform_open01(rng) - 1), scale * (2 * uniform_open01(rng) - 1)};
  return t;
}

CTensor random_f(const Shape& s, Rng& rng, double scale = 1.0) { return random_d(s, rng, scale).cast<float>(); }

double probe(const TD& y, const TD& c) {
  double j = 0;
  for (std::size_t i = 0; i < y.size(); ++i) j += y[i].real() * c[i].real() + y[i].imag() * c[i].imag();
  return j;
}

// Max relative error of an analytic gradient against central differences of
// J = probe(f(), c) with respect to every component of `x`.
double fd_error(TD& x, const TD& analytic, const std::function<TD()>& f, const TD& c, double h = 1e-6) {
  double scale = 0;
  for (auto v : analytic.data()) scale = std::max({scale, std::abs(v.real()), std::abs(v.imag())});
  double worst = 0;
  double* xs = x.real_data();
  const double* as = analytic.real_data();
  for (std::size_t k = 0; k < 2 * x.size(); ++k) {
    const double keep = xs[k];
    xs[k] = keep + h;
    const double jp = probe(f(), c);
    xs[k] = keep - h;
    const double jm = probe(f(), c);
    xs[k] = keep;
    const double n = (jp - jm) / (2 * h);
    worst = std::max(worst, std::abs(n - as[k]) / std::max({std::abs(n), std::abs(as[k]), 1e-3 * scale}));
  }
  return worst;
}

// Direct complex convolution with zero padding, written with std::complex.
TD naive_conv(const TD& x, const ConvParams<double>& p) {
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), IC = x.dim(3);
  const std::size_t kh = p.kh(), kw = p.kw(), OC = p.out_channels(), s = p.stride;
  const std::size_t OH = (H + 2 * p.pad - kh) / s + 1, OW = (W + 2 * p.pad - kw) / s + 1;
  TD y({B, OH, OW, OC});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow)
        for (std::size_t o = 0; o < OC; ++o) {
          CD acc = p.bias[o];
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long r = static_cast<long>(oh * s + i) - static_cast<long>(p.pad);
              const long q = static_cast<long>(ow * s + j) - static_cast<long>(p.pad);
              if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
              for (std::size_t ic = 0; ic < IC; ++ic)
                acc += p.weight(i, j, ic, o) * x(b, static_cast<std::size_t>(r), static_cast<std::size_t>(q), ic);
            }
          y(b, oh, ow, o) = acc;
        }
  return y;
}

ConvParams<double> random_conv(std::size_t k, std::size_t in, std::size_t out, std::size_t pad, std::size_t stride,
                               Rng& rng) {
  return {random_d({k, k, in, out}, rng, 0.5), random_d({out}, rng, 0.5), stride, pad};
}

// Copies elements out so range-for over a temporary tensor is safe.
template <typename T>
std::vector<std::complex<T>> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

double max_abs_diff(const TD& a, const TD& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

// ---------------------------------------------------------------- conv

TEST(Conv, OneByOneComplexMultiply) {
  ConvParams<float> p{CTensor({1, 1, 1, 1}, {CF(1, 1)}), CTensor({1}), 1, 0};
  const auto y = conv2d_forward(CTensor({1, 1, 1, 1}, {CF(2, -1)}), p);
  EXPECT_EQ(y[0], CF(3, 1));
}

TEST(Conv, ZeroKernelGivesBias) {
  Rng rng(1);
  ConvParams<float> p{CTensor({3, 3, 2, 2}), CTensor({2}, {CF(0.5f, -1), CF(2, 3)}), 1, 1};
  const auto y = conv2d_forward(random_f({2, 5, 40, 2}, rng), p);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], p.bias[i % 2]);
}

TEST(Conv, RealInputsStayReal) {
  Rng rng(2);
  auto x = random_f({1, 6, 36, 3}, rng);
  ConvParams<float> p{random_f({3, 3, 3, 2}, rng), random_f({2}, rng), 1, 1};
  for (auto& v : x.data()) v = {v.real(), 0};
  for (auto& v : p.weight.data()) v = {v.real(), 0};
  for (auto& v : p.bias.data()) v = {v.real(), 0};
  for (auto v : values(conv2d_forward(x, p))) EXPECT_EQ(v.imag(), 0.0f);
}

TEST(Conv, MatchesNaiveComplexConvolution) {
  Rng rng(3);
  struct Case { Shape xs; std::size_t k, out, pad, stride; };
  const Case cases[] = {{{2, 5, 6, 3}, 3, 4, 1, 1},   {{1, 7, 40, 2}, 3, 3, 1, 1}, {{2, 4, 4, 5}, 1, 3, 0, 1},
                        {{1, 9, 9, 2}, 3, 2, 1, 2},   {{1, 8, 64, 4}, 3, 2, 1, 1}, {{1, 5, 5, 1}, 3, 1, 0, 1}};
  for (const auto& c : cases) {
    const auto x = random_d(c.xs, rng);
    const auto p = random_conv(c.k, c.xs[3], c.out, c.pad, c.stride, rng);
    EXPECT_LT(max_abs_diff(conv2d_forward(x, p), naive_conv(x, p)), 1e-12) << shape_str(c.xs);
  }
}

TEST(Conv, ShapeErrors) {
  Rng rng(4);
  ConvParams<float> p{random_f({3, 3, 2, 2}, rng), random_f({2}, rng), 1, 1};
  EXPECT_THROW(conv2d_forward(random_f({1, 4, 4, 3}, rng), p), ShapeError);
  ConvParams<float> s2{random_f({3, 3, 2, 2}, rng), random_f({2}, rng), 2, 0};
  EXPECT_THROW(conv2d_forward(random_f({1, 6, 6, 2}, rng), s2), ShapeError);
  ConvParams<float> even{random_f({2, 2, 2, 2}, rng), random_f({2}, rng), 1, 0};
  EXPECT_THROW(conv2d_forward(random_f({1, 4, 4, 2}, rng), even), ShapeError);
}

TEST(Conv, ZeroUpstreamGivesZeroGradients) {
  Rng rng(5);
  ConvParams<float> p{random_f({3, 3, 2, 3}, rng), random_f({3}, rng), 1, 1};
  const auto x = random_f({2, 4, 5, 2}, rng);
  const auto g = conv2d_backward(x, p, CTensor({2, 4, 5, 3}));
  for (const auto* t : {&g.dx, &g.dweight, &g.dbias})
    for (auto v : t->data()) EXPECT_EQ(v, CF(0, 0));
}

TEST(Conv, SingleElementGradientPackaging) {
  // J = re(w x): dJ/dre(w) = re(x), dJ/dim(w) = -im(x).
  ConvParams<double> p{TD({1, 1, 1, 1}, {CD(0.3, -0.7)}), TD({1}), 1, 0};
  const TD x({1, 1, 1, 1}, {CD(2, -1)});
  const auto g = conv2d_backward(x, p, TD({1, 1, 1, 1}, {CD(1, 0)}));
  EXPECT_NEAR(g.dweight[0].real(), 2.0, 1e-15);
  EXPECT_NEAR(g.dweight[0].imag(), 1.0, 1e-15);
  EXPECT_EQ(g.dbias[0], CD(1, 0));
}

TEST(Conv, BackwardMatchesFiniteDifferencesF64) {
  Rng rng(6);
  struct Case { Shape xs; std::size_t k, out, pad, stride; };
  const Case cases[] = {{{1, 4, 4, 2}, 3, 3, 1, 1}, {{2, 3, 34, 2}, 3, 2, 1, 1}, {{2, 3, 4, 3}, 1, 2, 0, 1},
                        {{1, 7, 7, 2}, 3, 2, 1, 2}};
  for (const auto& cs : cases) {
    auto x = random_d(cs.xs, rng);
    auto p = random_conv(cs.k, cs.xs[3], cs.out, cs.pad, cs.stride, rng);
    const auto y = conv2d_forward(x, p);
    const auto c = random_d(y.shape(), rng);
    const auto g = conv2d_backward(x, p, c);
    auto f = [&] { return conv2d_forward(x, p); };
    EXPECT_LT(fd_error(x, g.dx, f, c), 1e-6) << "dx " << shape_str(cs.xs);
    EXPECT_LT(fd_error(p.weight, g.dweight, f, c), 1e-6) << "dW " << shape_str(cs.xs);
    EXPECT_LT(fd_error(p.bias, g.dbias, f, c), 1e-6) << "db " << shape_str(cs.xs);
  }
}

TEST(Conv, FloatBackwardAgreesWithDoubleBackward) {
  // 4x4x2 -> 3 conv; f32 analytic gradients against the f64 oracle.
  Rng rng(7);
  const auto x = random_d({1, 4, 4, 2}, rng);
  const auto p = random_conv(3, 2, 3, 1, 1, rng);
  const auto c = random_d({1, 4, 4, 3}, rng);
  const auto gd = conv2d_backward(x, p, c);
  ConvParams<float> pf{p.weight.cast<float>(), p.bias.cast<float>(), 1, 1};
  const auto gf = conv2d_backward(x.cast<float>(), pf, c.cast<float>());
  auto rel = [](const TD& a, const CTensor& b) {
    double scale = 0, m = 0;
    for (auto v : a.data()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - CD(b[i])) / scale);
    return m;
  };
  EXPECT_LT(rel(gd.dx, gf.dx), 1e-4);
  EXPECT_LT(rel(gd.dweight, gf.dweight), 1e-4);
  EXPECT_LT(rel(gd.dbias, gf.dbias), 1e-4);
}

// ---------------------------------------------------------------- batch norm

TEST(BatchNorm, TrainingOutputIsWhitenedToGammaGammaT) {
  Rng rng(8);
  auto x = random_d({4, 6, 6, 3}, rng);
  // Correlated, shifted input per channel.
  for (auto& v : x.data()) v = {3 * v.real() + 2, v.real() + 0.5 * v.imag() - 1};
  const auto p = BNParams<double>::make(3);
  const auto y = batch_norm_forward(x, p, true);
  for (std::size_t c = 0; c < 3; ++c) {
    CD mean = 0;
    double a = 0, b = 0, d = 0;
    const std::size_t n = y.size() / 3;
    for (std::size_t i = c; i < y.size(); i += 3) mean += y[i];
    mean /= static_cast<double>(n);
    for (std::size_t i = c; i < y.size(); i += 3) {
      const CD v = y[i] - mean;
      a += v.real() * v.real();
      b += v.real() * v.imag();
      d += v.imag() * v.imag();
    }
    EXPECT_LT(std::abs(mean), 1e-3);
    EXPECT_NEAR(a / n, 0.5, 1e-3);
    EXPECT_NEAR(b / n, 0.0, 1e-3);
    EXPECT_NEAR(d / n, 0.5, 1e-3);
  }
}

TEST(BatchNorm, ConstantInputGivesBeta) {
  auto p = BNParams<float>::make(2);
  p.beta[0] = {0.25f, -1};
  p.beta[1] = {3, 4};
  CTensor x({2, 3, 3, 2});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = i % 2 ? CF(-2, 7) : CF(5, 1);
  const auto y = batch_norm_forward(x, p, true);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], p.beta[i % 2]);
}

TEST(BatchNorm, InferenceWithBatchStatisticsMatchesTraining) {
  Rng rng(9);
  const auto x = random_d({3, 4, 4, 2}, rng);
  auto p = BNParams<double>::make(2);
  p.gamma = random_d({2, 2}, rng);
  p.beta = random_d({2}, rng);
  BNCache<double> cache;
  const auto yt = batch_norm_forward(x, p, true, &cache);
  for (std::size_t c = 0; c < 2; ++c) {
    p.running_mean[c] = cache.mean[c];
    const auto& v = cache.batch_cov[c];
    p.running_cov[2 * c] = {v.a, v.b};
    p.running_cov[2 * c + 1] = {v.b, v.c};
  }
  EXPECT_LT(max_abs_diff(batch_norm_forward(x, p, false), yt), 1e-12);
}

TEST(BatchNorm, RunningStatisticsMomentum) {
  Rng rng(10);
  const auto x = random_d({2, 4, 4, 1}, rng);
  auto p = BNParams<double>::make(1);
  BNCache<double> cache;
  batch_norm_forward(x, p, true, &cache);
  batch_norm_update_running(p, cache);
  EXPECT_NEAR(p.running_mean[0].real(), 0.1 * cache.mean[0].real(), 1e-15);
  EXPECT_NEAR(p.running_cov[0].real(), 0.9 + 0.1 * cache.batch_cov[0].a, 1e-15);
  EXPECT_NEAR(p.running_cov[0].imag(), 0.1 * cache.batch_cov[0].b, 1e-15);
  EXPECT_EQ(p.running_cov[0].imag(), p.running_cov[1].real());
  EXPECT_GE(p.running_cov[1].imag(), 0.0);
}

TEST(BatchNorm, SingleElementTrainingBatchIsDegenerate) {
  const auto p = BNParams<float>::make(2);
  EXPECT_THROW(batch_norm_forward(CTensor({1, 1, 1, 2}), p, true), DegenerateStatisticsError);
  EXPECT_NO_THROW(batch_norm_forward(CTensor({1, 1, 1, 2}), p, false));
  EXPECT_THROW(batch_norm_forward(CTensor({1, 2, 2, 3}), p, true), ShapeError);
}

TEST(BatchNorm, BackwardZeroUpstreamAndBetaGradient) {
  Rng rng(11);
  const auto x = random_d({2, 3, 3, 2}, rng);
  const auto p = BNParams<double>::make(2);
  BNCache<double> cache;
  batch_norm_forward(x, p, true, &cache);
  const auto g0 = batch_norm_backward(cache, p, TD(x.shape()));
  for (const auto* t : {&g0.dx, &g0.dgamma, &g0.dbeta})
    for (auto v : t->data()) EXPECT_EQ(v, CD(0, 0));
  const auto dy = random_d(x.shape(), rng);
  const auto g = batch_norm_backward(cache, p, dy);
  for (std::size_t c = 0; c < 2; ++c) {
    CD s = 0;
    for (std::size_t i = c; i < dy.size(); i += 2) s += dy[i];
    EXPECT_NEAR(std::abs(g.dbeta[c] - s), 0.0, 1e-12);
  }
}

TEST(BatchNorm, BackwardMatchesFiniteDifferences) {
  Rng rng(12);
  for (bool training : {true, false}) {
    auto x = random_d({2, 3, 3, 2}, rng);
    auto p = BNParams<double>::make(2);
    p.gamma = random_d({2, 2}, rng);
    p.beta = random_d({2}, rng);
    p.running_mean = random_d({2}, rng, 0.3);
    p.running_cov[0] = {1.3, 0.2};
    p.running_cov[1] = {0.2, 0.7};
    BNCache<double> cache;
    const auto y = batch_norm_forward(x, p, training, &cache);
    const auto c = random_d(y.shape(), rng);
    const auto g = batch_norm_backward(cache, p, c);
    auto f = [&] { return batch_norm_forward(x, p, training); };
    EXPECT_LT(fd_error(x, g.dx, f, c), 1e-6) << training;
    EXPECT_LT(fd_error(p.gamma, g.dgamma, f, c), 1e-6) << training;
    EXPECT_LT(fd_error(p.beta, g.dbeta, f, c), 1e-6) << training;
  }
}

// ---------------------------------------------------------------- activations

TEST(CRelu, SignPatternsAndIdempotence) {
  const CTensor x({3}, {CF(1, -2), CF(-3, 4), CF(0, 0)});
  const auto y = crelu_forward(x);
  EXPECT_EQ(y[0], CF(1, 0));
  EXPECT_EQ(y[1], CF(0, 4));
  EXPECT_EQ(y[2], CF(0, 0));
  EXPECT_EQ(crelu_forward(y), y);
}

TEST(CRelu, BackwardGatesComponentsIndependently) {
  const CTensor x({3}, {CF(1, -2), CF(0, 5), CF(-1, 0)});
  const auto dx = crelu_backward(x, CTensor({3}, {CF(1, 1), CF(2, 3), CF(4, 5)}));
  EXPECT_EQ(dx[0], CF(1, 0));
  EXPECT_EQ(dx[1], CF(0, 3));  // re exactly 0: subgradient 0
  EXPECT_EQ(dx[2], CF(0, 0));
}

TEST(CRelu, BackwardMatchesFiniteDifferencesAwayFromKinks) {
  Rng rng(13);
  auto x = random_d({2, 3, 3, 2}, rng);
  for (auto& v : x.data()) v = {v.real() + (v.real() > 0 ? 0.05 : -0.05), v.imag() + (v.imag() > 0 ? 0.05 : -0.05)};
  const auto c = random_d(x.shape(), rng);
  const auto g = crelu_backward(x, c);
  EXPECT_LT(fd_error(x, g, [&] { return crelu_forward(x); }, c), 1e-6);
}

TEST(Output, LogisticValuesAndRange) {
  const double l3 = std::log(3.0);
  const TD x({3}, {CD(0, 0), CD(l3, l3), CD(800, -800)});
  const auto y = output_forward(x);
  EXPECT_EQ(y[0], CD(0.5, 0.5));
  EXPECT_NEAR(y[1].real(), 0.75, 1e-15);
  EXPECT_NEAR(y[1].imag(), 0.75, 1e-15);
  EXPECT_EQ(y[2].real(), 1.0);
  EXPECT_EQ(y[2].imag(), 0.0);
  Rng rng(14);
  for (auto v : values(output_forward(random_f({1000}, rng, 20.0)))) {
    EXPECT_GT(v.real(), 0.0f);
    EXPECT_LE(v.real(), 1.0f);
    EXPECT_GT(v.imag(), 0.0f);
  }
}

TEST(Output, BackwardMatchesFiniteDifferences) {
  Rng rng(15);
  auto x = random_d({2, 3, 3, 2}, rng, 3.0);
  const auto c = random_d(x.shape(), rng);
  const auto g = output_backward(output_forward(x), c);
  EXPECT_LT(fd_error(x, g, [&] { return output_forward(x); }, c), 1e-6);
}

// ---------------------------------------------------------------- pooling

TEST(Pool, PicksLargestMagnitude) {
  const CTensor x({1, 2, 2, 1}, {CF(1, 0), CF(0, 3), CF(-2, -2), CF(1, 1)});
  const auto [y, loc] = maxpool_forward(x, 2, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], CF(0, 3));
  EXPECT_EQ(loc.index[0], 1u);
}

TEST(Pool, TiesGoToFirstRowMajorElement) {
  const CTensor x({1, 2, 2, 1}, {CF(0, 1), CF(1, 0), CF(-1, 0), CF(0, -1)});
  const auto [y, loc] = maxpool_forward(x, 2, 2);
  EXPECT_EQ(loc.index[0], 0u);
  EXPECT_EQ(y[0], CF(0, 1));
}

TEST(Pool, ShapesAndErrors) {
  Rng rng(16);
  const auto [y, loc] = maxpool_forward(random_f({2, 4, 4, 3}, rng), 2, 2);
  EXPECT_EQ(y.shape(), (Shape{2, 2, 2, 3}));
  EXPECT_EQ(loc.index.size(), y.size());
  EXPECT_THROW(maxpool_forward(random_f({1, 1, 4, 1}, rng), 2, 2), ShapeError);
}

TEST(Pool, RecordedIndicesLieInsideTheirWindows) {
  Rng rng(17);
  const auto x = random_f({2, 8, 6, 3}, rng);
  const auto [y, loc] = maxpool_forward(x, 2, 2);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t c = 0; c < 3; ++c) {
          const std::size_t src = loc.index[y.offset(b, i, j, c)];
          const std::size_t sc = src % 3, sj = (src / 3) % 6, si = (src / 18) % 8, sb = src / 144;
          EXPECT_EQ(sb, b);
          EXPECT_EQ(sc, c);
          EXPECT_EQ(si / 2, i);
          EXPECT_EQ(sj / 2, j);
        }
}

TEST(Pool, BackwardRoutesOneGradientPerWindow) {
  Rng rng(18);
  const auto x = random_f({1, 4, 6, 2}, rng);
  const auto [y, loc] = maxpool_forward(x, 2, 2);
  CTensor dy(y.shape());
  dy.fill({1, 1});
  const auto dx = maxpool_backward(loc, dy);
  std::size_t nonzero = 0;
  for (auto v : dx.data()) nonzero += v != CF(0, 0);
  EXPECT_EQ(nonzero, y.size());
  for (auto v : values(maxpool_backward(loc, CTensor(y.shape())))) EXPECT_EQ(v, CF(0, 0));
}

TEST(Pool, BackwardMatchesFiniteDifferencesWithoutTies) {
  Rng rng(19);
  auto x = random_d({2, 4, 4, 2}, rng);
  const auto [y, loc] = maxpool_forward(x, 2, 2);
  const auto c = random_d(y.shape(), rng);
  const auto g = maxpool_backward(loc, c);
  EXPECT_LT(fd_error(x, g, [&] { return maxpool_forward(x, 2, 2).first; }, c), 1e-6);
}

TEST(Unpool, PoolThenUnpoolKeepsExactlyTheMaxima) {
  Rng rng(20);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_f({2, 8, 8, 3}, rng);
    const auto [y, loc] = maxpool_forward(x, 2, 2);
    const auto u = maxunpool_forward(y, loc);
    ASSERT_EQ(u.shape(), x.shape());
    std::vector<bool> chosen(x.size(), false);
    for (auto i : loc.index) chosen[i] = true;
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(u[i], chosen[i] ? x[i] : CF(0, 0));
  }
}

TEST(Unpool, CountsZerosAndContract) {
  Rng rng(21);
  const auto [y, loc] = maxpool_forward(random_f({1, 4, 4, 1}, rng), 2, 2);
  std::size_t nonzero = 0;
  for (auto v : values(maxunpool_forward(y, loc))) nonzero += v != CF(0, 0);
  EXPECT_EQ(nonzero, 4u);
  for (auto v : values(maxunpool_forward(CTensor(y.shape()), loc))) EXPECT_EQ(v, CF(0, 0));
  EXPECT_THROW(maxunpool_forward(CTensor({1, 1, 2, 1}), loc), ContractViolation);
  EXPECT_THROW(maxunpool_forward(y, loc, {1, 4, 4, 2}), ContractViolation);
}

TEST(Unpool, BackwardGathersAndRoundTrips) {
  Rng rng(22);
  auto x = random_d({1, 4, 6, 2}, rng);
  const auto [y, loc] = maxpool_forward(x, 2, 2);
  const auto p = random_d(y.shape(), rng);
  EXPECT_EQ(maxunpool_backward(loc, maxunpool_forward(p, loc)), p);
  for (auto v : values(maxunpool_backward(loc, TD(x.shape())))) EXPECT_EQ(v, CD(0, 0));
  auto z = random_d(y.shape(), rng);
  const auto c = random_d(x.shape(), rng);
  EXPECT_LT(fd_error(z, maxunpool_backward(loc, c), [&] { return maxunpool_forward(z, loc); }, c), 1e-6);
}

TEST(Unpool, TopLeftMapPlacesAtWindowOrigin) {
  const auto loc = top_left_locmap({1, 4, 4, 1}, 2, 2);
  const CTensor y({1, 2, 2, 1}, {CF(1, 0), CF(2, 0), CF(3, 0), CF(4, 0)});
  const auto u = maxunpool_forward(y, loc);
  EXPECT_EQ(u(0, 0, 0, 0), CF(1, 0));
  EXPECT_EQ(u(0, 0, 2, 0), CF(2, 0));
  EXPECT_EQ(u(0, 2, 0, 0), CF(3, 0));
  EXPECT_EQ(u(0, 2, 2, 0), CF(4, 0));
  EXPECT_EQ(u(0, 1, 1, 0), CF(0, 0));
}

TEST(Layers, RealInputsStayRealThroughPoolUnpoolAndRelu) {
  Rng rng(23);
  auto x = random_f({1, 4, 4, 2}, rng);
  for (auto& v : x.data()) v = {v.real(), 0};
  const auto [y, loc] = maxpool_forward(crelu_forward(x), 2, 2);
  for (auto v : values(maxunpool_forward(y, loc))) EXPECT_EQ(v.imag(), 0.0f);
}

// ---------------------------------------------------------------- dropout

TEST(Dropout, KeepOneAndInferenceAreIdentity) {
  Rng rng(24);
  const auto x = random_f({2, 3, 3, 2}, rng);
  EXPECT_EQ(dropout_forward(x, 1.0, rng, true).first, x);
  EXPECT_EQ(dropout_forward(x, 0.5, rng, false).first, x);
  EXPECT_THROW(dropout_forward(x, 0.0, rng, true), ConfigError);
  EXPECT_THROW(dropout_forward(x, 1.5, rng, true), ConfigError);
}

TEST(Dropout, KeptFractionScalingAndSharedMask) {
  Rng rng(25);
  CTensor x({100000});
  x.fill({1, -1});
  const auto [y, mask] = dropout_forward(x, 0.5, rng, true);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (mask.keep[i]) {
      ++kept;
      EXPECT_EQ(y[i], CF(2, -2));
    } else {
      EXPECT_EQ(y[i], CF(0, 0));
    }
  }
  EXPECT_NEAR(kept / 1e5, 0.5, 0.02);
  CTensor dy(x.shape());
  dy.fill({1, 1});
  const auto dx = dropout_backward(mask, dy);
  for (std::size_t i = 0; i < dx.size(); ++i) EXPECT_EQ(dx[i], mask.keep[i] ? CF(2, 2) : CF(0, 0));
}
