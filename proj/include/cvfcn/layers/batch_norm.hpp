#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/error.hpp"

namespace cvfcn {

/**
 * Complex batch normalization state. Each complex activation is treated as a
 * real 2-vector (re, im) that is centred, whitened by the inverse square root
 * of its 2x2 covariance and then mapped by a learned 2x2 matrix and offset.
 *
 * gamma[c, 0] holds row 0 of the channel's 2x2 scale as (g00 + j g01),
 * gamma[c, 1] holds row 1 as (g10 + j g11). running_cov uses the same
 * row packing for the symmetric covariance (Vrr, Vri; Vri, Vii).
 */
template <typename T>
struct BNParams {
  Tensor<T> gamma;         // [C, 2]
  Tensor<T> beta;          // [C]
  Tensor<T> running_mean;  // [C]
  Tensor<T> running_cov;   // [C, 2]
  T momentum = T(0.9);
  T epsilon = T(1e-5);

  std::size_t channels() const { return beta.dim(0); }

  static BNParams make(std::size_t channels) {
    BNParams p;
    p.gamma = Tensor<T>({channels, 2});
    p.beta = Tensor<T>({channels});
    p.running_mean = Tensor<T>({channels});
    p.running_cov = Tensor<T>({channels, 2});
    const T g = static_cast<T>(1.0 / std::numbers::sqrt2);
    for (std::size_t c = 0; c < channels; ++c) {
      p.gamma[2 * c] = {g, T(0)};
      p.gamma[2 * c + 1] = {T(0), g};
      p.running_cov[2 * c] = {T(1), T(0)};
      p.running_cov[2 * c + 1] = {T(0), T(1)};
    }
    return p;
  }
};

/// Symmetric 2x2 matrix [[a, b], [b, c]].
template <typename S = double>
struct Sym2 {
  S a = 0, b = 0, c = 0;
};

/// Closed-form inverse square root of a symmetric positive-definite 2x2 matrix.
template <typename S>
Sym2<S> inverse_sqrt(const Sym2<S>& v) {
  const S s = std::sqrt(v.a * v.c - v.b * v.b);
  const S t = std::sqrt(v.a + v.c + 2 * s);
  const S k = 1 / (s * t);
  return {k * (v.c + s), -k * v.b, k * (v.a + s)};
}

template <typename T>
struct BNCache {
  using S = acc_t<T>;
  bool training = false;
  Tensor<T> centred;                // x - mean
  Tensor<T> whitened;               // W (x - mean)
  std::vector<std::complex<S>> mean;
  std::vector<Sym2<S>> batch_cov;   // statistics used, without epsilon
  std::vector<Sym2<S>> cov;         // covariance incl. epsilon, per channel
  std::vector<Sym2<S>> whitening;   // W = cov^{-1/2}, per channel
};

template <typename T>
struct BNGrads {
  Tensor<T> dx;
  Tensor<T> dgamma;
  Tensor<T> dbeta;
};

namespace detail {

template <typename T>
void check_bn_shapes(const Tensor<T>& x, const BNParams<T>& p) {
  if (x.rank() < 2) throw ShapeError("batch_norm: input must have a channel axis");
  const std::size_t c = x.shape().back();
  if (c != p.channels() || p.gamma.shape() != Shape{c, 2} || p.running_mean.shape() != Shape{c} ||
      p.running_cov.shape() != Shape{c, 2})
    throw ShapeError("batch_norm: parameters do not match input channels " + std::to_string(c));
}

}  // namespace detail

/// Training mode normalizes with batch statistics (recorded in the cache so
/// the caller can fold them into the running estimates); inference uses the
/// running estimates. Parameters are never modified.
template <typename T>
Tensor<T> batch_norm_forward(const Tensor<T>& x, const BNParams<T>& p, bool training, BNCache<T>* cache = nullptr) {
  detail::check_bn_shapes(x, p);
  const std::size_t channels = p.channels();
  const std::size_t count = x.size() / channels;
  if (training && count < 2)
    throw DegenerateStatisticsError("batch_norm: training needs more than one element per channel");

  using S = acc_t<T>;
  std::vector<std::complex<S>> mean(channels);
  std::vector<Sym2<S>> cov(channels), whitening(channels);
  if (training) {
    for (std::size_t n = 0; n < count; ++n)
      for (std::size_t c = 0; c < channels; ++c) {
        const auto v = x[n * channels + c];
        mean[c] += std::complex<S>(v.real(), v.imag());
      }
    for (auto& m : mean) m /= static_cast<S>(count);
    for (std::size_t n = 0; n < count; ++n)
      for (std::size_t c = 0; c < channels; ++c) {
        const auto v = x[n * channels + c];
        const S dr = v.real() - mean[c].real(), di = v.imag() - mean[c].imag();
        cov[c].a += dr * dr;
        cov[c].b += dr * di;
        cov[c].c += di * di;
      }
    for (auto& v : cov) {
      v.a /= static_cast<S>(count);
      v.b /= static_cast<S>(count);
      v.c /= static_cast<S>(count);
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = {p.running_mean[c].real(), p.running_mean[c].imag()};
      cov[c] = {p.running_cov[2 * c].real(), p.running_cov[2 * c].imag(), p.running_cov[2 * c + 1].imag()};
    }
  }
  std::vector<Sym2<S>> batch_cov = cov;
  for (std::size_t c = 0; c < channels; ++c) {
    cov[c].a += p.epsilon;
    cov[c].c += p.epsilon;
    whitening[c] = inverse_sqrt(cov[c]);
  }

  Tensor<T> y(x.shape());
  Tensor<T> centred, whitened;
  if (cache) {
    centred = Tensor<T>(x.shape());
    whitened = Tensor<T>(x.shape());
  }
  for (std::size_t n = 0; n < count; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = n * channels + c;
      const S dr = x[i].real() - mean[c].real(), di = x[i].imag() - mean[c].imag();
      const Sym2<S>& w = whitening[c];
      const S hr = w.a * dr + w.b * di, hi = w.b * dr + w.c * di;
      const auto g0 = p.gamma[2 * c], g1 = p.gamma[2 * c + 1];
      y[i] = {static_cast<T>(g0.real() * hr + g0.imag() * hi + p.beta[c].real()),
              static_cast<T>(g1.real() * hr + g1.imag() * hi + p.beta[c].imag())};
      if (cache) {
        centred[i] = {static_cast<T>(dr), static_cast<T>(di)};
        whitened[i] = {static_cast<T>(hr), static_cast<T>(hi)};
      }
    }
  if (cache) {
    cache->training = training;
    cache->centred = std::move(centred);
    cache->whitened = std::move(whitened);
    cache->mean = std::move(mean);
    cache->batch_cov = std::move(batch_cov);
    cache->cov = std::move(cov);
    cache->whitening = std::move(whitening);
  }
  return y;
}

/// running <- momentum * running + (1 - momentum) * batch, from a training-mode cache.
template <typename T>
void batch_norm_update_running(BNParams<T>& p, const BNCache<T>& cache) {
  if (!cache.training) return;
  using S = acc_t<T>;
  const S m = p.momentum;
  for (std::size_t c = 0; c < p.channels(); ++c) {
    const auto& mu = cache.mean[c];
    const auto& v = cache.batch_cov[c];
    p.running_mean[c] = {static_cast<T>(m * p.running_mean[c].real() + (1 - m) * mu.real()),
                         static_cast<T>(m * p.running_mean[c].imag() + (1 - m) * mu.imag())};
    const S ra = m * p.running_cov[2 * c].real() + (1 - m) * v.a;
    const S rb = m * p.running_cov[2 * c].imag() + (1 - m) * v.b;
    const S rc = m * p.running_cov[2 * c + 1].imag() + (1 - m) * v.c;
    p.running_cov[2 * c] = {static_cast<T>(ra), static_cast<T>(rb)};
    p.running_cov[2 * c + 1] = {static_cast<T>(rb), static_cast<T>(rc)};
  }
}

namespace detail {

// dW/dx for x in {a, b, c} of W = [[a,b],[b,c]]^{-1/2}, contracted with gW.
template <typename S>
std::array<S, 3> inverse_sqrt_vjp(const Sym2<S>& v, S gwa, S gwb, S gwc) {
  // W = k [[c+s, -b], [-b, a+s]], s = sqrt(ac - b^2), t = sqrt(a + c + 2s), k = 1/(s t).
  // gwb is the gradient w.r.t. each off-diagonal entry (they are equal).
  const S s = std::sqrt(v.a * v.c - v.b * v.b);
  const S t = std::sqrt(v.a + v.c + 2 * s);
  const S k = 1 / (s * t);
  const S ds[3] = {v.c / (2 * s), -v.b / s, v.a / (2 * s)};
  const S dtr[3] = {1, 0, 1};
  std::array<S, 3> out{};
  for (int x = 0; x < 3; ++x) {
    const S dt = (dtr[x] + 2 * ds[x]) / (2 * t);
    const S dk = -k * (ds[x] / s + dt / t);
    // dM/dx entries: (0,0), (0,1)=(1,0), (1,1)
    const S dm00 = ds[x] + (x == 2 ? 1 : 0);
    const S dm01 = x == 1 ? -1 : 0;
    const S dm11 = ds[x] + (x == 0 ? 1 : 0);
    const S dw00 = dk * (v.c + s) + k * dm00;
    const S dw01 = dk * (-v.b) + k * dm01;
    const S dw11 = dk * (v.a + s) + k * dm11;
    out[x] = gwa * dw00 + 2 * gwb * dw01 + gwc * dw11;
  }
  return out;
}

}  // namespace detail

template <typename T>
BNGrads<T> batch_norm_backward(const BNCache<T>& cache, const BNParams<T>& p, const Tensor<T>& dy) {
  if (dy.shape() != cache.whitened.shape())
    throw ContractViolation("batch_norm_backward: gradient shape does not match cached forward");
  const std::size_t channels = p.channels();
  const std::size_t count = dy.size() / channels;
  BNGrads<T> g{Tensor<T>(dy.shape()), Tensor<T>(p.gamma.shape()), Tensor<T>(p.beta.shape())};

  using S = acc_t<T>;
  std::vector<std::array<S, 4>> dgamma(channels, {0, 0, 0, 0});
  std::vector<std::complex<S>> dbeta(channels);
  // Gradient w.r.t. the whitening matrix entries (a, off-diagonal, c).
  std::vector<std::array<S, 3>> dw(channels, {0, 0, 0});
  std::vector<S> gdr(dy.size()), gdi(dy.size());

  for (std::size_t n = 0; n < count; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = n * channels + c;
      const S gyr = dy[i].real(), gyi = dy[i].imag();
      const S hr = cache.whitened[i].real(), hi = cache.whitened[i].imag();
      const S dr = cache.centred[i].real(), di = cache.centred[i].imag();
      dbeta[c] += std::complex<S>(gyr, gyi);
      dgamma[c][0] += gyr * hr;
      dgamma[c][1] += gyr * hi;
      dgamma[c][2] += gyi * hr;
      dgamma[c][3] += gyi * hi;
      const auto g0 = p.gamma[2 * c], g1 = p.gamma[2 * c + 1];
      const S ghr = g0.real() * gyr + g1.real() * gyi;
      const S ghi = g0.imag() * gyr + g1.imag() * gyi;
      const Sym2<S>& w = cache.whitening[c];
      gdr[i] = w.a * ghr + w.b * ghi;
      gdi[i] = w.b * ghr + w.c * ghi;
      dw[c][0] += ghr * dr;
      dw[c][1] += (ghr * di + ghi * dr) / 2;
      dw[c][2] += ghi * di;
    }

  for (std::size_t c = 0; c < channels; ++c) {
    g.dbeta[c] = {static_cast<T>(dbeta[c].real()), static_cast<T>(dbeta[c].imag())};
    g.dgamma[2 * c] = {static_cast<T>(dgamma[c][0]), static_cast<T>(dgamma[c][1])};
    g.dgamma[2 * c + 1] = {static_cast<T>(dgamma[c][2]), static_cast<T>(dgamma[c][3])};
  }

  if (cache.training) {
    const S inv_n = 1 / static_cast<S>(count);
    std::vector<std::array<S, 3>> dcov(channels);
    for (std::size_t c = 0; c < channels; ++c)
      dcov[c] = detail::inverse_sqrt_vjp(cache.cov[c], dw[c][0], dw[c][1], dw[c][2]);
    std::vector<std::complex<S>> mean_gd(channels);
    for (std::size_t n = 0; n < count; ++n)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = n * channels + c;
        const S dr = cache.centred[i].real(), di = cache.centred[i].imag();
        gdr[i] += (2 * dcov[c][0] * dr + dcov[c][1] * di) * inv_n;
        gdi[i] += (dcov[c][1] * dr + 2 * dcov[c][2] * di) * inv_n;
        mean_gd[c] += std::complex<S>(gdr[i], gdi[i]);
      }
    for (auto& m : mean_gd) m *= inv_n;
    for (std::size_t n = 0; n < count; ++n)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = n * channels + c;
        g.dx[i] = {static_cast<T>(gdr[i] - mean_gd[c].real()), static_cast<T>(gdi[i] - mean_gd[c].imag())};
      }
  } else {
    for (std::size_t i = 0; i < dy.size(); ++i) g.dx[i] = {static_cast<T>(gdr[i]), static_cast<T>(gdi[i])};
  }
  return g;
}

}  // namespace cvfcn
