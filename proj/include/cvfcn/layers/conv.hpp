#pragma once

#include <vector>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/error.hpp"

namespace cvfcn {

namespace testing {
/// Fault-injection switch: when set, conv2d_backward returns a weight
/// gradient scaled by 1.05. Used to prove the gradient checker can fail.
inline bool& corrupt_conv_backward() {
  static bool flag = false;
  return flag;
}
}  // namespace testing

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // [kh, kw, in_ch, out_ch]
  Tensor<T> bias;    // [out_ch]
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t kh() const { return weight.dim(0); }
  std::size_t kw() const { return weight.dim(1); }
  std::size_t in_channels() const { return weight.dim(2); }
  std::size_t out_channels() const { return weight.dim(3); }
};

template <typename T>
struct ConvGrads {
  Tensor<T> dx;
  Tensor<T> dweight;
  Tensor<T> dbias;
};

namespace detail {

struct ConvGeometry {
  std::size_t batch, in_h, in_w, in_c, out_h, out_w, out_c, kh, kw, stride, pad;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const ConvParams<T>& p) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be rank-4 [B,H,W,C], got " + shape_str(x.shape()));
  if (p.weight.rank() != 4) throw ShapeError("conv2d: kernel must be rank-4 [kh,kw,in,out]");
  if (p.kh() % 2 == 0 || p.kw() % 2 == 0) throw ShapeError("conv2d: kernel sizes must be odd");
  if (x.dim(3) != p.in_channels())
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(3)) + " channels, kernel expects " +
                     std::to_string(p.in_channels()));
  if (p.bias.shape() != Shape{p.out_channels()}) throw ShapeError("conv2d: bias must have shape [out_ch]");
  if (p.stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), 0, 0, p.out_channels(), p.kh(), p.kw(), p.stride, p.pad};
  const auto span_h = static_cast<long long>(g.in_h + 2 * g.pad) - static_cast<long long>(g.kh);
  const auto span_w = static_cast<long long>(g.in_w + 2 * g.pad) - static_cast<long long>(g.kw);
  if (span_h < 0 || span_w < 0) throw ShapeError("conv2d: kernel larger than padded input");
  if (span_h % static_cast<long long>(g.stride) != 0 || span_w % static_cast<long long>(g.stride) != 0)
    throw ShapeError("conv2d: output size (in + 2*pad - k)/stride + 1 is not integral for input " + shape_str(x.shape()));
  g.out_h = static_cast<std::size_t>(span_h) / g.stride + 1;
  g.out_w = static_cast<std::size_t>(span_w) / g.stride + 1;
  return g;
}

// Expands each complex tap w into the 2x2 real block acting on interleaved
// (re, im) vectors: row (ic, re) -> [wr, wi], row (ic, im) -> [-wi, wr].
template <typename T>
std::vector<T> real_block_kernel(const Tensor<T>& w) {
  const std::size_t taps = w.dim(0) * w.dim(1), ic = w.dim(2), oc = w.dim(3);
  std::vector<T> out(taps * 2 * ic * 2 * oc);
  for (std::size_t t = 0; t < taps; ++t)
    for (std::size_t m = 0; m < ic; ++m) {
      T* row_re = out.data() + ((t * 2 * ic) + 2 * m) * 2 * oc;
      T* row_im = row_re + 2 * oc;
      for (std::size_t n = 0; n < oc; ++n) {
        const auto v = w[(t * ic + m) * oc + n];
        row_re[2 * n] = v.real();
        row_re[2 * n + 1] = v.imag();
        row_im[2 * n] = -v.imag();
        row_im[2 * n + 1] = v.real();
      }
    }
  return out;
}

}  // namespace detail

namespace detail {

// Interleaved [B,H,W,C] complex -> planar real [B][2C][H+2p][W+2p], zero border.
template <typename T>
std::vector<T> to_planar(const T* src, std::size_t batch, std::size_t h, std::size_t w, std::size_t rows, std::size_t pad) {
  const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
  std::vector<T> out(batch * rows * hp * wp, T(0));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const T* px = src + ((b * h + i) * w + j) * rows;
        T* dst = out.data() + ((b * rows) * hp + i + pad) * wp + j + pad;
        for (std::size_t k = 0; k < rows; ++k) dst[k * hp * wp] = px[k];
      }
  return out;
}

// Inverse of to_planar, dropping the border.
template <typename T>
void from_planar(const std::vector<T>& planar, T* dst, std::size_t batch, std::size_t h, std::size_t w, std::size_t rows,
                 std::size_t pad) {
  const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const T* src = planar.data() + ((b * rows) * hp + i + pad) * wp + j + pad;
        T* px = dst + ((b * h + i) * w + j) * rows;
        for (std::size_t k = 0; k < rows; ++k) px[k] = src[k * hp * wp];
      }
}

// Strided dot product with eight independent partial sums so the
// contiguous case vectorizes without reassociating a single accumulator.
template <typename T>
T dot_rows(const T* a, std::size_t a_stride, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  if (a_stride == 1) {
    for (; i + 8 <= n; i += 8)
      for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  for (; i < n; ++i) acc[i % 8] += a[i * a_stride] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
T sum_row(const T* a, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l];
  for (; i < n; ++i) acc[i % 8] += a[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// Pixel-major kernels: better when spatial planes are small and channels wide.
template <typename T>
void conv_forward_pixelwise(const ConvGeometry& g, const T* xs, const std::vector<T>& wr, const T* bs, T* ys) {
  const std::size_t in_row = 2 * g.in_c, out_row = 2 * g.out_c, tap = in_row * out_row;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        T* yp = ys + ((b * g.out_h + oh) * g.out_w + ow) * out_row;
        std::copy_n(bs, out_row, yp);
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          const long long ih = static_cast<long long>(oh * g.stride + ki) - static_cast<long long>(g.pad);
          if (ih < 0 || ih >= static_cast<long long>(g.in_h)) continue;
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            const long long iw = static_cast<long long>(ow * g.stride + kj) - static_cast<long long>(g.pad);
            if (iw < 0 || iw >= static_cast<long long>(g.in_w)) continue;
            const T* xp = xs + ((b * g.in_h + static_cast<std::size_t>(ih)) * g.in_w + static_cast<std::size_t>(iw)) * in_row;
            const T* wp = wr.data() + (ki * g.kw + kj) * tap;
            for (std::size_t k = 0; k < in_row; ++k) {
              const T xv = xp[k];
              const T* row = wp + k * out_row;
              for (std::size_t j = 0; j < out_row; ++j) yp[j] += xv * row[j];
            }
          }
        }
      }
}

template <typename T>
void conv_backward_pixelwise(const ConvGeometry& g, const T* xs, const std::vector<T>& wr, const T* dys, T* dxs,
                             std::vector<double>& gw, std::vector<double>& gb) {
  const std::size_t in_row = 2 * g.in_c, out_row = 2 * g.out_c, tap = in_row * out_row;
  // Per-row partial sums in T, flushed into the double totals.
  std::vector<T> gw_img(gw.size()), gb_img(gb.size());
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      std::fill(gw_img.begin(), gw_img.end(), T(0));
      std::fill(gb_img.begin(), gb_img.end(), T(0));
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        const T* dyp = dys + ((b * g.out_h + oh) * g.out_w + ow) * out_row;
        for (std::size_t j = 0; j < out_row; ++j) gb_img[j] += dyp[j];
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          const long long ih = static_cast<long long>(oh * g.stride + ki) - static_cast<long long>(g.pad);
          if (ih < 0 || ih >= static_cast<long long>(g.in_h)) continue;
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            const long long iw = static_cast<long long>(ow * g.stride + kj) - static_cast<long long>(g.pad);
            if (iw < 0 || iw >= static_cast<long long>(g.in_w)) continue;
            const std::size_t xoff =
                ((b * g.in_h + static_cast<std::size_t>(ih)) * g.in_w + static_cast<std::size_t>(iw)) * in_row;
            const T* xp = xs + xoff;
            const T* wp = wr.data() + (ki * g.kw + kj) * tap;
            T* gwp = gw_img.data() + (ki * g.kw + kj) * tap;
            T* dxp = dxs ? dxs + xoff : nullptr;
            for (std::size_t k = 0; k < in_row; ++k) {
              const T xv = xp[k];
              const T* row = wp + k * out_row;
              T* grow = gwp + k * out_row;
              T acc = 0;
              for (std::size_t j = 0; j < out_row; ++j) {
                acc += row[j] * dyp[j];
                grow[j] += xv * dyp[j];
              }
              if (dxp) dxp[k] += acc;
            }
          }
        }
      }
      for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += gw_img[i];
      for (std::size_t j = 0; j < gb.size(); ++j) gb[j] += gb_img[j];
    }
}

// Below this output width the pixel-major kernels are faster.
inline constexpr std::size_t kPlanarMinWidth = 32;

}  // namespace detail

/// Complex convolution Y = W (*) X + b evaluated in the real block form:
/// re(Y) = re(W)*re(X) - im(W)*im(X) + re(b), im(Y) = im(W)*re(X) + re(W)*im(X) + im(b).
/// Zero padding of p.pad on every side.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
  const auto g = detail::conv_geometry(x, p);
  const std::vector<T> wr = detail::real_block_kernel(p.weight);
  const std::size_t in_row = 2 * g.in_c, out_row = 2 * g.out_c, tap = in_row * out_row;
  if (g.out_w < detail::kPlanarMinWidth) {
    Tensor<T> y({g.batch, g.out_h, g.out_w, g.out_c});
    detail::conv_forward_pixelwise(g, x.real_data(), wr, p.bias.real_data(), y.real_data());
    return y;
  }
  const std::size_t hp = g.in_h + 2 * g.pad, wp = g.in_w + 2 * g.pad, plane = g.out_h * g.out_w;
  const std::vector<T> xp = detail::to_planar(x.real_data(), g.batch, g.in_h, g.in_w, in_row, g.pad);
  std::vector<T> yp(g.batch * out_row * plane);
  const T* bs = p.bias.real_data();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t j = 0; j < out_row; ++j) {
      T* yplane = yp.data() + (b * out_row + j) * plane;
      std::fill_n(yplane, plane, bs[j]);
      for (std::size_t k = 0; k < in_row; ++k) {
        const T* xplane = xp.data() + (b * in_row + k) * hp * wp;
        for (std::size_t ki = 0; ki < g.kh; ++ki)
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            const T wv = wr[(ki * g.kw + kj) * tap + k * out_row + j];
            for (std::size_t oh = 0; oh < g.out_h; ++oh) {
              T* yrow = yplane + oh * g.out_w;
              const T* xrow = xplane + (oh * g.stride + ki) * wp + kj;
              if (g.stride == 1) {
                for (std::size_t ow = 0; ow < g.out_w; ++ow) yrow[ow] += wv * xrow[ow];
              } else {
                for (std::size_t ow = 0; ow < g.out_w; ++ow) yrow[ow] += wv * xrow[ow * g.stride];
              }
            }
          }
      }
    }
  Tensor<T> y({g.batch, g.out_h, g.out_w, g.out_c});
  detail::from_planar(yp, y.real_data(), g.batch, g.out_h, g.out_w, out_row, 0);
  return y;
}

/// Gradients of a real loss packaged as dJ/dre + j dJ/dim. In complex form
/// dX = sum conj(W) dY, dW = sum conj(X) dY, db = sum dY. With
/// input_grad = false, dx is left empty.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& dy, bool input_grad = true) {
  const auto g = detail::conv_geometry(x, p);
  if (dy.shape() != Shape{g.batch, g.out_h, g.out_w, g.out_c})
    throw ContractViolation("conv2d_backward: upstream gradient " + shape_str(dy.shape()) + " does not match forward output");
  const std::vector<T> wr = detail::real_block_kernel(p.weight);
  const std::size_t in_row = 2 * g.in_c, out_row = 2 * g.out_c, tap = in_row * out_row;
  ConvGrads<T> out{input_grad ? Tensor<T>(x.shape()) : Tensor<T>(), Tensor<T>(p.weight.shape()), Tensor<T>(p.bias.shape())};
  // Weight and bias sums run over every output pixel of the batch and are
  // accumulated in double.
  std::vector<double> gw(wr.size(), 0.0), gb(out_row, 0.0);
  if (g.out_w < detail::kPlanarMinWidth) {
    detail::conv_backward_pixelwise(g, x.real_data(), wr, dy.real_data(), input_grad ? out.dx.real_data() : nullptr, gw, gb);
  } else {
    const std::size_t hp = g.in_h + 2 * g.pad, wp = g.in_w + 2 * g.pad, plane = g.out_h * g.out_w;
    const std::vector<T> xp = detail::to_planar(x.real_data(), g.batch, g.in_h, g.in_w, in_row, g.pad);
    const std::vector<T> dyp = detail::to_planar(dy.real_data(), g.batch, g.out_h, g.out_w, out_row, 0);
    std::vector<T> dxp(input_grad ? xp.size() : 0, T(0));
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t j = 0; j < out_row; ++j) {
        const T* dyplane = dyp.data() + (b * out_row + j) * plane;
        for (std::size_t oh = 0; oh < g.out_h; ++oh)
          gb[j] += static_cast<double>(detail::sum_row(dyplane + oh * g.out_w, g.out_w));
        for (std::size_t k = 0; k < in_row; ++k) {
          const T* xplane = xp.data() + (b * in_row + k) * hp * wp;
          T* dxplane = input_grad ? dxp.data() + (b * in_row + k) * hp * wp : nullptr;
          for (std::size_t ki = 0; ki < g.kh; ++ki)
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
              const std::size_t wi = (ki * g.kw + kj) * tap + k * out_row + j;
              const T wv = wr[wi];
              double gacc = 0.0;
              for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                const T* dyrow = dyplane + oh * g.out_w;
                const std::size_t xoff = (oh * g.stride + ki) * wp + kj;
                gacc += static_cast<double>(detail::dot_rows(xplane + xoff, g.stride, dyrow, g.out_w));
                if (!dxplane) continue;
                T* dxrow = dxplane + xoff;
                if (g.stride == 1) {
                  for (std::size_t ow = 0; ow < g.out_w; ++ow) dxrow[ow] += wv * dyrow[ow];
                } else {
                  for (std::size_t ow = 0; ow < g.out_w; ++ow) dxrow[ow * g.stride] += wv * dyrow[ow];
                }
              }
              gw[wi] += gacc;
            }
        }
      }
    if (input_grad) detail::from_planar(dxp, out.dx.real_data(), g.batch, g.in_h, g.in_w, in_row, g.pad);
  }
  T* dbs = out.dbias.real_data();
  for (std::size_t j = 0; j < out_row; ++j) dbs[j] = static_cast<T>(gb[j]);
  // Fold the real block gradient back onto complex taps.
  const std::size_t taps = g.kh * g.kw;
  for (std::size_t t = 0; t < taps; ++t)
    for (std::size_t m = 0; m < g.in_c; ++m) {
      const double* row_re = gw.data() + ((t * 2 * g.in_c) + 2 * m) * out_row;
      const double* row_im = row_re + out_row;
      for (std::size_t n = 0; n < g.out_c; ++n)
        out.dweight[(t * g.in_c + m) * g.out_c + n] = {static_cast<T>(row_re[2 * n] + row_im[2 * n + 1]),
                                                       static_cast<T>(row_re[2 * n + 1] - row_im[2 * n])};
    }
  if (testing::corrupt_conv_backward())
    for (auto& v : out.dweight.data()) v *= T(1.05);
  return out;
}

}  // namespace cvfcn
