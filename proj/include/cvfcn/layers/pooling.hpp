#pragma once

#include <utility>
#include <vector>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/error.hpp"

namespace cvfcn {

/// Switch variables of a pooling layer: for every pooled element, the flat
/// index of the source element it came from.
struct LocMap {
  Shape source_shape;
  Shape pooled_shape;
  std::size_t window = 0;
  std::size_t stride = 0;
  std::vector<std::size_t> index;
};

namespace detail {

struct PoolGeometry {
  std::size_t batch, in_h, in_w, channels, out_h, out_w;
};

inline PoolGeometry pool_geometry(const Shape& s, std::size_t window, std::size_t stride) {
  if (s.size() != 4) throw ShapeError("pooling: input must be rank-4 [B,H,W,C], got " + shape_str(s));
  if (window == 0 || stride == 0) throw ShapeError("pooling: window and stride must be positive");
  if (window > s[1] || window > s[2])
    throw ShapeError("pooling: window " + std::to_string(window) + " exceeds input " + shape_str(s));
  return {s[0], s[1], s[2], s[3], (s[1] - window) / stride + 1, (s[2] - window) / stride + 1};
}

}  // namespace detail

/// Complex max-pooling: keeps the whole complex value of largest magnitude
/// per window and channel. Ties go to the first element in row-major order.
template <typename T>
std::pair<Tensor<T>, LocMap> maxpool_forward(const Tensor<T>& x, std::size_t window, std::size_t stride) {
  const auto g = detail::pool_geometry(x.shape(), window, stride);
  LocMap loc{x.shape(), {g.batch, g.out_h, g.out_w, g.channels}, window, stride, {}};
  Tensor<T> y(loc.pooled_shape);
  loc.index.resize(y.size());
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow)
        for (std::size_t c = 0; c < g.channels; ++c) {
          std::size_t best = x.offset(b, oh * stride, ow * stride, c);
          T best_mag = std::norm(x[best]);
          for (std::size_t i = 0; i < window; ++i)
            for (std::size_t j = 0; j < window; ++j) {
              const std::size_t idx = x.offset(b, oh * stride + i, ow * stride + j, c);
              const T mag = std::norm(x[idx]);
              if (mag > best_mag) {
                best_mag = mag;
                best = idx;
              }
            }
          const std::size_t o = y.offset(b, oh, ow, c);
          y[o] = x[best];
          loc.index[o] = best;
        }
  return {std::move(y), std::move(loc)};
}

/// Location map that always points at each window's top-left element. Used
/// to unpool without recorded maxima.
inline LocMap top_left_locmap(const Shape& source_shape, std::size_t window, std::size_t stride) {
  const auto g = detail::pool_geometry(source_shape, window, stride);
  LocMap loc{source_shape, {g.batch, g.out_h, g.out_w, g.channels}, window, stride, {}};
  loc.index.resize(shape_size(loc.pooled_shape));
  std::size_t o = 0;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow)
        for (std::size_t c = 0; c < g.channels; ++c)
          loc.index[o++] = ((b * g.in_h + oh * stride) * g.in_w + ow * stride) * g.channels + c;
  return loc;
}

/// Routes each pooled gradient back to its recorded source element.
template <typename T>
Tensor<T> maxpool_backward(const LocMap& loc, const Tensor<T>& dy) {
  if (dy.shape() != loc.pooled_shape) throw ContractViolation("maxpool_backward: gradient does not match pooled shape");
  Tensor<T> dx(loc.source_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[loc.index[o]] += dy[o];
  return dx;
}

/// Max-unpooling: a zero tensor of out_shape with x's values scattered to
/// the recorded locations.
template <typename T>
Tensor<T> maxunpool_forward(const Tensor<T>& x, const LocMap& loc, const Shape& out_shape) {
  if (x.shape() != loc.pooled_shape)
    throw ContractViolation("maxunpool: input " + shape_str(x.shape()) + " does not match location map " +
                            shape_str(loc.pooled_shape));
  if (out_shape != loc.source_shape)
    throw ContractViolation("maxunpool: output shape " + shape_str(out_shape) + " does not match location map source " +
                            shape_str(loc.source_shape));
  Tensor<T> y(out_shape);
  for (std::size_t o = 0; o < x.size(); ++o) y[loc.index[o]] += x[o];
  return y;
}

template <typename T>
Tensor<T> maxunpool_forward(const Tensor<T>& x, const LocMap& loc) {
  return maxunpool_forward(x, loc, loc.source_shape);
}

/// Gathers dy at the recorded locations.
template <typename T>
Tensor<T> maxunpool_backward(const LocMap& loc, const Tensor<T>& dy) {
  if (dy.shape() != loc.source_shape) throw ContractViolation("maxunpool_backward: gradient does not match source shape");
  Tensor<T> dx(loc.pooled_shape);
  for (std::size_t o = 0; o < dx.size(); ++o) dx[o] = dy[loc.index[o]];
  return dx;
}

}  // namespace cvfcn
