#pragma once

#include <cmath>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/error.hpp"

namespace cvfcn {

/// ReLU on the real and imaginary parts independently.
template <typename T>
Tensor<T> crelu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T* xs = x.real_data();
  T* ys = y.real_data();
  for (std::size_t i = 0; i < 2 * x.size(); ++i) ys[i] = xs[i] > T(0) ? xs[i] : T(0);
  return y;
}

/// Passes each component of dy where the matching input component was > 0.
template <typename T>
Tensor<T> crelu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  if (x.shape() != dy.shape()) throw ContractViolation("crelu_backward: gradient shape does not match input");
  Tensor<T> dx(x.shape());
  const T* xs = x.real_data();
  const T* gs = dy.real_data();
  T* ds = dx.real_data();
  for (std::size_t i = 0; i < 2 * x.size(); ++i) ds[i] = xs[i] > T(0) ? gs[i] : T(0);
  return dx;
}

template <typename T>
T logistic(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

/// Output layer: logistic applied to re and im separately, so every
/// component lies in (0, 1) and each channel is an independent class score.
template <typename T>
Tensor<T> output_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T* xs = x.real_data();
  T* ys = y.real_data();
  for (std::size_t i = 0; i < 2 * x.size(); ++i) ys[i] = logistic(xs[i]);
  return y;
}

/// Backward of output_forward given its output o: dx = dy * o * (1 - o).
template <typename T>
Tensor<T> output_backward(const Tensor<T>& out, const Tensor<T>& dy) {
  if (out.shape() != dy.shape()) throw ContractViolation("output_backward: gradient shape does not match output");
  Tensor<T> dx(out.shape());
  const T* os = out.real_data();
  const T* gs = dy.real_data();
  T* ds = dx.real_data();
  for (std::size_t i = 0; i < 2 * out.size(); ++i) ds[i] = gs[i] * os[i] * (T(1) - os[i]);
  return dx;
}

}  // namespace cvfcn
