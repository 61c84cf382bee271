#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/error.hpp"
#include "cvfcn/init.hpp"

namespace cvfcn {

/// One keep flag per complex element; an empty mask means identity.
struct DropMask {
  std::vector<std::uint8_t> keep;
  double keep_prob = 1.0;
};

/// Inverted dropout. The same flag gates the real and imaginary part.
template <typename T>
std::pair<Tensor<T>, DropMask> dropout_forward(const Tensor<T>& x, double keep_prob, Rng& rng, bool training) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("dropout: keep_prob must lie in (0, 1]");
  DropMask mask{{}, keep_prob};
  if (!training || keep_prob == 1.0) return {x, std::move(mask)};
  mask.keep.resize(x.size());
  Tensor<T> y(x.shape());
  const T scale = static_cast<T>(1.0 / keep_prob);
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask.keep[i] = uniform_open01(rng) < keep_prob ? 1 : 0;
    if (mask.keep[i]) y[i] = x[i] * scale;
  }
  return {std::move(y), std::move(mask)};
}

template <typename T>
Tensor<T> dropout_backward(const DropMask& mask, const Tensor<T>& dy) {
  if (mask.keep.empty()) return dy;
  if (mask.keep.size() != dy.size()) throw ContractViolation("dropout_backward: mask does not match gradient");
  Tensor<T> dx(dy.shape());
  const T scale = static_cast<T>(1.0 / mask.keep_prob);
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (mask.keep[i]) dx[i] = dy[i] * scale;
  return dx;
}

}  // namespace cvfcn
