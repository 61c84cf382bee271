#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/error.hpp"
#include "cvfcn/label_grid.hpp"

namespace cvfcn {

/// One-hot complex targets. Labeled pixels carry 1+1j on the true class
/// channel and 0 elsewhere; unlabeled pixels are all zero and masked out.
template <typename T>
struct TargetCube {
  Tensor<T> target;                 // [B, H, W, K]
  std::vector<std::uint8_t> mask;   // [B * H * W], 1 = labeled

  std::size_t labeled() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  }
};

template <typename T = float>
TargetCube<T> one_hot_encode(std::span<const LabelGrid> labels, std::size_t num_classes) {
  if (labels.empty()) throw ShapeError("one_hot_encode: no label grids");
  const std::size_t H = labels[0].height, W = labels[0].width;
  TargetCube<T> out{Tensor<T>({labels.size(), H, W, num_classes}), std::vector<std::uint8_t>(labels.size() * H * W, 0)};
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b].height != H || labels[b].width != W) throw ShapeError("one_hot_encode: label grids differ in size");
    for (std::size_t p = 0; p < H * W; ++p) {
      const int l = labels[b].labels[p];
      if (l < 0 || static_cast<std::size_t>(l) > num_classes)
        throw LabelError("one_hot_encode: label " + std::to_string(l) + " outside 0.." + std::to_string(num_classes));
      if (l == 0) continue;
      out.mask[b * H * W + p] = 1;
      out.target[(b * H * W + p) * num_classes + static_cast<std::size_t>(l - 1)] = {T(1), T(1)};
    }
  }
  return out;
}

template <typename T = float>
TargetCube<T> one_hot_encode(const LabelGrid& labels, std::size_t num_classes) {
  return one_hot_encode<T>(std::span<const LabelGrid>(&labels, 1), num_classes);
}

template <typename T>
struct LossResult {
  acc_t<T> value = 0;
  Tensor<T> grad;  // dJ/dre(O) + j dJ/dim(O)
};

enum class LossKind { ACE, CMSE, CMAE };

inline LossKind parse_loss(const std::string& s) {
  if (s == "ace") return LossKind::ACE;
  if (s == "cmse") return LossKind::CMSE;
  if (s == "cmae") return LossKind::CMAE;
  throw ConfigError("unknown loss '" + s + "' (expected ace|cmse|cmae)");
}

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::ACE: return "ace";
    case LossKind::CMSE: return "cmse";
    case LossKind::CMAE: return "cmae";
  }
  return "?";
}

inline constexpr double kAceClamp = 1e-7;

namespace detail {

template <typename T>
std::size_t check_loss_inputs(const Tensor<T>& out, const TargetCube<T>& t, const char* name) {
  if (out.shape() != t.target.shape())
    throw ShapeError(std::string(name) + ": output " + shape_str(out.shape()) + " vs target " + shape_str(t.target.shape()));
  if (t.mask.size() * out.shape().back() != out.size()) throw ShapeError(std::string(name) + ": mask size mismatch");
  const std::size_t labeled = t.labeled();
  if (labeled == 0) throw EmptyError(std::string(name) + ": no labeled pixels");
  return labeled;
}

// Applies per-component (value, gradient) over labeled entries; N = labeled pixels * K.
template <typename T, typename F>
LossResult<T> masked_componentwise(const Tensor<T>& out, const TargetCube<T>& t, const char* name, F&& f) {
  const std::size_t K = out.shape().back();
  using S = acc_t<T>;
  const S n = static_cast<S>(check_loss_inputs(out, t, name) * K);
  LossResult<T> r{0, Tensor<T>(out.shape())};
  const T* os = out.real_data();
  const T* rs = t.target.real_data();
  T* gs = r.grad.real_data();
  S sum = 0;
  for (std::size_t p = 0; p < t.mask.size(); ++p) {
    if (!t.mask[p]) continue;
    for (std::size_t c = 0; c < 2 * K; ++c) {
      const std::size_t i = 2 * p * K + c;
      S g = 0;
      sum += f(static_cast<S>(os[i]), static_cast<S>(rs[i]), n, g);
      gs[i] = static_cast<T>(g);
    }
  }
  r.value = sum;
  return r;
}

}  // namespace detail

/// Average cross-entropy over real and imaginary components:
/// J = -1/(2N) sum [R ln O + (1-R) ln(1-O)] over both components of every
/// labeled entry, with O clamped to [1e-7, 1 - 1e-7].
template <typename T>
LossResult<T> ace_loss(const Tensor<T>& out, const TargetCube<T>& t) {
  using S = acc_t<T>;
  return detail::masked_componentwise(out, t, "ace_loss", [](S o, S r, S n, S& g) {
    const S lo = kAceClamp, hi = 1 - lo;
    const S oc = std::clamp(o, lo, hi);
    g = (o > lo && o < hi) ? -(r - oc) / (oc * (1 - oc)) / (2 * n) : 0;
    return -(r * std::log(oc) + (1 - r) * std::log(1 - oc)) / (2 * n);
  });
}

/// J = 1/N sum (R - O)^2 over both components.
template <typename T>
LossResult<T> cmse_loss(const Tensor<T>& out, const TargetCube<T>& t) {
  using S = acc_t<T>;
  return detail::masked_componentwise(out, t, "cmse_loss", [](S o, S r, S n, S& g) {
    g = -2 * (r - o) / n;
    return (r - o) * (r - o) / n;
  });
}

/// J = 1/N sum |R - O| over both components; subgradient 0 at equality.
template <typename T>
LossResult<T> cmae_loss(const Tensor<T>& out, const TargetCube<T>& t) {
  using S = acc_t<T>;
  return detail::masked_componentwise(out, t, "cmae_loss", [](S o, S r, S n, S& g) {
    g = o > r ? 1 / n : (o < r ? -1 / n : S(0));
    return std::abs(r - o) / n;
  });
}

template <typename T>
LossResult<T> compute_loss(LossKind kind, const Tensor<T>& out, const TargetCube<T>& t) {
  switch (kind) {
    case LossKind::ACE: return ace_loss(out, t);
    case LossKind::CMSE: return cmse_loss(out, t);
    case LossKind::CMAE: return cmae_loss(out, t);
  }
  throw ConfigError("unknown loss");
}

}  // namespace cvfcn
