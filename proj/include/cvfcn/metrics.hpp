#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "cvfcn/error.hpp"
#include "cvfcn/label_grid.hpp"

namespace cvfcn {

/// K x K counts; rows are truth, columns prediction (0-based class index).
struct Confusion {
  std::size_t num_classes = 0;
  std::vector<std::int64_t> counts;

  Confusion() = default;
  explicit Confusion(std::size_t k) : num_classes(k), counts(k * k, 0) {}
  Confusion(std::size_t k, std::vector<std::int64_t> c) : num_classes(k), counts(std::move(c)) {
    if (counts.size() != k * k) throw ShapeError("confusion: expected K*K counts");
    for (auto v : counts)
      if (v < 0) throw DomainError("confusion counts must be nonnegative");
  }

  std::int64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * num_classes + pred]; }
  std::int64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * num_classes + pred]; }

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto v : counts) t += v;
    return t;
  }
  std::int64_t row(std::size_t k) const {
    std::int64_t t = 0;
    for (std::size_t j = 0; j < num_classes; ++j) t += at(k, j);
    return t;
  }
  std::int64_t col(std::size_t k) const {
    std::int64_t t = 0;
    for (std::size_t i = 0; i < num_classes; ++i) t += at(i, k);
    return t;
  }
  std::int64_t trace() const {
    std::int64_t t = 0;
    for (std::size_t k = 0; k < num_classes; ++k) t += at(k, k);
    return t;
  }

  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Counts pixels where `mask` is set; an empty mask means every labeled truth
/// pixel. Masked pixels must carry truth and prediction ids in 1..K.
inline Confusion confusion(const LabelGrid& pred, const LabelGrid& truth, std::span<const std::uint8_t> mask, std::size_t num_classes) {
  if (pred.height != truth.height || pred.width != truth.width) throw ShapeError("confusion: prediction and truth differ in size");
  if (!mask.empty() && mask.size() != truth.size()) throw ShapeError("confusion: mask size mismatch");
  const int K = static_cast<int>(num_classes);
  Confusion c(num_classes);
  for (std::size_t p = 0; p < truth.size(); ++p) {
    const bool use = mask.empty() ? truth.labels[p] != 0 : mask[p] != 0;
    if (!use) continue;
    const int t = truth.labels[p], q = pred.labels[p];
    if (t < 1 || t > K) throw LabelError("confusion: truth id " + std::to_string(t) + " outside 1.." + std::to_string(K));
    if (q < 1 || q > K) throw LabelError("confusion: predicted id " + std::to_string(q) + " outside 1.." + std::to_string(K));
    ++c.at(static_cast<std::size_t>(t - 1), static_cast<std::size_t>(q - 1));
  }
  return c;
}

inline Confusion confusion(const LabelGrid& pred, const LabelGrid& truth, std::size_t num_classes) {
  return confusion(pred, truth, {}, num_classes);
}

namespace detail {
inline void require_nonempty(const Confusion& c) {
  if (c.total() == 0) throw EmptyError("empty evaluation: no pixels counted");
}
}  // namespace detail

inline double overall_accuracy(const Confusion& c) {
  detail::require_nonempty(c);
  return static_cast<double>(c.trace()) / static_cast<double>(c.total());
}

/// Per-class accuracy diag/row; negative when the class has no truth pixels.
inline std::vector<double> per_class_accuracy(const Confusion& c) {
  std::vector<double> out(c.num_classes, -1.0);
  for (std::size_t k = 0; k < c.num_classes; ++k)
    if (c.row(k) > 0) out[k] = static_cast<double>(c.at(k, k)) / static_cast<double>(c.row(k));
  return out;
}

/// Mean per-class accuracy over classes present in the truth.
inline double average_accuracy(const Confusion& c) {
  detail::require_nonempty(c);
  double sum = 0.0;
  std::size_t n = 0;
  for (double a : per_class_accuracy(c))
    if (a >= 0.0) sum += a, ++n;
  return sum / static_cast<double>(n);
}

inline double kappa(const Confusion& c) {
  detail::require_nonempty(c);
  const double total = static_cast<double>(c.total());
  const double po = static_cast<double>(c.trace()) / total;
  double pe = 0.0;
  for (std::size_t k = 0; k < c.num_classes; ++k)
    pe += static_cast<double>(c.row(k)) * static_cast<double>(c.col(k));
  pe /= total * total;
  if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// {"oa","aa","kappa","per_class","confusion"}; absent classes report null.
inline std::string metrics_json(const Confusion& c) {
  std::string s = "{\"oa\":" + fixed6(overall_accuracy(c)) + ",\"aa\":" + fixed6(average_accuracy(c)) +
                  ",\"kappa\":" + fixed6(kappa(c)) + ",\"per_class\":[";
  const auto pc = per_class_accuracy(c);
  for (std::size_t k = 0; k < pc.size(); ++k) s += (k ? "," : "") + (pc[k] < 0.0 ? std::string("null") : fixed6(pc[k]));
  s += "],\"confusion\":[";
  for (std::size_t i = 0; i < c.num_classes; ++i) {
    s += i ? ",[" : "[";
    for (std::size_t j = 0; j < c.num_classes; ++j) s += (j ? "," : "") + std::to_string(c.at(i, j));
    s += "]";
  }
  return s + "]}";
}

}  // namespace cvfcn
