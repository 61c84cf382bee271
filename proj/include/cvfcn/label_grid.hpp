#pragma once

#include <cstdint>
#include <vector>

#include "cvfcn/error.hpp"

namespace cvfcn {

/// H x W grid of class ids. 0 marks an unlabeled pixel; classes are 1-based.
struct LabelGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> labels;

  LabelGrid() = default;
  LabelGrid(std::size_t h, std::size_t w, int fill = 0) : height(h), width(w), labels(h * w, fill) {}

  int& at(std::size_t i, std::size_t j) { return labels[i * width + j]; }
  int at(std::size_t i, std::size_t j) const { return labels[i * width + j]; }
  std::size_t size() const { return labels.size(); }

  int max_label() const {
    int m = 0;
    for (int v : labels) m = v > m ? v : m;
    return m;
  }

  friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

inline LabelGrid crop(const LabelGrid& g, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  if (top + h > g.height || left + w > g.width) throw ShapeError("label crop outside grid");
  LabelGrid out(h, w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(i, j) = g.at(top + i, left + j);
  return out;
}

inline LabelGrid hflip(const LabelGrid& g) {
  LabelGrid out(g.height, g.width);
  for (std::size_t i = 0; i < g.height; ++i)
    for (std::size_t j = 0; j < g.width; ++j) out.at(i, g.width - 1 - j) = g.at(i, j);
  return out;
}

inline LabelGrid vflip(const LabelGrid& g) {
  LabelGrid out(g.height, g.width);
  for (std::size_t i = 0; i < g.height; ++i)
    for (std::size_t j = 0; j < g.width; ++j) out.at(g.height - 1 - i, j) = g.at(i, j);
  return out;
}

}  // namespace cvfcn
