#pragma once

#include <array>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/data.hpp"
#include "cvfcn/error.hpp"
#include "cvfcn/label_grid.hpp"

namespace cvfcn {

/// 8-bit binary PGM labels. maxval carries the class count K (at least 1).
struct LabelImage {
  LabelGrid grid;
  int maxval = 1;
};

namespace detail {

inline long long read_pnm_int(std::istream& in, const char* what) {
  int c = in.peek();
  while (c != EOF) {
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      break;
    }
    c = in.peek();
  }
  long long v = 0;
  bool any = false;
  while (in.peek() != EOF && std::isdigit(in.peek())) {
    v = v * 10 + (in.get() - '0');
    any = true;
    if (v > 1'000'000'000) throw FormatError(std::string("PNM ") + what + " too large");
  }
  if (!any) throw FormatError(std::string("PNM header: expected ") + what);
  return v;
}

}  // namespace detail

inline void write_pgm(std::ostream& out, const LabelGrid& g, int maxval) {
  if (maxval < 1 || maxval > 255) throw LabelError("PGM maxval must lie in 1..255, got " + std::to_string(maxval));
  for (int v : g.labels)
    if (v < 0 || v > maxval) throw LabelError("label " + std::to_string(v) + " outside 0.." + std::to_string(maxval));
  out << "P5\n" << g.width << " " << g.height << "\n" << maxval << "\n";
  std::string bytes(g.labels.size(), '\0');
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(static_cast<unsigned char>(g.labels[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("PGM write failed");
}

inline LabelImage read_pgm(std::istream& in) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw FormatError("not a binary PGM (P5) file");
  const auto w = detail::read_pnm_int(in, "width");
  const auto h = detail::read_pnm_int(in, "height");
  const auto maxval = detail::read_pnm_int(in, "maxval");
  if (w <= 0 || h <= 0) throw FormatError("PGM dimensions must be positive");
  if (maxval < 1 || maxval > 255) throw FormatError("PGM maxval must lie in 1..255 (8-bit labels), got " + std::to_string(maxval));
  if (!std::isspace(in.get())) throw FormatError("PGM header not terminated by whitespace");
  LabelImage img{LabelGrid(static_cast<std::size_t>(h), static_cast<std::size_t>(w)), static_cast<int>(maxval)};
  std::string bytes(img.grid.size(), '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw FormatError("PGM pixel data truncated");
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const int v = static_cast<unsigned char>(bytes[i]);
    if (v > maxval) throw FormatError("PGM pixel " + std::to_string(v) + " exceeds maxval " + std::to_string(maxval));
    img.grid.labels[i] = v;
  }
  return img;
}

inline void save_pgm(const std::string& path, const LabelGrid& g, int maxval) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  write_pgm(out, g, maxval);
}

inline LabelImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return read_pgm(in);
}

using RGB = std::array<unsigned char, 3>;

/// Fixed palette: index 0 (unlabeled) is black, classes 1..16 use a fixed
/// table, higher ids cycle through a deterministic hash.
inline RGB palette_color(int cls) {
  static constexpr RGB table[] = {
      {0, 0, 0},       {230, 25, 75},  {60, 180, 75},  {0, 130, 200},  {255, 225, 25}, {245, 130, 48},
      {145, 30, 180},  {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {250, 190, 212}, {0, 128, 128},
      {220, 190, 255}, {170, 110, 40}, {255, 250, 200}, {128, 0, 0},   {170, 255, 195}};
  if (cls >= 0 && cls < static_cast<int>(std::size(table))) return table[cls];
  const auto h = static_cast<std::uint32_t>(cls) * 2654435761u;
  return {static_cast<unsigned char>(h >> 24), static_cast<unsigned char>(h >> 16), static_cast<unsigned char>(h >> 8)};
}

inline void write_ppm(std::ostream& out, const LabelGrid& g) {
  out << "P6\n" << g.width << " " << g.height << "\n255\n";
  std::string bytes(3 * g.labels.size(), '\0');
  for (std::size_t i = 0; i < g.labels.size(); ++i) {
    const auto c = palette_color(g.labels[i]);
    for (std::size_t k = 0; k < 3; ++k) bytes[3 * i + k] = static_cast<char>(c[k]);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("PPM write failed");
}

inline void save_ppm(const std::string& path, const LabelGrid& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  write_ppm(out, g);
}

/// Cube as CVT [H,W,6], labels as PGM whose maxval records K.
inline void save_dataset(const Dataset& d, const std::string& cube_path, const std::string& labels_path) {
  validate_dataset(d);
  if (d.num_classes > 255) throw LabelError("class count exceeds the 8-bit label range");
  save_cvt(cube_path, d.cube);
  save_pgm(labels_path, d.labels, static_cast<int>(std::max<std::size_t>(d.num_classes, 1)));
}

inline Dataset load_dataset(const std::string& cube_path, const std::string& labels_path) {
  Dataset d;
  d.cube = load_cvt(cube_path);
  if (d.cube.rank() != 3 || d.cube.dim(2) != kInputChannels)
    throw ShapeError("cube '" + cube_path + "' must be [H,W,6], got " + shape_str(d.cube.shape()));
  auto img = load_pgm(labels_path);
  d.labels = std::move(img.grid);
  d.num_classes = static_cast<std::size_t>(img.maxval);
  validate_dataset(d);
  return d;
}

}  // namespace cvfcn
