#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "cvfcn/error.hpp"

namespace cvfcn {

using Shape = std::vector<std::size_t>;

/// Accumulation type for reductions: at least double, wider when T is.
template <typename T>
using acc_t = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/**
 * Dense row-major tensor of complex values.
 *
 * Activations use the [batch, height, width, channels] layout, kernels use
 * [kh, kw, in_channels, out_channels]. Elements are stored interleaved
 * (re, im), so real_data() exposes a flat array of 2*size() scalars.
 */
template <typename T>
class Tensor {
 public:
  using value_type = std::complex<T>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), value_type{});
  }

  Tensor(Shape shape, std::vector<value_type> values) : shape_(std::move(shape)), data_(std::move(values)) {
    validate_shape(shape_);
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data has " + std::to_string(data_.size()) + " elements, shape " + shape_str(shape_) +
                       " needs " + std::to_string(shape_size(shape_)));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  /// Zeros from a signed shape; any non-positive dimension is rejected.
  static Tensor zeros(std::initializer_list<long long> dims) {
    Shape s;
    for (long long d : dims) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + std::to_string(d));
      s.push_back(static_cast<std::size_t>(d));
    }
    return Tensor(std::move(s));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<value_type> data() noexcept { return data_; }
  std::span<const value_type> data() const noexcept { return data_; }

  // std::complex<T> is array-layout compatible with T[2].
  T* real_data() noexcept { return reinterpret_cast<T*>(data_.data()); }
  const T* real_data() const noexcept { return reinterpret_cast<const T*>(data_.data()); }

  value_type& operator[](std::size_t i) { return data_[i]; }
  const value_type& operator[](std::size_t i) const { return data_[i]; }

  /// Flat offset of (b, i, j, c) in a rank-4 activation tensor.
  std::size_t offset(std::size_t b, std::size_t i, std::size_t j, std::size_t c) const {
    return ((b * shape_[1] + i) * shape_[2] + j) * shape_[3] + c;
  }
  value_type& operator()(std::size_t b, std::size_t i, std::size_t j, std::size_t c) { return data_[offset(b, i, j, c)]; }
  const value_type& operator()(std::size_t b, std::size_t i, std::size_t j, std::size_t c) const {
    return data_[offset(b, i, j, c)];
  }

  void fill(value_type v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape s) const {
    if (shape_size(s) != size()) throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    return Tensor(std::move(s), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<std::complex<U>> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = {static_cast<U>(data_[i].real()), static_cast<U>(data_[i].imag())};
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    const T* p = real_data();
    for (std::size_t i = 0; i < 2 * size(); ++i)
      if (!std::isfinite(p[i])) return false;
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  static void validate_shape(const Shape& s) {
    if (s.empty()) throw ShapeError("tensor rank must be at least 1");
    for (std::size_t d : s)
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got shape " + shape_str(s));
  }

  Shape shape_;
  std::vector<value_type> data_;
};

using CTensor = Tensor<float>;

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& x) {
  return Tensor<T>(x.shape());
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <typename T>
Tensor<T> negate(const Tensor<T>& a) {
  Tensor<T> out = a;
  for (auto& v : out.data()) v = -v;
  return out;
}

namespace detail {

// Views a rank-3 [H,W,C] or rank-4 [B,H,W,C] tensor as rank-4.
struct Spatial {
  std::size_t batch, height, width, channels;
};

inline Spatial spatial_of(const Shape& s, const char* op) {
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  throw ShapeError(std::string(op) + ": expected rank-3 or rank-4 spatial tensor, got " + shape_str(s));
}

inline Shape with_spatial(const Shape& s, std::size_t h, std::size_t w) {
  Shape out = s;
  const std::size_t off = s.size() == 4 ? 1 : 0;
  out[off] = h;
  out[off + 1] = w;
  return out;
}

inline std::size_t reflect_index(long long i, long long n) {
  if (n == 1) return 0;
  const long long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

}  // namespace detail

/// Mirror padding that does not repeat the edge pixel: [a,b,c] padded by 1 is [b,a,b,c,b].
template <typename T>
Tensor<T> reflect_pad(const Tensor<T>& x, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right) {
  const auto s = detail::spatial_of(x.shape(), "reflect_pad");
  if (std::max(top, bottom) >= s.height || std::max(left, right) >= s.width)
    throw ShapeError("reflect_pad: padding must be smaller than the padded dimension, shape " + shape_str(x.shape()));
  const std::size_t oh = s.height + top + bottom, ow = s.width + left + right;
  Tensor<T> out(detail::with_spatial(x.shape(), oh, ow));
  const auto* src = x.data().data();
  auto* dst = out.data().data();
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t i = 0; i < oh; ++i) {
      const std::size_t si = detail::reflect_index(static_cast<long long>(i) - static_cast<long long>(top), s.height);
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t sj = detail::reflect_index(static_cast<long long>(j) - static_cast<long long>(left), s.width);
        std::copy_n(src + ((b * s.height + si) * s.width + sj) * s.channels, s.channels,
                    dst + ((b * oh + i) * ow + j) * s.channels);
      }
    }
  return out;
}

template <typename T>
Tensor<T> reflect_pad(const Tensor<T>& x, std::size_t pad_h, std::size_t pad_w) {
  return reflect_pad(x, pad_h, pad_h, pad_w, pad_w);
}

/// Spatial crop of a rank-3/4 tensor to [top, top+height) x [left, left+width).
template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  const auto s = detail::spatial_of(x.shape(), "crop");
  if (top + height > s.height || left + width > s.width || height == 0 || width == 0)
    throw ShapeError("crop: window outside tensor " + shape_str(x.shape()));
  Tensor<T> out(detail::with_spatial(x.shape(), height, width));
  const auto* src = x.data().data();
  auto* dst = out.data().data();
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t i = 0; i < height; ++i)
      std::copy_n(src + ((b * s.height + top + i) * s.width + left) * s.channels, width * s.channels,
                  dst + ((b * height + i) * width) * s.channels);
  return out;
}

/// Reverses the width axis.
template <typename T>
Tensor<T> hflip(const Tensor<T>& x) {
  const auto s = detail::spatial_of(x.shape(), "hflip");
  Tensor<T> out(x.shape());
  const auto* src = x.data().data();
  auto* dst = out.data().data();
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t i = 0; i < s.height; ++i)
      for (std::size_t j = 0; j < s.width; ++j)
        std::copy_n(src + ((b * s.height + i) * s.width + j) * s.channels, s.channels,
                    dst + ((b * s.height + i) * s.width + (s.width - 1 - j)) * s.channels);
  return out;
}

/// Reverses the height axis.
template <typename T>
Tensor<T> vflip(const Tensor<T>& x) {
  const auto s = detail::spatial_of(x.shape(), "vflip");
  Tensor<T> out(x.shape());
  const auto* src = x.data().data();
  auto* dst = out.data().data();
  const std::size_t row = s.width * s.channels;
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t i = 0; i < s.height; ++i)
      std::copy_n(src + (b * s.height + i) * row, row, dst + (b * s.height + (s.height - 1 - i)) * row);
  return out;
}

/// Stacks equally shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>* const> items) {
  if (items.empty()) throw ShapeError("stack: no tensors");
  Shape s{items.size()};
  for (std::size_t d : items[0]->shape()) s.push_back(d);
  Tensor<T> out(s);
  const std::size_t n = items[0]->size();
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (items[k]->shape() != items[0]->shape()) throw ShapeError("stack: shape mismatch");
    std::copy(items[k]->data().begin(), items[k]->data().end(), out.data().begin() + k * n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CVT binary format: "CVT1", u8 rank, rank x u64 LE dims, then (re, im) f32 LE
// pairs in row-major order.

static_assert(std::endian::native == std::endian::little, "CVT I/O assumes a little-endian host");

namespace detail {

inline void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError(std::string("truncated stream while reading ") + what);
}

}  // namespace detail

template <typename T>
void write_cvt(std::ostream& out, const Tensor<T>& t) {
  out.write("CVT1", 4);
  const auto rank = static_cast<std::uint8_t>(t.rank());
  out.write(reinterpret_cast<const char*>(&rank), 1);
  for (std::size_t d : t.shape()) {
    const std::uint64_t v = d;
    out.write(reinterpret_cast<const char*>(&v), 8);
  }
  if constexpr (std::is_same_v<T, float>) {
    out.write(reinterpret_cast<const char*>(t.real_data()), static_cast<std::streamsize>(t.size() * 2 * sizeof(float)));
  } else {
    std::vector<float> buf(2 * t.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.real_data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw FormatError("failed writing CVT payload");
}

inline CTensor read_cvt(std::istream& in) {
  char magic[4];
  detail::read_exact(in, magic, 4, "CVT magic");
  if (std::memcmp(magic, "CVT", 3) != 0) throw FormatError("not a CVT stream (bad magic)");
  if (magic[3] != '1') throw FormatError(std::string("unsupported CVT version '") + magic[3] + "'");
  std::uint8_t rank = 0;
  detail::read_exact(in, &rank, 1, "CVT rank");
  if (rank == 0) throw FormatError("CVT rank must be at least 1");
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    std::uint64_t v = 0;
    detail::read_exact(in, &v, 8, "CVT dims");
    if (v == 0 || v > (std::uint64_t{1} << 40)) throw FormatError("CVT dimension out of range");
    d = static_cast<std::size_t>(v);
    count *= d;
    if (count > (std::size_t{1} << 34)) throw FormatError("CVT tensor too large");
  }
  CTensor t(shape);
  detail::read_exact(in, t.real_data(), count * 2 * sizeof(float), "CVT payload");
  return t;
}

template <typename T>
void save_cvt(const std::string& path, const Tensor<T>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_cvt(out, t);
}

inline CTensor load_cvt(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_cvt(in);
}

}  // namespace cvfcn
