#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/error.hpp"
#include "cvfcn/init.hpp"
#include "cvfcn/label_grid.hpp"

namespace cvfcn {

using cdouble = std::complex<double>;
using Vec3 = std::array<cdouble, 3>;
/// Row-major 3x3 complex matrix.
using Mat3 = std::array<cdouble, 9>;

inline constexpr std::size_t kInputChannels = 6;
inline constexpr std::size_t kRealChannels = 9;

/// T = (1/L) sum u u^H over the L samples.
inline Mat3 coherency_from_scatter(std::span<const Vec3> samples) {
  if (samples.empty()) throw DomainError("coherency_from_scatter: empty sample list");
  Mat3 t{};
  for (const auto& u : samples)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) t[r * 3 + c] += u[r] * std::conj(u[c]);
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (auto& v : t) v *= inv;
  // Diagonal of u u^H is |u|^2 exactly; drop rounding residue in the imaginary part.
  for (std::size_t d = 0; d < 3; ++d) t[d * 4] = {t[d * 4].real(), 0.0};
  return t;
}

/// (T11, T22, T33, T12, T13, T23); diagonal entries carry zero imaginary part.
inline std::array<std::complex<float>, kInputChannels> input_vector(const Mat3& t) {
  auto f = [](cdouble v) { return std::complex<float>(static_cast<float>(v.real()), static_cast<float>(v.imag())); };
  return {std::complex<float>(static_cast<float>(t[0].real()), 0.0f),
          std::complex<float>(static_cast<float>(t[4].real()), 0.0f),
          std::complex<float>(static_cast<float>(t[8].real()), 0.0f),
          f(t[1]), f(t[2]), f(t[5])};
}

/// (T11, T22, T33, re T12, re T13, re T23, im T12, im T13, im T23).
inline std::array<float, kRealChannels> real_vector(const Mat3& t) {
  auto r = [](cdouble v) { return static_cast<float>(v.real()); };
  auto i = [](cdouble v) { return static_cast<float>(v.imag()); };
  return {r(t[0]), r(t[4]), r(t[8]), r(t[1]), r(t[2]), r(t[5]), i(t[1]), i(t[2]), i(t[5])};
}

/// Lower-triangular L with L L^H = C. Accepts positive semi-definite input
/// (zero pivots give zero columns); rejects non-Hermitian or indefinite C.
inline Mat3 hermitian_cholesky(const Mat3& c) {
  double scale = 0.0;
  for (const auto& v : c) scale = std::max(scale, std::abs(v));
  if (!(scale > 0.0) || !std::isfinite(scale)) throw CovarianceError("covariance is zero or non-finite");
  const double tol = 1e-9 * scale;
  for (std::size_t r = 0; r < 3; ++r) {
    if (std::abs(c[r * 4].imag()) > tol) throw CovarianceError("covariance diagonal is not real");
    for (std::size_t k = r + 1; k < 3; ++k)
      if (std::abs(c[r * 3 + k] - std::conj(c[k * 3 + r])) > tol) throw CovarianceError("covariance is not Hermitian");
  }
  Mat3 l{};
  for (std::size_t j = 0; j < 3; ++j) {
    double d = c[j * 4].real();
    for (std::size_t k = 0; k < j; ++k) d -= std::norm(l[j * 3 + k]);
    if (d < -tol) throw CovarianceError("covariance is not positive semi-definite");
    const double ljj = d > tol ? std::sqrt(d) : 0.0;
    l[j * 4] = ljj;
    for (std::size_t i = j + 1; i < 3; ++i) {
      cdouble s = c[i * 3 + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * 3 + k] * std::conj(l[j * 3 + k]);
      if (ljj == 0.0) {
        if (std::abs(s) > std::sqrt(tol) * std::sqrt(scale)) throw CovarianceError("covariance is not positive semi-definite");
        l[i * 3 + j] = 0.0;
      } else {
        l[i * 3 + j] = s / ljj;
      }
    }
  }
  return l;
}

/// Standard circular complex normal: re, im ~ N(0, 1/2) (Box-Muller).
inline cdouble standard_complex_normal(Rng& rng) {
  const double r = std::sqrt(-std::log(uniform_open01(rng)));
  const double th = 2.0 * std::numbers::pi * uniform_open01(rng);
  return {r * std::cos(th), r * std::sin(th)};
}

/// u ~ CN(0, L L^H).
inline Vec3 sample_scatter(const Mat3& chol, Rng& rng) {
  Vec3 z{standard_complex_normal(rng), standard_complex_normal(rng), standard_complex_normal(rng)};
  Vec3 u{};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k <= r; ++k) u[r] += chol[r * 3 + k] * z[k];
  return u;
}

struct Dataset {
  CTensor cube;       // [H, W, 6]
  LabelGrid labels;   // [H, W], 0 = unlabeled
  std::size_t num_classes = 0;

  std::size_t height() const { return cube.dim(0); }
  std::size_t width() const { return cube.dim(1); }
};

inline void validate_dataset(const Dataset& d) {
  if (d.cube.rank() != 3 || d.cube.dim(2) != kInputChannels)
    throw ShapeError("dataset cube must be [H,W,6], got " + shape_str(d.cube.shape()));
  if (d.labels.height != d.cube.dim(0) || d.labels.width != d.cube.dim(1))
    throw ShapeError("label grid " + std::to_string(d.labels.height) + "x" + std::to_string(d.labels.width) +
                     " does not match cube " + shape_str(d.cube.shape()));
  if (d.labels.max_label() > static_cast<int>(d.num_classes))
    throw LabelError("label " + std::to_string(d.labels.max_label()) + " exceeds class count " + std::to_string(d.num_classes));
}

struct Region {
  int cls = 0;
  std::size_t x = 0, y = 0, w = 0, h = 0;  // x = column, y = row
};

/// Synthetic scene: per-class covariance, multi-look count, rectangle layout.
/// Pixels outside every rectangle stay unlabeled and draw from the mean
/// covariance; later rectangles overwrite earlier ones.
struct SceneSpec {
  std::size_t width = 0, height = 0;
  std::vector<Mat3> classes;
  std::size_t looks = 9;
  std::vector<Region> layout;
  std::uint64_t seed = 0;

  static SceneSpec from_json(const nlohmann::json& j);
  static SceneSpec load(const std::string& path);
  void validate() const;
};

namespace detail {

inline cdouble json_complex(const nlohmann::json& v) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) return {v[0].get<double>(), v[1].get<double>()};
  throw ConfigError("covariance entry must be a number or [re, im]");
}

inline Mat3 json_cov(const nlohmann::json& v) {
  Mat3 m{};
  if (!v.is_array()) throw ConfigError("cov must be an array");
  if (v.size() == 3 && v[0].is_array() && v[0].size() == 3 && v[0][0].is_array()) {
    for (std::size_t r = 0; r < 3; ++r) {
      if (!v[r].is_array() || v[r].size() != 3) throw ConfigError("cov rows must hold 3 entries");
      for (std::size_t c = 0; c < 3; ++c) m[r * 3 + c] = json_complex(v[r][c]);
    }
  } else if (v.size() == 9) {
    for (std::size_t k = 0; k < 9; ++k) m[k] = json_complex(v[k]);
  } else {
    throw ConfigError("cov must be 3x3 ([[[re,im]x3]x3]) or 9 row-major [re,im] entries");
  }
  return m;
}

}  // namespace detail

inline SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
  try {
    SceneSpec s;
    if (!j.is_object()) throw ConfigError("scene spec must be a JSON object");
    if (!j.contains("classes") || !j["classes"].is_array() || j["classes"].empty())
      throw ConfigError("scene spec needs a non-empty 'classes' array");
    for (const auto& c : j["classes"]) {
      if (!c.contains("cov")) throw ConfigError("class entry missing 'cov'");
      s.classes.push_back(detail::json_cov(c["cov"]));
    }
    if (j.contains("looks")) {
      const auto l = j["looks"].get<long long>();
      if (l < 1) throw ConfigError("looks must be >= 1");
      s.looks = static_cast<std::size_t>(l);
    }
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    std::size_t max_x = 0, max_y = 0;
    if (j.contains("layout")) {
      for (const auto& r : j["layout"]) {
        Region g;
        const auto cls = r.at("class").get<long long>();
        const auto x = r.at("x").get<long long>(), y = r.at("y").get<long long>();
        const auto w = r.at("w").get<long long>(), h = r.at("h").get<long long>();
        if (x < 0 || y < 0 || w <= 0 || h <= 0) throw ConfigError("layout rectangle needs x,y >= 0 and w,h > 0");
        g.cls = static_cast<int>(cls);
        g.x = static_cast<std::size_t>(x), g.y = static_cast<std::size_t>(y);
        g.w = static_cast<std::size_t>(w), g.h = static_cast<std::size_t>(h);
        max_x = std::max(max_x, g.x + g.w);
        max_y = std::max(max_y, g.y + g.h);
        s.layout.push_back(g);
      }
    }
    s.width = j.contains("width") ? j["width"].get<std::size_t>() : max_x;
    s.height = j.contains("height") ? j["height"].get<std::size_t>() : max_y;
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scene spec: ") + e.what());
  }
}

inline SceneSpec SceneSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene spec '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scene spec '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

inline void SceneSpec::validate() const {
  if (classes.empty()) throw ConfigError("scene spec has no classes");
  if (classes.size() > 255) throw ConfigError("at most 255 classes are supported");
  if (width == 0 || height == 0) throw ConfigError("scene width and height must be positive");
  if (looks < 1) throw ConfigError("looks must be >= 1");
  for (const auto& r : layout) {
    if (r.cls < 1 || static_cast<std::size_t>(r.cls) > classes.size())
      throw ConfigError("layout class " + std::to_string(r.cls) + " outside 1.." + std::to_string(classes.size()));
    if (r.x + r.w > width || r.y + r.h > height) throw ConfigError("layout rectangle exceeds scene bounds");
  }
}

inline Dataset synth_scene(const SceneSpec& spec) {
  spec.validate();
  std::vector<Mat3> chol;
  for (std::size_t k = 0; k < spec.classes.size(); ++k) {
    try {
      chol.push_back(hermitian_cholesky(spec.classes[k]));
    } catch (const CovarianceError& e) {
      throw CovarianceError("class " + std::to_string(k + 1) + ": " + e.what());
    }
  }
  Mat3 mean{};
  for (const auto& c : spec.classes)
    for (std::size_t i = 0; i < 9; ++i) mean[i] += c[i] / static_cast<double>(spec.classes.size());
  const Mat3 background = hermitian_cholesky(mean);

  Dataset d{CTensor({spec.height, spec.width, kInputChannels}), LabelGrid(spec.height, spec.width), spec.classes.size()};
  for (const auto& r : spec.layout)
    for (std::size_t i = r.y; i < r.y + r.h; ++i)
      for (std::size_t j = r.x; j < r.x + r.w; ++j) d.labels.at(i, j) = r.cls;

  Rng rng(spec.seed);
  std::vector<Vec3> u(spec.looks);
  for (std::size_t p = 0; p < spec.height * spec.width; ++p) {
    const int cls = d.labels.labels[p];
    const Mat3& l = cls > 0 ? chol[static_cast<std::size_t>(cls - 1)] : background;
    for (auto& s : u) s = sample_scatter(l, rng);
    const auto v = input_vector(coherency_from_scatter(u));
    std::copy(v.begin(), v.end(), d.cube.data().begin() + static_cast<std::ptrdiff_t>(p * kInputChannels));
  }
  return d;
}

struct Patch {
  CTensor data;      // [h, w, 6]
  LabelGrid labels;  // [h, w]
  std::size_t top = 0, left = 0;
  enum class Flip { None, Horizontal, Vertical } flip = Flip::None;
};

using PatchSet = std::vector<Patch>;

/// 0, stride, 2*stride, ... plus a final edge-aligned offset dim - window when
/// the stride grid does not end flush with the border.
inline std::vector<std::size_t> patch_offsets(std::size_t dim, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ConfigError("window and stride must be positive");
  if (dim < window) throw ShapeError("image dimension " + std::to_string(dim) + " smaller than window " + std::to_string(window));
  std::vector<std::size_t> out;
  for (std::size_t o = 0; o + window <= dim; o += stride) out.push_back(o);
  if (out.back() != dim - window) out.push_back(dim - window);
  return out;
}

inline PatchSet extract_patches(const CTensor& cube, const LabelGrid& labels, std::size_t window = 128, std::size_t stride = 40) {
  if (cube.rank() != 3) throw ShapeError("extract_patches: cube must be [H,W,C]");
  if (labels.height != cube.dim(0) || labels.width != cube.dim(1)) throw ShapeError("extract_patches: labels do not match cube");
  PatchSet out;
  for (std::size_t top : patch_offsets(cube.dim(0), window, stride))
    for (std::size_t left : patch_offsets(cube.dim(1), window, stride))
      out.push_back({crop(cube, top, left, window, window), crop(labels, top, left, window, window), top, left});
  return out;
}

inline PatchSet extract_patches(const Dataset& d, std::size_t window = 128, std::size_t stride = 40) {
  return extract_patches(d.cube, d.labels, window, stride);
}

/// originals, then horizontal flips, then vertical flips.
inline PatchSet augment_flips(const PatchSet& p) {
  PatchSet out = p;
  out.reserve(3 * p.size());
  for (const auto& x : p) out.push_back({hflip(x.data), hflip(x.labels), x.top, x.left, Patch::Flip::Horizontal});
  for (const auto& x : p) out.push_back({vflip(x.data), vflip(x.labels), x.top, x.left, Patch::Flip::Vertical});
  return out;
}

/// Shuffles by seed, then the first ceil(frac * n) patches train and the rest validate.
inline std::pair<PatchSet, PatchSet> split_train_val(const PatchSet& p, double frac, std::uint64_t seed) {
  if (!(frac > 0.0 && frac <= 1.0)) throw ConfigError("train fraction must lie in (0, 1]");
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
  const auto n_train = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(p.size()) - 1e-9));
  std::pair<PatchSet, PatchSet> out;
  for (std::size_t k = 0; k < idx.size(); ++k) (k < n_train ? out.first : out.second).push_back(p[idx[k]]);
  return out;
}

/// Keeps ceil(frac * n_k) randomly chosen pixels of every class k (at least
/// one), zeroing the rest.
inline LabelGrid sample_labels(const LabelGrid& labels, double frac, std::uint64_t seed) {
  if (!(frac > 0.0 && frac <= 1.0)) throw ConfigError("label fraction must lie in (0, 1]");
  const int K = labels.max_label();
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(K) + 1);
  for (std::size_t p = 0; p < labels.size(); ++p)
    if (labels.labels[p] > 0) by_class[static_cast<std::size_t>(labels.labels[p])].push_back(p);
  LabelGrid out(labels.height, labels.width);
  Rng rng(seed);
  for (int k = 1; k <= K; ++k) {
    auto& pix = by_class[static_cast<std::size_t>(k)];
    if (pix.empty()) continue;
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(frac * static_cast<double>(pix.size()) - 1e-9)));
    // Partial Fisher-Yates: the first `keep` slots become a uniform sample.
    for (std::size_t i = 0; i < keep; ++i) std::swap(pix[i], pix[i + static_cast<std::size_t>(rng() % (pix.size() - i))]);
    for (std::size_t i = 0; i < keep; ++i) out.labels[pix[i]] = k;
  }
  return out;
}

/// Labeled pixels of `truth` that are not labeled in `train`.
inline std::vector<std::uint8_t> heldout_mask(const LabelGrid& truth, const LabelGrid& train) {
  if (truth.height != train.height || truth.width != train.width) throw ShapeError("heldout_mask: grid size mismatch");
  std::vector<std::uint8_t> m(truth.size());
  for (std::size_t p = 0; p < truth.size(); ++p) m[p] = truth.labels[p] > 0 && train.labels[p] == 0;
  return m;
}

}  // namespace cvfcn
