#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/init.hpp"
#include "cvfcn/layers.hpp"
#include "cvfcn/loss.hpp"
#include "cvfcn/net.hpp"

namespace cvfcn {

/// Central-difference verification of every backward pass. The analytic
/// gradient runs in the chosen precision; the numerical oracle always runs in
/// extended precision on the same (float-representable) inputs and parameters.
struct GradCheckOptions {
  std::uint64_t seed = 0;
  std::string width_scale = "1/12";
  bool f64 = false;
  std::size_t samples_per_tensor = 48;
  std::size_t net_samples = 200;  // sampled parameter components, whole network
  std::size_t net_batch = 8;
  std::size_t net_size = 32;
  std::size_t net_in_channels = 2;
  std::size_t net_classes = 2;
  double step = 1e-5;  // finite-difference step

  double threshold() const { return f64 ? 1e-6 : 1e-4; }
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double threshold = 0.0;
  double seconds = 0.0;
  std::size_t kink_skips = 0;  // network samples redrawn because a step crossed a ReLU or pooling switch

  bool passed() const {
    return std::all_of(entries.begin(), entries.end(), [&](const auto& e) { return e.max_rel_err < threshold; });
  }
  double max_rel_err() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
  }
};

namespace gc {
/// Oracle precision.
using Real = long double;


inline double to_float_grid(double v) { return static_cast<double>(static_cast<float>(v)); }

inline Tensor<Real> random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
  Tensor<Real> t(s);
  for (auto& v : t.data())
    v = {to_float_grid(scale * (2.0 * uniform_open01(rng) - 1.0)), to_float_grid(scale * (2.0 * uniform_open01(rng) - 1.0))};
  return t;
}

/// Components bounded away from zero so a small step never crosses a ReLU kink.
inline Tensor<Real> away_from_zero(const Shape& s, Rng& rng, double min_abs = 0.05) {
  Tensor<Real> t(s);
  auto draw = [&] {
    const double m = min_abs + (1.0 - min_abs) * uniform_open01(rng);
    return to_float_grid(uniform_open01(rng) < 0.5 ? -m : m);
  };
  for (auto& v : t.data()) v = {draw(), draw()};
  return t;
}

/// J = sum re(conj(C) y): a linear probe whose gradient with respect to y is C.
template <typename T>
Real probe(const Tensor<T>& y, const Tensor<Real>& c) {
  if (y.shape() != c.shape()) throw ContractViolation("gradcheck probe: shape mismatch");
  Real s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += c[i].real() * y[i].real() + c[i].imag() * y[i].imag();
  return s;
}

inline std::vector<std::size_t> sample_components(std::size_t n_real, std::size_t max, Rng& rng) {
  std::vector<std::size_t> out;
  if (n_real <= max) {
    for (std::size_t i = 0; i < n_real; ++i) out.push_back(i);
    return out;
  }
  std::set<std::size_t> picked;
  while (picked.size() < max) picked.insert(static_cast<std::size_t>(rng() % n_real));
  return {picked.begin(), picked.end()};
}

/// Five-point central difference, truncation error O(h^4), evaluated in
/// extended precision so roundoff stays far below the smallest gradients.
inline double central_difference(const std::function<Real()>& f, Real& slot, Real h) {
  const Real old = slot;
  auto at = [&](Real d) {
    slot = old + d;
    return f();
  };
  const Real d1 = at(h) - at(-h);
  const Real d2 = at(2 * h) - at(-2 * h);
  slot = old;
  return static_cast<double>((8 * d1 - d2) / (12 * h));
}

/// Largest component magnitude of a gradient tensor.
template <typename A>
double tensor_scale(const Tensor<A>& g) {
  double m = 0.0;
  for (std::size_t i = 0; i < 2 * g.size(); ++i) m = std::max(m, std::abs(static_cast<double>(g.real_data()[i])));
  return m;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-3 * scale), where scale is the
/// largest magnitude in the whole gradient tensor and in the numeric samples.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double scale = 0.0) {
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = 1e-3 * scale;
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::abs(analytic[i] - numeric[i]);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    if (diff > 0.0) worst = std::max(worst, denom > 0.0 ? diff / denom : INFINITY);
  }
  return worst;
}

/// Compares analytic gradient `g` (any precision) with central differences of
/// f over sampled components of the extended-precision tensor `x`.
template <typename A>
GradCheckEntry check_tensor(const std::string& name, const Tensor<A>& g, Tensor<Real>& x, const std::function<Real()>& f,
                            const GradCheckOptions& o, Rng& rng) {
  if (g.shape() != x.shape()) throw ContractViolation("gradcheck " + name + ": gradient shape mismatch");
  const auto comps = sample_components(2 * x.size(), o.samples_per_tensor, rng);
  std::vector<double> a, n;
  for (std::size_t c : comps) {
    a.push_back(static_cast<double>(g.real_data()[c]));
    n.push_back(central_difference(f, x.real_data()[c], o.step));
  }
  return {name, max_relative_error(a, n, tensor_scale(g)), comps.size()};
}

template <typename A>
Tensor<A> as(const Tensor<Real>& t) {
  return t.template cast<A>();
}

template <typename A>
ConvParams<A> as(const ConvParams<Real>& p) {
  return {as<A>(p.weight), as<A>(p.bias), p.stride, p.pad};
}

template <typename A>
BNParams<A> as(const BNParams<Real>& p) {
  BNParams<A> q;
  q.gamma = as<A>(p.gamma);
  q.beta = as<A>(p.beta);
  q.running_mean = as<A>(p.running_mean);
  q.running_cov = as<A>(p.running_cov);
  q.momentum = static_cast<A>(p.momentum);
  q.epsilon = static_cast<A>(p.epsilon);
  return q;
}

template <typename A>
void check_conv(GradCheckReport& r, const std::string& name, const Shape& xs, std::size_t k, std::size_t out, std::size_t pad,
                const GradCheckOptions& o, Rng& rng) {
  Tensor<Real> x = random_tensor(xs, rng);
  ConvParams<Real> p{random_tensor({k, k, xs[3], out}, rng, 0.5), random_tensor({out}, rng, 0.5), 1, pad};
  const Tensor<Real> y0 = conv2d_forward(x, p);
  const Tensor<Real> c = random_tensor(y0.shape(), rng);
  const auto pa = as<A>(p);
  const auto g = conv2d_backward(as<A>(x), pa, as<A>(c));
  auto f = [&] { return probe(conv2d_forward(x, p), c); };
  r.entries.push_back(check_tensor(name + ".dx", g.dx, x, f, o, rng));
  r.entries.push_back(check_tensor(name + ".dweight", g.dweight, p.weight, f, o, rng));
  r.entries.push_back(check_tensor(name + ".dbias", g.dbias, p.bias, f, o, rng));
}

inline BNParams<Real> random_bn(std::size_t ch, Rng& rng) {
  auto p = BNParams<Real>::make(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    // gamma rows (g00 + j g01), (g10 + j g11): a perturbed scaled identity.
    p.gamma[2 * c] = {to_float_grid(0.7 + 0.3 * uniform_open01(rng)), to_float_grid(0.2 * uniform_open01(rng) - 0.1)};
    p.gamma[2 * c + 1] = {to_float_grid(0.2 * uniform_open01(rng) - 0.1), to_float_grid(0.7 + 0.3 * uniform_open01(rng))};
    p.beta[c] = {to_float_grid(uniform_open01(rng) - 0.5), to_float_grid(uniform_open01(rng) - 0.5)};
    p.running_mean[c] = {to_float_grid(0.2 * uniform_open01(rng)), to_float_grid(-0.2 * uniform_open01(rng))};
    const double a = to_float_grid(0.5 + uniform_open01(rng)), d = to_float_grid(0.5 + uniform_open01(rng));
    const double b = to_float_grid(0.3 * (uniform_open01(rng) - 0.5));
    p.running_cov[2 * c] = {a, b};
    p.running_cov[2 * c + 1] = {b, d};
  }
  return p;
}

template <typename A>
void check_batch_norm(GradCheckReport& r, bool training, const GradCheckOptions& o, Rng& rng) {
  const std::string name = training ? "batch_norm.train" : "batch_norm.infer";
  // Correlated real/imaginary parts exercise the full 2x2 whitening.
  Tensor<Real> x = random_tensor({3, 4, 4, 3}, rng);
  for (auto& v : x.data()) v = {v.real(), to_float_grid(0.6 * v.real() + 0.4 * v.imag())};
  BNParams<Real> p = random_bn(3, rng);
  const Tensor<Real> c = random_tensor(x.shape(), rng);
  const auto pa = as<A>(p);
  BNCache<A> cache;
  batch_norm_forward(as<A>(x), pa, training, &cache);
  const auto g = batch_norm_backward(cache, pa, as<A>(c));
  auto f = [&] { return probe(batch_norm_forward(x, p, training), c); };
  r.entries.push_back(check_tensor(name + ".dx", g.dx, x, f, o, rng));
  r.entries.push_back(check_tensor(name + ".dgamma", g.dgamma, p.gamma, f, o, rng));
  r.entries.push_back(check_tensor(name + ".dbeta", g.dbeta, p.beta, f, o, rng));
}

/// Pooling input whose window magnitudes differ by at least `gap`, so small
/// steps never move a recorded maximum.
inline Tensor<Real> separated_pool_input(const Shape& s, Rng& rng, double gap = 1e-3) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Tensor<Real> x = random_tensor(s, rng);
    const auto [pooled, loc] = maxpool_forward(x, 2, 2);
    bool ok = true;
    const std::size_t B = s[0], H = s[1], W = s[2], C = s[3];
    for (std::size_t b = 0; b < B && ok; ++b)
      for (std::size_t i = 0; i + 1 < H && ok; i += 2)
        for (std::size_t j = 0; j + 1 < W && ok; j += 2)
          for (std::size_t ch = 0; ch < C && ok; ++ch) {
            double m[4];
            int q = 0;
            for (std::size_t di = 0; di < 2; ++di)
              for (std::size_t dj = 0; dj < 2; ++dj) m[q++] = std::norm(x(b, i + di, j + dj, ch));
            std::sort(m, m + 4);
            ok = m[3] - m[2] > gap;
          }
    if (ok) return x;
  }
  throw NumericalError("gradcheck: could not draw a tie-free pooling input");
}

template <typename A>
void check_pointwise_layers(GradCheckReport& r, const GradCheckOptions& o, Rng& rng) {
  {
    Tensor<Real> x = away_from_zero({2, 4, 4, 3}, rng);
    const Tensor<Real> c = random_tensor(x.shape(), rng);
    const auto g = crelu_backward(as<A>(x), as<A>(c));
    r.entries.push_back(check_tensor("crelu.dx", g, x, [&] { return probe(crelu_forward(x), c); }, o, rng));
  }
  {
    Tensor<Real> x = random_tensor({2, 4, 4, 3}, rng, 3.0);
    const Tensor<Real> c = random_tensor(x.shape(), rng);
    const auto g = output_backward(output_forward(as<A>(x)), as<A>(c));
    r.entries.push_back(check_tensor("output.dx", g, x, [&] { return probe(output_forward(x), c); }, o, rng));
  }
  {
    Tensor<Real> x = separated_pool_input({2, 4, 6, 3}, rng);
    const auto [pa, loc_a] = maxpool_forward(as<A>(x), 2, 2);
    const Tensor<Real> c = random_tensor(pa.shape(), rng);
    const auto g = maxpool_backward(loc_a, as<A>(c));
    auto f = [&] { return probe(maxpool_forward(x, 2, 2).first, c); };
    r.entries.push_back(check_tensor("maxpool.dx", g, x, f, o, rng));
  }
  {
    const auto [src, loc] = maxpool_forward(random_tensor({2, 4, 6, 3}, rng), 2, 2);
    Tensor<Real> x = random_tensor(loc.pooled_shape, rng);
    const Tensor<Real> c = random_tensor(loc.source_shape, rng);
    const auto g = maxunpool_backward(loc, as<A>(c));
    r.entries.push_back(
        check_tensor("maxunpool.dx", g, x, [&] { return probe(maxunpool_forward(x, loc), c); }, o, rng));
  }
  {
    Tensor<Real> x = random_tensor({2, 4, 4, 3}, rng);
    const Tensor<Real> c = random_tensor(x.shape(), rng);
    const std::uint64_t mask_seed = rng();
    Rng mr(mask_seed);
    const auto [ya, mask] = dropout_forward(as<A>(x), 0.6, mr, true);
    const auto g = dropout_backward(mask, as<A>(c));
    auto f = [&] {
      Rng again(mask_seed);
      return probe(dropout_forward(x, 0.6, again, true).first, c);
    };
    r.entries.push_back(check_tensor("dropout.dx", g, x, f, o, rng));
  }
}

inline std::vector<LabelGrid> random_labels(std::size_t batch, std::size_t h, std::size_t w, std::size_t k, Rng& rng) {
  std::vector<LabelGrid> out(batch, LabelGrid(h, w));
  for (auto& g : out)
    for (auto& v : g.labels) v = static_cast<int>(rng() % (k + 1));  // includes unlabeled
  return out;
}

template <typename A>
void check_losses(GradCheckReport& r, const GradCheckOptions& o, Rng& rng) {
  const std::size_t K = 3;
  const auto labels = random_labels(2, 4, 4, K, rng);
  const auto t = one_hot_encode<Real>(labels, K);
  const auto ta = one_hot_encode<A>(labels, K);
  Tensor<Real> out({2, 4, 4, K});
  for (auto& v : out.data())
    v = {to_float_grid(0.05 + 0.9 * uniform_open01(rng)), to_float_grid(0.05 + 0.9 * uniform_open01(rng))};
  for (LossKind kind : {LossKind::ACE, LossKind::CMSE, LossKind::CMAE}) {
    const auto g = compute_loss(kind, as<A>(out), ta).grad;
    auto f = [&] { return compute_loss(kind, out, t).value; };
    r.entries.push_back(check_tensor(std::string(to_string(kind)) + "_loss.dO", g, out, f, o, rng));
  }
}

/// ReLU signs and pooling switches of a forward pass; a step that changes
/// them crosses a kink where the central difference is meaningless.
template <typename T>
std::vector<std::uint8_t> activation_pattern(const ForwardCache<T>& c) {
  std::vector<std::uint8_t> s;
  for (const auto& t : c.pre_activation)
    for (const auto& v : t.data()) s.push_back(static_cast<std::uint8_t>((v.real() > 0) | ((v.imag() > 0) << 1)));
  for (const auto& loc : c.pool_locs)
    for (std::size_t i : loc.index) {
      const auto* b = reinterpret_cast<const std::uint8_t*>(&i);
      s.insert(s.end(), b, b + sizeof i);
    }
  return s;
}

template <typename A>
void check_network(GradCheckReport& r, const GradCheckOptions& o, Rng& rng) {
  NetConfig cfg;
  cfg.in_channels = o.net_in_channels;
  cfg.num_classes = o.net_classes;
  cfg.set_width_scale(o.width_scale);
  cfg.keep_prob = 1.0;
  InitSpec init;
  init.seed = rng();
  // Initialize in float so both precisions see identical parameters.
  Model<Real> m = Model<float>::build(cfg, init).template cast<Real>();
  for (auto* p : m.parameters())
    for (auto& v : p->data()) v += std::complex<Real>(to_float_grid(0.05 * (uniform_open01(rng) - 0.5)), 0.0);
  for (auto* p : m.parameters())
    for (auto& v : p->data()) v = {to_float_grid(v.real()), to_float_grid(v.imag())};
  const Model<A> ma = m.cast<A>();

  const Tensor<Real> x = random_tensor({o.net_batch, o.net_size, o.net_size, o.net_in_channels}, rng);
  const auto labels = random_labels(o.net_batch, o.net_size, o.net_size, o.net_classes, rng);
  const auto t = one_hot_encode<Real>(labels, o.net_classes);
  const auto ta = one_hot_encode<A>(labels, o.net_classes);

  ForwardCache<A> cache_a;
  const Tensor<A> out_a = forward(ma, as<A>(x), true, nullptr, &cache_a);
  const Gradients<A> grads = backward(ma, cache_a, ace_loss(out_a, ta).grad);

  ForwardCache<Real> base;
  forward(m, x, true, nullptr, &base);
  const auto base_pattern = activation_pattern(base);
  bool kinked = false;
  auto f = [&] {
    ForwardCache<Real> c;
    const auto out = forward(m, x, true, nullptr, &c);
    if (activation_pattern(c) != base_pattern) kinked = true;
    return ace_loss(out, t).value;
  };

  auto params = m.parameters();
  const auto names = m.parameter_names();
  std::size_t total = 0;
  for (const auto* p : params) total += 2 * p->size();
  std::vector<std::vector<double>> an(params.size()), nu(params.size());
  std::size_t drawn = 0;
  const std::size_t budget = std::min(o.net_samples, total);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  // Roughly even coverage: cycle through tensors, random component in each.
  for (std::size_t k = 0; drawn < budget && k < 50 * budget; ++k) {
    const std::size_t ti = k % params.size();
    const std::size_t comp = static_cast<std::size_t>(rng() % (2 * params[ti]->size()));
    if (!seen.insert({ti, comp}).second) continue;
    kinked = false;
    const double n = central_difference(f, params[ti]->real_data()[comp], o.step);
    if (kinked) {
      ++r.kink_skips;
      continue;
    }
    an[ti].push_back(static_cast<double>(grads[ti].real_data()[comp]));
    nu[ti].push_back(n);
    ++drawn;
  }
  // Conv biases feeding a batch norm have an identically zero gradient, so
  // their error is measured against the analytic scale of the layer's weights.
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    if (an[ti].empty()) continue;
    std::vector<double> a = an[ti], n = nu[ti];
    const bool zero_grad_bias = names[ti].ends_with(".conv.bias") && ti + 1 < params.size() &&
                                names[ti + 1].ends_with(".bn.gamma");
    if (zero_grad_bias) {
      const double wscale = tensor_scale(grads[ti - 1]);
      double worst = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - n[i]) / std::max({std::abs(a[i]), std::abs(n[i]), wscale}));
      r.entries.push_back({"network." + names[ti], worst, a.size()});
    } else {
      r.entries.push_back({"network." + names[ti], max_relative_error(a, n, tensor_scale(grads[ti])), a.size()});
    }
  }
}

template <typename A>
GradCheckReport run(const GradCheckOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckReport r;
  r.threshold = o.threshold();
  Rng rng(o.seed);
  check_conv<A>(r, "conv3x3", {2, 5, 6, 3}, 3, 4, 1, o, rng);
  check_conv<A>(r, "conv3x3_wide", {1, 32, 34, 2}, 3, 2, 1, o, rng);
  check_conv<A>(r, "conv1x1", {2, 3, 4, 5}, 1, 3, 0, o, rng);
  check_batch_norm<A>(r, true, o, rng);
  check_batch_norm<A>(r, false, o, rng);
  check_pointwise_layers<A>(r, o, rng);
  check_losses<A>(r, o, rng);
  check_network<A>(r, o, rng);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace gc

inline GradCheckReport run_gradcheck(const GradCheckOptions& o) {
  return o.f64 ? gc::run<double>(o) : gc::run<float>(o);
}

}  // namespace cvfcn
