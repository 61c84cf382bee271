#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/error.hpp"
#include "cvfcn/init.hpp"
#include "cvfcn/label_grid.hpp"
#include "cvfcn/layers.hpp"

namespace cvfcn {

/// Number of pooling stages; inputs must be divisible by 2^kDepth.
inline constexpr std::size_t kDepth = 5;
inline constexpr std::size_t kSpatialMultiple = std::size_t{1} << kDepth;
inline constexpr std::size_t kNumConvs = 2 * kDepth + 1;  // B1..B11
inline constexpr std::size_t kNumNorms = 2 * kDepth;      // every block except B11

struct NetConfig {
  std::size_t in_channels = 6;
  std::size_t num_classes = 2;
  std::array<std::size_t, kDepth> widths{12, 24, 48, 96, 192};
  // width_scale as an exact fraction
  std::size_t scale_num = 1;
  std::size_t scale_den = 1;
  bool enable_skips = true;
  bool enable_locmaps = true;
  double keep_prob = 0.5;

  /// Block widths after applying width_scale. Throws ConfigError when a
  /// scaled width is not a positive integer.
  std::array<std::size_t, kDepth> scaled_widths() const {
    if (scale_num == 0 || scale_den == 0) throw ConfigError("width_scale must be positive");
    std::array<std::size_t, kDepth> out{};
    for (std::size_t i = 0; i < kDepth; ++i) {
      if ((widths[i] * scale_num) % scale_den != 0)
        throw ConfigError("width_scale " + width_scale_str() + " gives a non-integer width for base width " +
                          std::to_string(widths[i]));
      out[i] = widths[i] * scale_num / scale_den;
      if (out[i] == 0) throw ConfigError("width_scale " + width_scale_str() + " gives a zero width");
    }
    return out;
  }

  std::string width_scale_str() const {
    return scale_den == 1 ? std::to_string(scale_num) : std::to_string(scale_num) + "/" + std::to_string(scale_den);
  }

  void validate() const {
    if (in_channels == 0) throw ConfigError("in_channels must be positive");
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("keep_prob must lie in (0, 1]");
    scaled_widths();
  }

  /// Parses "1/4", "0.25" or "1".
  void set_width_scale(const std::string& s) {
    std::size_t num = 0, den = 1;
    const auto slash = s.find('/');
    try {
      if (slash != std::string::npos) {
        num = std::stoul(s.substr(0, slash));
        den = std::stoul(s.substr(slash + 1));
      } else if (s.find('.') != std::string::npos) {
        const auto dot = s.find('.');
        const std::string frac = s.substr(dot + 1);
        den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        num = std::stoul(s.substr(0, dot).empty() ? "0" : s.substr(0, dot)) * den + (frac.empty() ? 0 : std::stoul(frac));
      } else {
        num = std::stoul(s);
      }
    } catch (const std::exception&) {
      throw ConfigError("cannot parse width_scale '" + s + "'");
    }
    if (num == 0 || den == 0) throw ConfigError("width_scale must be positive");
    std::size_t a = num, b = den;
    while (b) {
      a %= b;
      std::swap(a, b);
    }
    scale_num = num / a;
    scale_den = den / a;
  }
};

/**
 * The encoder/decoder network. Blocks B1-B5 are Conv3x3 -> BN -> CReLU ->
 * MaxPool 2x2/2, B6 is Conv1x1 -> BN -> CReLU -> dropout, B7-B10 are
 * Unpool -> (+skip) -> Conv3x3 -> BN -> CReLU and B11 is Unpool -> (+skip)
 * -> Conv3x3 to num_classes channels followed by the logistic output layer.
 */
template <typename T>
class Model {
 public:
  NetConfig config;
  std::uint64_t seed = 0;
  std::array<ConvParams<T>, kNumConvs> convs;
  std::array<BNParams<T>, kNumNorms> norms;

  static Model build(const NetConfig& cfg, const InitSpec& init) {
    cfg.validate();
    Model m;
    m.config = cfg;
    m.seed = init.seed;
    Rng rng(init.seed);
    const auto channels = m.conv_channels();
    for (std::size_t k = 0; k < kNumConvs; ++k) {
      const std::size_t ksize = k == kDepth ? 1 : 3;
      const auto [in, out] = channels[k];
      ConvParams<T>& p = m.convs[k];
      p.weight = init_weights<T>({ksize, ksize, in, out}, static_cast<long long>(ksize * ksize * in), init, rng);
      p.bias = Tensor<T>({out});
      p.stride = 1;
      p.pad = ksize / 2;
    }
    for (std::size_t k = 0; k < kNumNorms; ++k) m.norms[k] = BNParams<T>::make(channels[k].second);
    return m;
  }

  /// (in, out) channel count of each conv in topology order.
  std::array<std::pair<std::size_t, std::size_t>, kNumConvs> conv_channels() const {
    const auto w = config.scaled_widths();
    std::array<std::pair<std::size_t, std::size_t>, kNumConvs> c{};
    c[0] = {config.in_channels, w[0]};
    for (std::size_t i = 1; i < kDepth; ++i) c[i] = {w[i - 1], w[i]};
    c[kDepth] = {w[kDepth - 1], w[kDepth - 1]};
    for (std::size_t j = 0; j < kDepth; ++j) {
      const std::size_t level = kDepth - 1 - j;
      c[kDepth + 1 + j] = {w[level], level == 0 ? config.num_classes : w[level - 1]};
    }
    return c;
  }

  /// Trainable tensors in topology order: per block W, b, then gamma, beta
  /// when the block has batch normalization.
  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    for (std::size_t k = 0; k < kNumConvs; ++k) {
      out.push_back(&convs[k].weight);
      out.push_back(&convs[k].bias);
      if (k < kNumNorms) {
        out.push_back(&norms[k].gamma);
        out.push_back(&norms[k].beta);
      }
    }
    return out;
  }

  std::vector<const Tensor<T>*> parameters() const {
    std::vector<const Tensor<T>*> out;
    for (auto* p : const_cast<Model*>(this)->parameters()) out.push_back(p);
    return out;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < kNumConvs; ++k) {
      const std::string b = "B" + std::to_string(k + 1);
      out.push_back(b + ".conv.weight");
      out.push_back(b + ".conv.bias");
      if (k < kNumNorms) {
        out.push_back(b + ".bn.gamma");
        out.push_back(b + ".bn.beta");
      }
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
  }

  template <typename U>
  Model<U> cast() const {
    Model<U> m;
    m.config = config;
    m.seed = seed;
    for (std::size_t k = 0; k < kNumConvs; ++k) {
      m.convs[k].weight = convs[k].weight.template cast<U>();
      m.convs[k].bias = convs[k].bias.template cast<U>();
      m.convs[k].stride = convs[k].stride;
      m.convs[k].pad = convs[k].pad;
    }
    for (std::size_t k = 0; k < kNumNorms; ++k) {
      m.norms[k].gamma = norms[k].gamma.template cast<U>();
      m.norms[k].beta = norms[k].beta.template cast<U>();
      m.norms[k].running_mean = norms[k].running_mean.template cast<U>();
      m.norms[k].running_cov = norms[k].running_cov.template cast<U>();
      m.norms[k].momentum = static_cast<U>(norms[k].momentum);
      m.norms[k].epsilon = static_cast<U>(norms[k].epsilon);
    }
    return m;
  }
};

using NetModel = Model<float>;

/// Everything backward needs from a forward pass.
template <typename T>
struct ForwardCache {
  bool training = false;
  std::array<Tensor<T>, kNumConvs> conv_in;
  std::array<BNCache<T>, kNumNorms> bn;
  std::array<Tensor<T>, kNumNorms> pre_activation;
  std::array<LocMap, kDepth> pool_locs;
  // Only filled when max-location maps are disabled; otherwise unpooling
  // replays pool_locs.
  std::array<LocMap, kDepth> unpool_locs;
  DropMask drop;
  Tensor<T> output;

  const LocMap& unpool_loc(std::size_t level) const {
    return unpool_locs[level].index.empty() ? pool_locs[level] : unpool_locs[level];
  }
  std::size_t locmap_count() const {
    std::size_t n = 0;
    for (const auto& l : pool_locs) n += l.index.empty() ? 0 : 1;
    return n;
  }
};

/// Gradient for every trainable tensor, in Model::parameters() order.
template <typename T>
using Gradients = std::vector<Tensor<T>>;

/**
 * Runs the network on x [B, H, W, in_channels]; H and W must be multiples of 32.
 * Returns O [B, H, W, num_classes] with every component in (0, 1).
 * rng drives dropout and is required in training mode when keep_prob < 1.
 */
template <typename T>
Tensor<T> forward(const Model<T>& m, const Tensor<T>& x, bool training, Rng* rng = nullptr,
                  ForwardCache<T>* cache = nullptr) {
  const NetConfig& cfg = m.config;
  if (x.rank() != 4) throw ShapeError("forward: input must be [B,H,W,C], got " + shape_str(x.shape()));
  if (x.dim(3) != cfg.in_channels)
    throw ShapeError("forward: input has " + std::to_string(x.dim(3)) + " channels, model expects " +
                     std::to_string(cfg.in_channels));
  if (x.dim(1) % kSpatialMultiple != 0 || x.dim(2) % kSpatialMultiple != 0)
    throw ShapeError("forward: spatial dims must be multiples of 32, got " + shape_str(x.shape()) + " (pad first)");
  if (training && cfg.keep_prob < 1.0 && rng == nullptr) throw ConfigError("forward: training with dropout needs an rng");

  if (cache) *cache = ForwardCache<T>{};
  if (cache) cache->training = training;
  std::array<Tensor<T>, kDepth> skips;
  std::array<LocMap, kDepth> pool_locs, unpool_locs;

  auto conv_bn_relu = [&](std::size_t k, const Tensor<T>& in) {
    Tensor<T> c = conv2d_forward(in, m.convs[k]);
    Tensor<T> n = batch_norm_forward(c, m.norms[k], training, cache ? &cache->bn[k] : nullptr);
    Tensor<T> a = crelu_forward(n);
    if (cache) {
      cache->conv_in[k] = in;
      cache->pre_activation[k] = std::move(n);
    }
    return a;
  };

  Tensor<T> h = x;
  for (std::size_t i = 0; i < kDepth; ++i) {
    Tensor<T> a = conv_bn_relu(i, h);
    auto [pooled, loc] = maxpool_forward(a, 2, 2);
    if (!cfg.enable_locmaps) unpool_locs[i] = top_left_locmap(a.shape(), 2, 2);
    pool_locs[i] = std::move(loc);
    if (cfg.enable_skips) skips[i] = std::move(a);
    h = std::move(pooled);
  }
  {
    Tensor<T> a = conv_bn_relu(kDepth, h);
    Rng dummy(0);
    auto [d, mask] = dropout_forward(a, cfg.keep_prob, rng ? *rng : dummy, training);
    if (cache) cache->drop = std::move(mask);
    h = std::move(d);
  }
  for (std::size_t j = 0; j < kDepth; ++j) {
    const std::size_t level = kDepth - 1 - j;
    const std::size_t k = kDepth + 1 + j;
    const LocMap& loc = cfg.enable_locmaps ? pool_locs[level] : unpool_locs[level];
    Tensor<T> u = maxunpool_forward(h, loc);
    if (cfg.enable_skips) u = add(u, skips[level]);
    if (k < kNumNorms) {
      h = conv_bn_relu(k, u);
    } else {
      h = conv2d_forward(u, m.convs[k]);
      if (cache) cache->conv_in[k] = std::move(u);
    }
  }
  Tensor<T> out = output_forward(h);
  if (cache) {
    cache->pool_locs = std::move(pool_locs);
    cache->unpool_locs = std::move(unpool_locs);
    cache->output = out;
  }
  return out;
}

/// Folds the batch statistics of a training forward into the running estimates.
template <typename T>
void update_running_stats(Model<T>& m, const ForwardCache<T>& cache) {
  if (!cache.training) return;
  for (std::size_t k = 0; k < kNumNorms; ++k) batch_norm_update_running(m.norms[k], cache.bn[k]);
}

/// Gradients of a real loss with respect to every parameter, given dJ/dO.
template <typename T>
Gradients<T> backward(const Model<T>& m, const ForwardCache<T>& cache, const Tensor<T>& d_out) {
  if (cache.output.empty() || cache.locmap_count() != kDepth)
    throw ContractViolation("backward: cache does not hold a complete forward pass");
  if (d_out.shape() != cache.output.shape())
    throw ContractViolation("backward: dO shape " + shape_str(d_out.shape()) + " does not match forward output " +
                            shape_str(cache.output.shape()));
  for (std::size_t k = 0; k < kNumConvs; ++k)
    if (cache.conv_in[k].empty() || cache.conv_in[k].dim(3) != m.convs[k].in_channels())
      throw ContractViolation("backward: cache was produced by a different model");

  std::array<Tensor<T>, kNumConvs> dw, db;
  std::array<Tensor<T>, kNumNorms> dgamma, dbeta;
  std::array<Tensor<T>, kDepth> dskip;

  auto back_relu_bn_conv = [&](std::size_t k, const Tensor<T>& g_act) {
    Tensor<T> g = crelu_backward(cache.pre_activation[k], g_act);
    auto bg = batch_norm_backward(cache.bn[k], m.norms[k], g);
    dgamma[k] = std::move(bg.dgamma);
    dbeta[k] = std::move(bg.dbeta);
    // The network input needs no gradient.
    auto cg = conv2d_backward(cache.conv_in[k], m.convs[k], bg.dx, k != 0);
    dw[k] = std::move(cg.dweight);
    db[k] = std::move(cg.dbias);
    return std::move(cg.dx);
  };

  Tensor<T> g = output_backward(cache.output, d_out);
  // Decoder, output side first: B11 down to B7.
  for (std::size_t step = 0; step < kDepth; ++step) {
    const std::size_t j = kDepth - 1 - step;
    const std::size_t level = kDepth - 1 - j;
    const std::size_t k = kDepth + 1 + j;
    if (k < kNumNorms) {
      g = back_relu_bn_conv(k, g);
    } else {
      auto cg = conv2d_backward(cache.conv_in[k], m.convs[k], g);
      dw[k] = std::move(cg.dweight);
      db[k] = std::move(cg.dbias);
      g = std::move(cg.dx);
    }
    if (m.config.enable_skips) dskip[level] = g;
    g = maxunpool_backward(cache.unpool_loc(level), g);
  }
  g = dropout_backward(cache.drop, g);
  g = back_relu_bn_conv(kDepth, g);
  for (std::size_t i = kDepth; i-- > 0;) {
    g = maxpool_backward(cache.pool_locs[i], g);
    if (m.config.enable_skips) g = add(g, dskip[i]);
    g = back_relu_bn_conv(i, g);
  }

  Gradients<T> out;
  for (std::size_t k = 0; k < kNumConvs; ++k) {
    out.push_back(std::move(dw[k]));
    out.push_back(std::move(db[k]));
    if (k < kNumNorms) {
      out.push_back(std::move(dgamma[k]));
      out.push_back(std::move(dbeta[k]));
    }
  }
  return out;
}

/// Per pixel, the 1-based class whose score re(O_k) + im(O_k) is largest;
/// ties go to the lowest class index. One grid per batch item.
template <typename T>
std::vector<LabelGrid> predict_labels(const Tensor<T>& out) {
  if (out.rank() != 4) throw ShapeError("predict_labels: expected [B,H,W,K]");
  const std::size_t B = out.dim(0), H = out.dim(1), W = out.dim(2), K = out.dim(3);
  std::vector<LabelGrid> grids(B, LabelGrid(H, W));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const auto* px = &out[out.offset(b, i, j, 0)];
        std::size_t best = 0;
        T best_score = px[0].real() + px[0].imag();
        for (std::size_t k = 1; k < K; ++k) {
          const T s = px[k].real() + px[k].imag();
          if (s > best_score) {
            best_score = s;
            best = k;
          }
        }
        grids[b].at(i, j) = static_cast<int>(best + 1);
      }
  return grids;
}

/// Inference on a whole image [H, W, C] of any size >= 17: reflect-pads up
/// to the next multiple of 32, runs one forward pass and crops back.
template <typename T>
Tensor<T> predict_scores(const Model<T>& m, const Tensor<T>& image) {
  if (image.rank() != 3) throw ShapeError("predict: image must be [H,W,C]");
  const std::size_t H = image.dim(0), W = image.dim(1);
  const std::size_t ph = (kSpatialMultiple - H % kSpatialMultiple) % kSpatialMultiple;
  const std::size_t pw = (kSpatialMultiple - W % kSpatialMultiple) % kSpatialMultiple;
  const std::size_t top = ph / 2, left = pw / 2;
  Tensor<T> padded = (ph || pw) ? reflect_pad(image, top, ph - top, left, pw - left) : image;
  Shape s{1};
  for (std::size_t d : padded.shape()) s.push_back(d);
  Tensor<T> out = forward(m, padded.reshaped(s), false);
  return crop(out, top, left, H, W);
}

template <typename T>
LabelGrid predict_image(const Model<T>& m, const Tensor<T>& image) {
  return predict_labels(predict_scores(m, image)).front();
}

}  // namespace cvfcn
