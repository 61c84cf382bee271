#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <tuple>
#include <string>
#include <vector>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/data.hpp"
#include "cvfcn/error.hpp"
#include "cvfcn/init.hpp"
#include "cvfcn/loss.hpp"
#include "cvfcn/metrics.hpp"
#include "cvfcn/net.hpp"
#include "cvfcn/optim.hpp"

namespace cvfcn {

/// Sub-seed streams derived from the user seed.
enum SeedStream : std::uint64_t { kSeedInit = 0, kSeedLabels = 1, kSeedSplit = 2, kSeedShuffle = 3, kSeedDropout = 4 };

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch = 30;
  AdamConfig adam;
  LossKind loss = LossKind::ACE;
  std::size_t patience = 0;  // epochs without val-loss improvement; 0 disables
  std::size_t overfit = 0;   // > 0: train and validate on the first N patches, no dropout
  std::uint64_t seed = 0;
  std::size_t threads = 1;   // > 1 assembles the next batch on a worker thread
  bool record_wall_time = true;

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch == 0) throw ConfigError("batch must be positive");
    if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
      throw ConfigError("Adam betas must lie in [0, 1)");
    if (threads == 0) throw ConfigError("threads must be positive");
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double val_oa = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
};

inline std::string csv_header() { return "epoch,train_loss,val_loss,val_oa,wall_seconds"; }

inline std::string csv_line(const EpochStats& s) {
  auto f = [](double v) { return std::isnan(v) ? std::string("nan") : fixed6(v); };
  return std::to_string(s.epoch) + "," + f(s.train_loss) + "," + f(s.val_loss) + "," + f(s.val_oa) + "," + f(s.wall_seconds);
}

/// Mini-batch input and targets assembled from patches.
struct Batch {
  CTensor x;
  TargetCube<float> target;
};

inline Batch assemble_batch(const PatchSet& patches, std::span<const std::size_t> idx, std::size_t num_classes) {
  std::vector<const CTensor*> xs;
  std::vector<LabelGrid> labels;
  for (std::size_t i : idx) {
    xs.push_back(&patches[i].data);
    labels.push_back(patches[i].labels);
  }
  CTensor x = stack<float>(xs);
  return {std::move(x), one_hot_encode<float>(labels, num_classes)};
}

/// Training and validation patches built from a dataset: a per-class label
/// sample, sliding windows, flip augmentation and a seeded 90/10 split.
struct TrainingData {
  LabelGrid train_labels;
  PatchSet train;
  PatchSet val;
};

inline TrainingData prepare_training_data(const Dataset& d, double frac_per_class, std::size_t window, std::size_t stride,
                                          std::uint64_t seed) {
  TrainingData t;
  t.train_labels = frac_per_class < 1.0 ? sample_labels(d.labels, frac_per_class, derive_seed(seed, kSeedLabels)) : d.labels;
  auto patches = augment_flips(extract_patches(d.cube, t.train_labels, window, stride));
  std::tie(t.train, t.val) = split_train_val(patches, 0.9, derive_seed(seed, kSeedSplit));
  return t;
}

class Trainer {
 public:
  Trainer(NetModel model, TrainConfig cfg, PatchSet train, PatchSet val)
      : model_(std::move(model)), cfg_(cfg), train_(std::move(train)), val_(std::move(val)), adam_(cfg.adam),
        shuffle_rng_(derive_seed(cfg.seed, kSeedShuffle)), dropout_rng_(derive_seed(cfg.seed, kSeedDropout)) {
    cfg_.validate();
    if (train_.empty()) throw EmptyError("no training patches");
    if (cfg_.overfit > 0) {
      train_.resize(std::min(cfg_.overfit, train_.size()));
      val_ = train_;
      model_.config.keep_prob = 1.0;
    }
    std::size_t labeled = 0;
    for (const auto& p : train_)
      for (int l : p.labels.labels) labeled += l > 0;
    if (labeled == 0) throw EmptyError("training patches contain no labeled pixels");
    for (const auto* set : {&train_, &val_})
      for (const auto& p : *set)
        if (p.labels.max_label() > static_cast<int>(model_.config.num_classes))
          throw LabelError("patch label exceeds the model's class count");
    best_ = model_;
    start_ = std::chrono::steady_clock::now();
  }

  const NetModel& model() const { return model_; }
  const NetModel& best_model() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  const std::vector<EpochStats>& history() const { return history_; }
  const TrainConfig& config() const { return cfg_; }

  /// One pass over the shuffled training patches, then validation.
  EpochStats run_epoch() {
    const std::size_t K = model_.config.num_classes;
    std::vector<std::size_t> order(train_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng_() % i)]);
    const std::size_t bs = std::min(cfg_.batch, order.size());
    std::vector<std::span<const std::size_t>> chunks;
    for (std::size_t s = 0; s < order.size(); s += bs)
      chunks.emplace_back(order.data() + s, std::min(bs, order.size() - s));

    double loss_sum = 0.0;
    std::size_t steps = 0;
    std::future<Batch> next;
    auto launch = [&](std::size_t c) {
      return std::async(cfg_.threads > 1 ? std::launch::async : std::launch::deferred,
                        [this, span = chunks[c], K] { return assemble_batch(train_, span, K); });
    };
    if (!chunks.empty()) next = launch(0);
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      Batch b = next.get();
      if (c + 1 < chunks.size()) next = launch(c + 1);
      // Training-mode batch norm needs at least two elements per channel at the bottleneck.
      if (b.target.labeled() == 0 || b.x.dim(0) * (b.x.dim(1) >> kDepth) * (b.x.dim(2) >> kDepth) < 2) continue;
      ForwardCache<float> cache;
      CTensor out = forward(model_, b.x, true, &dropout_rng_, &cache);
      auto lr = compute_loss(cfg_.loss, out, b.target);
      if (!std::isfinite(lr.value))
        throw NumericalError("training diverged: loss is " + std::to_string(lr.value) + " at epoch " +
                             std::to_string(history_.size() + 1));
      Gradients<float> grads = backward(model_, cache, lr.grad);
      update_running_stats(model_, cache);
      auto params = model_.parameters();
      adam_step<float>(params, grads, adam_);
      loss_sum += lr.value;
      ++steps;
    }
    EpochStats st;
    st.epoch = history_.size() + 1;
    st.train_loss = steps ? loss_sum / static_cast<double>(steps) : std::numeric_limits<double>::quiet_NaN();
    validate_into(st);
    st.wall_seconds =
        cfg_.record_wall_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() : 0.0;

    const double score = std::isnan(st.val_loss) ? st.train_loss : st.val_loss;
    if (history_.empty() || score < best_score_) {
      best_score_ = score;
      best_ = model_;
      best_epoch_ = st.epoch;
    }
    history_.push_back(st);
    return st;
  }

  bool patience_exhausted() const {
    return cfg_.patience > 0 && !history_.empty() && history_.back().epoch >= best_epoch_ + cfg_.patience;
  }

  /// Runs up to the epoch budget. on_epoch may return false to stop early.
  void run(const std::function<bool(const EpochStats&, const Trainer&)>& on_epoch = {}) {
    while (history_.size() < cfg_.epochs) {
      const auto st = run_epoch();
      if (on_epoch && !on_epoch(st, *this)) break;
      if (patience_exhausted()) break;
    }
  }

 private:
  void validate_into(EpochStats& st) const {
    if (val_.empty()) return;
    const std::size_t K = model_.config.num_classes;
    double weighted = 0.0;
    std::size_t labeled = 0, correct = 0;
    std::vector<std::size_t> idx(val_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t bs = std::max<std::size_t>(1, std::min(cfg_.batch, idx.size()));
    for (std::size_t s = 0; s < idx.size(); s += bs) {
      std::span<const std::size_t> span(idx.data() + s, std::min(bs, idx.size() - s));
      Batch b = assemble_batch(val_, span, K);
      const std::size_t n = b.target.labeled();
      if (n == 0) continue;
      CTensor out = forward(model_, b.x, false);
      weighted += compute_loss(cfg_.loss, out, b.target).value * static_cast<double>(n);
      labeled += n;
      const auto pred = predict_labels(out);
      for (std::size_t k = 0; k < span.size(); ++k) {
        const auto& truth = val_[span[k]].labels.labels;
        for (std::size_t p = 0; p < truth.size(); ++p) correct += truth[p] > 0 && truth[p] == pred[k].labels[p];
      }
    }
    if (labeled == 0) return;
    st.val_loss = weighted / static_cast<double>(labeled);
    st.val_oa = static_cast<double>(correct) / static_cast<double>(labeled);
  }

  NetModel model_;
  NetModel best_;
  TrainConfig cfg_;
  PatchSet train_, val_;
  AdamState adam_;
  Rng shuffle_rng_, dropout_rng_;
  std::vector<EpochStats> history_;
  double best_score_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::chrono::steady_clock::time_point start_;
};

/// Confusion of a whole-image prediction against truth over `mask`
/// (empty mask: all labeled truth pixels).
inline Confusion evaluate_image(const NetModel& m, const Dataset& d, std::span<const std::uint8_t> mask = {}) {
  return confusion(predict_image(m, d.cube), d.labels, mask, m.config.num_classes);
}

}  // namespace cvfcn
