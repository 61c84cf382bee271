#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvfcn/checkpoint.hpp"
#include "cvfcn/data.hpp"
#include "cvfcn/error.hpp"
#include "cvfcn/gradcheck.hpp"
#include "cvfcn/image_io.hpp"
#include "cvfcn/init_stats.hpp"
#include "cvfcn/metrics.hpp"
#include "cvfcn/net.hpp"
#include "cvfcn/train.hpp"

namespace cvfcn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

/// CVFCN_SEED, when set, overrides any --seed value.
inline std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("CVFCN_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used, 0);
    if (used != std::string(s).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("CVFCN_SEED is not an unsigned integer: '") + s + "'");
  }
}

inline std::uint64_t effective_seed(std::uint64_t flag) { return env_seed().value_or(flag); }

struct SynthArgs {
  std::string spec, cube, labels;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::string cube, labels, out, log, train_labels_out;
  std::size_t epochs = 200, batch = 30, window = 128, stride = 40, threads = 1, overfit = 0, patience = 0;
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, keep_prob = 0.5, frac_per_class = 0.05;
  std::string width_scale = "1", loss = "ace", init = "rayleigh", wall_time = "auto";
  std::uint64_t seed = 0;
  bool no_skips = false, no_locmaps = false, quiet = false;
};

struct PredictArgs {
  std::string model, cube, out, ppm;
};

struct EvalArgs {
  std::string pred, truth, exclude, out;
};

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::string width_scale = "1/12";
  bool f64 = false, corrupt = false;
};

struct InitStatsArgs {
  std::string scheme = "rayleigh";
  long long fan_in = 100;
  long long n_samples = 100000;
  std::uint64_t seed = 0;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SceneSpec spec = SceneSpec::load(a.spec);
  if (a.seed) spec.seed = *a.seed;
  if (auto s = env_seed()) spec.seed = *s;
  const Dataset d = synth_scene(spec);
  save_dataset(d, a.cube, a.labels);
  std::vector<std::size_t> counts(d.num_classes + 1, 0);
  for (int l : d.labels.labels) ++counts[static_cast<std::size_t>(l)];
  out << "cube " << shape_str(d.cube.shape()) << " -> " << a.cube << "\n";
  out << "unlabeled: " << counts[0] << "\n";
  for (std::size_t k = 1; k <= d.num_classes; ++k) out << "class " << k << ": " << counts[k] << "\n";
  return kExitOk;
}

inline NetConfig net_config(const TrainArgs& a, std::size_t num_classes) {
  NetConfig c;
  c.in_channels = kInputChannels;
  c.num_classes = num_classes;
  c.set_width_scale(a.width_scale);
  c.keep_prob = a.keep_prob;
  c.enable_skips = !a.no_skips;
  c.enable_locmaps = !a.no_locmaps;
  c.validate();
  return c;
}

inline bool record_wall_time(const TrainArgs& a) {
  if (a.wall_time == "on") return true;
  if (a.wall_time == "off") return false;
  if (a.wall_time == "auto") return a.threads > 1;  // --threads 1 keeps the log byte-reproducible
  throw ConfigError("--wall-time must be auto|on|off");
}

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  const std::uint64_t seed = effective_seed(a.seed);
  if (!(a.frac_per_class > 0.0 && a.frac_per_class <= 1.0)) throw ConfigError("--frac-per-class must lie in (0, 1]");
  if (a.window == 0 || a.stride == 0) throw ConfigError("--window and --stride must be positive");
  if (a.window % kSpatialMultiple != 0)
    throw ConfigError("--window must be a multiple of " + std::to_string(kSpatialMultiple));
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch = a.batch;
  tc.adam.lr = a.lr;
  tc.adam.beta1 = a.beta1;
  tc.adam.beta2 = a.beta2;
  tc.loss = parse_loss(a.loss);
  tc.patience = a.patience;
  tc.overfit = a.overfit;
  tc.seed = seed;
  tc.threads = a.threads;
  tc.record_wall_time = record_wall_time(a);
  tc.validate();
  InitSpec init;
  init.scheme = parse_init_scheme(a.init);
  init.seed = derive_seed(seed, kSeedInit);

  const Dataset d = load_dataset(a.cube, a.labels);
  const NetConfig cfg = net_config(a, d.num_classes);
  if (d.height() < a.window || d.width() < a.window)
    throw ShapeError("image " + std::to_string(d.height()) + "x" + std::to_string(d.width()) + " is smaller than the window");
  TrainingData td = prepare_training_data(d, a.frac_per_class, a.window, a.stride, seed);
  if (!a.train_labels_out.empty()) save_pgm(a.train_labels_out, td.train_labels, static_cast<int>(d.num_classes));

  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log, std::ios::binary);
    if (!log) throw FormatError("cannot open log '" + a.log + "'");
    log << csv_header() << "\n";
  }
  if (!a.quiet) out << csv_header() << "\n";
  Trainer trainer(NetModel::build(cfg, init), tc, std::move(td.train), std::move(td.val));
  trainer.run([&](const EpochStats& s, const Trainer&) {
    const std::string line = csv_line(s);
    if (log.is_open()) log << line << "\n" << std::flush;
    if (!a.quiet) out << line << "\n" << std::flush;
    return true;
  });

  const nlohmann::json meta = {{"seed", seed},
                               {"init", to_string(init.scheme)},
                               {"loss", to_string(tc.loss)},
                               {"epochs_run", trainer.history().size()},
                               {"best_epoch", trainer.best_epoch()},
                               {"lr", tc.adam.lr},
                               {"batch", tc.batch},
                               {"window", a.window},
                               {"stride", a.stride},
                               {"frac_per_class", a.frac_per_class}};
  save_checkpoint(a.out, trainer.best_model(), meta);
  if (!a.quiet) out << "best epoch " << trainer.best_epoch() << " -> " << a.out << "\n";
  return kExitOk;
}

inline std::string default_ppm_path(const std::string& pgm) {
  std::filesystem::path p(pgm);
  p.replace_extension(".ppm");
  return p.string();
}

inline int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const auto ck = load_checkpoint(a.model);
  const CTensor cube = load_cvt(a.cube);
  if (cube.rank() != 3 || cube.dim(2) != ck.model.config.in_channels)
    throw ShapeError("cube must be [H,W," + std::to_string(ck.model.config.in_channels) + "], got " + shape_str(cube.shape()));
  const LabelGrid pred = predict_image(ck.model, cube);
  save_pgm(a.out, pred, static_cast<int>(ck.model.config.num_classes));
  const std::string ppm = a.ppm.empty() ? default_ppm_path(a.out) : a.ppm;
  save_ppm(ppm, pred);
  out << "prediction " << pred.height << "x" << pred.width << " -> " << a.out << ", " << ppm << "\n";
  return kExitOk;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const LabelImage pred = load_pgm(a.pred);
  const LabelImage truth = load_pgm(a.truth);
  if (pred.grid.height != truth.grid.height || pred.grid.width != truth.grid.width)
    throw ShapeError("prediction and truth differ in size");
  std::vector<std::uint8_t> mask;
  if (!a.exclude.empty()) {
    const LabelImage train = load_pgm(a.exclude);
    if (train.grid.height != truth.grid.height || train.grid.width != truth.grid.width)
      throw ShapeError("exclusion mask differs in size from truth");
    mask = heldout_mask(truth.grid, train.grid);
  }
  const std::size_t K = static_cast<std::size_t>(truth.maxval);
  // A mask with no set pixel is an empty evaluation, not "all pixels".
  if (!a.exclude.empty() && std::count(mask.begin(), mask.end(), std::uint8_t{1}) == 0)
    throw EmptyError("empty evaluation: every labeled pixel is excluded");
  const Confusion c = confusion(pred.grid, truth.grid, mask, K);
  const std::string json = metrics_json(c);
  if (!a.out.empty()) {
    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + a.out + "' for writing");
    f << json << "\n";
  }
  out << json << "\n";
  return kExitOk;
}

inline int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  GradCheckOptions o;
  o.seed = effective_seed(a.seed);
  o.width_scale = a.width_scale;
  o.f64 = a.f64;
  NetConfig probe;
  probe.set_width_scale(o.width_scale);
  probe.validate();
  struct Restore {
    bool old = testing::corrupt_conv_backward();
    ~Restore() { testing::corrupt_conv_backward() = old; }
  } restore;
  if (a.corrupt) testing::corrupt_conv_backward() = true;
  const GradCheckReport r = run_gradcheck(o);
  char line[160];
  for (const auto& e : r.entries) {
    std::snprintf(line, sizeof line, "%-34s max_rel_err %.3e  (%zu samples)%s\n", e.name.c_str(), e.max_rel_err, e.checked,
                  e.max_rel_err < r.threshold ? "" : "  FAIL");
    out << line;
  }
  std::snprintf(line, sizeof line, "%s: max_rel_err %.3e, threshold %.0e, %zu kink redraws, %.1f s\n",
                r.passed() ? "PASS" : "FAIL", r.max_rel_err(), r.threshold, r.kink_skips, r.seconds);
  out << line;
  return r.passed() ? kExitOk : kExitNumerical;
}

inline int cmd_init_stats(const InitStatsArgs& a, std::ostream& out) {
  if (a.n_samples <= 0) throw ConfigError("--n-samples must be positive");
  const auto s = init_stats(parse_init_scheme(a.scheme), a.fan_in, static_cast<std::size_t>(a.n_samples), effective_seed(a.seed));
  out << to_json(s).dump(2) << "\n";
  return kExitOk;
}

/// Parses argv and dispatches; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Complex-valued fully convolutional network for PolSAR pixel classification"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-look PolSAR scene");
  synth->add_option("--spec", sa.spec, "Scene spec JSON")->required();
  synth->add_option("--cube", sa.cube, "Output cube (CVT, [H,W,6])")->required();
  synth->add_option("--labels", sa.labels, "Output labels (PGM)")->required();
  synth->add_option("--seed", sa.seed, "Override the scene seed");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a network on a labeled cube");
  train->add_option("--cube", ta.cube, "Input cube (CVT)")->required();
  train->add_option("--labels", ta.labels, "Ground-truth labels (PGM)")->required();
  train->add_option("--out", ta.out, "Output checkpoint (CVM)")->required();
  train->add_option("--log", ta.log, "Per-epoch CSV log");
  train->add_option("--train-labels-out", ta.train_labels_out, "Write the sampled training labels (PGM)");
  train->add_option("--epochs", ta.epochs, "Epoch budget")->capture_default_str();
  train->add_option("--batch", ta.batch, "Mini-batch size")->capture_default_str();
  train->add_option("--lr", ta.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--beta1", ta.beta1, "Adam beta1")->capture_default_str();
  train->add_option("--beta2", ta.beta2, "Adam beta2")->capture_default_str();
  train->add_option("--window", ta.window, "Patch size")->capture_default_str();
  train->add_option("--stride", ta.stride, "Patch stride")->capture_default_str();
  train->add_option("--width-scale", ta.width_scale, "Channel width multiplier, e.g. 1/4")->capture_default_str();
  train->add_option("--keep-prob", ta.keep_prob, "Dropout keep probability after B6")->capture_default_str();
  train->add_option("--loss", ta.loss, "ace|cmse|cmae")->capture_default_str();
  train->add_option("--init", ta.init, "rayleigh|uniform")->capture_default_str();
  train->add_option("--frac-per-class", ta.frac_per_class, "Fraction of labeled pixels per class used for training")
      ->capture_default_str();
  train->add_option("--seed", ta.seed, "Seed (CVFCN_SEED overrides)")->capture_default_str();
  train->add_option("--threads", ta.threads, "> 1 overlaps batch assembly with compute")->capture_default_str();
  train->add_option("--overfit", ta.overfit, "Train and validate on the first N patches without dropout")
      ->capture_default_str();
  train->add_option("--patience", ta.patience, "Stop after N epochs without val-loss improvement (0 = off)")
      ->capture_default_str();
  train->add_option("--wall-time", ta.wall_time, "Log wall-clock seconds: auto (only when --threads > 1)|on|off")
      ->capture_default_str();
  train->add_flag("--no-skips", ta.no_skips, "Disable skip connections");
  train->add_flag("--no-locmaps", ta.no_locmaps, "Disable max-location maps (unpool to the window's top-left)");
  train->add_flag("--quiet", ta.quiet, "Do not echo the log to stdout");

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Dense prediction of a whole cube");
  predict->add_option("--model", pa.model, "Checkpoint (CVM)")->required();
  predict->add_option("--cube", pa.cube, "Input cube (CVT)")->required();
  predict->add_option("--out", pa.out, "Output class map (PGM)")->required();
  predict->add_option("--ppm", pa.ppm, "Colorized map (PPM); default: --out with .ppm extension");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Accuracy metrics of a class map");
  eval->add_option("--pred", ea.pred, "Predicted class map (PGM)")->required();
  eval->add_option("--truth", ea.truth, "Ground truth (PGM)")->required();
  eval->add_option("--exclude", ea.exclude, "Training labels (PGM) whose pixels are left out");
  eval->add_option("--out", ea.out, "Write metrics JSON");

  GradcheckArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference verification of every backward pass");
  grad->add_option("--seed", ga.seed, "Seed (CVFCN_SEED overrides)")->capture_default_str();
  grad->add_option("--width-scale", ga.width_scale, "Width multiplier of the whole-network check")->capture_default_str();
  grad->add_flag("--f64", ga.f64, "Analytic gradients in double precision (threshold 1e-6)");
  grad->add_flag("--corrupt-backward", ga.corrupt, "Test hook: perturb the conv weight gradient")->group("");

  InitStatsArgs ia;
  auto* istats = app.add_subcommand("init-stats", "Empirical statistics of an initialization scheme");
  istats->add_option("--scheme", ia.scheme, "rayleigh|uniform")->capture_default_str();
  istats->add_option("--fan-in", ia.fan_in, "Fan-in")->capture_default_str();
  istats->add_option("--n-samples", ia.n_samples, "Number of draws")->capture_default_str();
  istats->add_option("--seed", ia.seed, "Seed (CVFCN_SEED overrides)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(sa, out);
    if (*train) return cmd_train(ta, out);
    if (*predict) return cmd_predict(pa, out);
    if (*eval) return cmd_eval(ea, out);
    if (*grad) return cmd_gradcheck(ga, out);
    if (*istats) return cmd_init_stats(ia, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace cvfcn::cli
