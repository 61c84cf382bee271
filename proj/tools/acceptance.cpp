// Acceptance runner: checks each criterion and prints one line per criterion.
// Exit code 0 when every selected criterion passes, 3 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cvfcn/cli.hpp"
#include "cvfcn/cvfcn.hpp"

#ifndef CVFCN_SCENE_PATH
#define CVFCN_SCENE_PATH "examples/scenes/three_class_256.json"
#endif

using namespace cvfcn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::string scene = CVFCN_SCENE_PATH;
  std::size_t seeds = 5;
  bool verbose = false;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string join(const std::vector<double>& v, const char* f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(f, v[i]);
  return s;
}

// ------------------------------------------------------- synthetic training

// Shared setup of the synthetic experiments.
constexpr double kFracPerClass = 0.05;
constexpr std::size_t kWindow = 128, kStride = 40, kBatch = 8, kMaxEpochs = 50;
constexpr double kLr = 1e-3, kTargetOa = 0.95;

struct RunSpec {
  std::uint64_t seed = 1;
  InitScheme init = InitScheme::RayleighPhase;
  bool skips = true, locmaps = true;
};

struct Experiment {
  Dataset data;
  explicit Experiment(const std::string& scene) : data(synth_scene(SceneSpec::load(scene))) {}

  // Trains one network; `on_epoch(stats, trainer, heldout_mask)` returns false to stop.
  template <typename F>
  void train(const RunSpec& r, std::size_t epochs, F&& on_epoch) const {
    NetConfig cfg;
    cfg.in_channels = kInputChannels;
    cfg.num_classes = data.num_classes;
    cfg.set_width_scale("1/4");
    cfg.enable_skips = r.skips;
    cfg.enable_locmaps = r.locmaps;
    InitSpec init;
    init.scheme = r.init;
    init.seed = derive_seed(r.seed, kSeedInit);
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch = kBatch;
    tc.adam.lr = kLr;
    tc.loss = LossKind::ACE;
    tc.seed = r.seed;
    tc.record_wall_time = false;
    TrainingData td = prepare_training_data(data, kFracPerClass, kWindow, kStride, r.seed);
    const auto mask = heldout_mask(data.labels, td.train_labels);
    Trainer tr(NetModel::build(cfg, init), tc, std::move(td.train), std::move(td.val));
    tr.run([&](const EpochStats& s, const Trainer& t) { return on_epoch(s, t, mask); });
  }

  double heldout_oa(const NetModel& m, const std::vector<std::uint8_t>& mask) const {
    return overall_accuracy(evaluate_image(m, data, mask));
  }
};

// ------------------------------------------------------------- criteria

Outcome gradient_oracle(const Options&) {
  std::string detail;
  bool pass = true;
  for (bool f64 : {false, true}) {
    GradCheckOptions o;
    o.seed = 1;
    o.f64 = f64;
    const auto r = run_gradcheck(o);
    const bool ok = r.passed() && r.seconds < 60.0;
    pass = pass && ok;
    detail += fmt("%s%s max_rel_err %.2e < %.0e in %.1f s over %zu checks", detail.empty() ? "" : "; ", f64 ? "f64" : "f32",
                  r.max_rel_err(), r.threshold, r.seconds, r.entries.size());
  }
  return {pass, detail};
}

Outcome init_statistics(const Options&) {
  const auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  for (long long fan_in : {8LL, 108LL, 1728LL}) {
    const auto s = init_stats(InitScheme::RayleighPhase, fan_in, 100000, static_cast<std::uint64_t>(fan_in));
    const double var_err = std::abs(s.var - 2.0 / static_cast<double>(fan_in)) / (2.0 / static_cast<double>(fan_in));
    const double abs_err = std::abs(s.mean_abs - s.expected_mean_abs) / s.expected_mean_abs;
    const bool ok = var_err < 0.05 && abs_err < 0.02 && s.ks_pass();
    pass = pass && ok;
    detail += fmt("%sfan_in %lld: var err %.2f%%, E|W| err %.2f%%, KS %.4f < %.4f", detail.empty() ? "" : "; ", fan_in,
                  100 * var_err, 100 * abs_err, s.ks, s.ks_critical);
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < 10.0;
  return {pass, detail + fmt("; %.2f s", secs)};
}

Outcome pool_unpool_contract(const Options&) {
  Rng rng(3);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t h = 2 * (1 + rng() % 8), w = 2 * (1 + rng() % 8), c = 1 + rng() % 4, b = 1 + rng() % 2;
    CTensor x({b, h, w, c});
    for (auto& v : x.data())
      v = {static_cast<float>(2 * uniform_open01(rng) - 1), static_cast<float>(2 * uniform_open01(rng) - 1)};
    const auto [y, loc] = maxpool_forward(x, 2, 2);
    const auto u = maxunpool_forward(y, loc);
    std::vector<bool> chosen(x.size(), false);
    for (std::size_t o = 0; o < loc.index.size(); ++o) {
      const std::size_t i = loc.index[o];
      chosen[i] = true;
      // The recorded element is a maximum of its window.
      const std::size_t bi = o / (y.dim(1) * y.dim(2) * c), rem = o % (y.dim(1) * y.dim(2) * c);
      const std::size_t oh = rem / (y.dim(2) * c), ow = (rem / c) % y.dim(2), ch = rem % c;
      for (std::size_t di = 0; di < 2; ++di)
        for (std::size_t dj = 0; dj < 2; ++dj)
          if (std::norm(x(bi, 2 * oh + di, 2 * ow + dj, ch)) > std::norm(x[i])) ++bad;
    }
    for (std::size_t i = 0; i < x.size(); ++i)
      if (u[i] != (chosen[i] ? x[i] : std::complex<float>(0, 0))) ++bad;
  }
  return {bad == 0, fmt("1000 random tensors, %zu mismatches (bit-exact comparison)", bad)};
}

Outcome loss_oracle(const Options&) {
  using TD = Tensor<double>;
  using CD = std::complex<double>;
  const TargetCube<double> one{TD({1, 1, 1, 1}, {CD(1, 1)}), {1}};
  const TD half({1, 1, 1, 1}, {CD(0.5, 0.5)});
  const double ace = ace_loss(half, one).value, cmse = cmse_loss(half, one).value, cmae = cmae_loss(half, one).value;
  bool pass = std::abs(ace - std::log(2.0)) <= 1e-6 && std::abs(cmse - 0.5) <= 1e-9 && std::abs(cmae - 1.0) <= 1e-9;

  // Masked pixels: changing their outputs leaves the value and their gradient at zero.
  LabelGrid g(2, 2);
  g.labels = {1, 0, 2, 0};
  const auto t = one_hot_encode<double>(g, 2);
  TD o({1, 2, 2, 2}, {CD(.3, .6), CD(.2, .4), CD(.7, .1), CD(.5, .5), CD(.4, .2), CD(.6, .3), CD(.1, .9), CD(.8, .2)});
  TD o2 = o;
  for (std::size_t p : {1u, 3u})
    for (std::size_t k = 0; k < 2; ++k) o2[p * 2 + k] = {0.99, 0.01};
  std::size_t masked_bad = 0;
  for (auto kind : {LossKind::ACE, LossKind::CMSE, LossKind::CMAE}) {
    const auto a = compute_loss(kind, o, t), b = compute_loss(kind, o2, t);
    if (a.value != b.value) ++masked_bad;
    for (std::size_t p : {1u, 3u})
      for (std::size_t k = 0; k < 2; ++k)
        if (a.grad[p * 2 + k] != CD(0, 0) || b.grad[p * 2 + k] != CD(0, 0)) ++masked_bad;
  }
  pass = pass && masked_bad == 0;
  return {pass, fmt("ACE %.9f (ln 2 = %.9f), CMSE %.12f, CMAE %.12f, masked violations %zu", ace, std::log(2.0), cmse, cmae,
                    masked_bad)};
}

Outcome pixel_to_pixel(const Options&) {
  NetConfig cfg;
  cfg.in_channels = kInputChannels;
  cfg.num_classes = 3;
  cfg.set_width_scale("1/4");
  InitSpec init;
  init.seed = 1;
  const auto m = NetModel::build(cfg, init);
  Rng rng(5);
  auto cube = [&](std::size_t h, std::size_t w, std::size_t n) {
    CTensor x(n ? Shape{n, h, w, kInputChannels} : Shape{h, w, kInputChannels});
    for (auto& v : x.data()) v = {static_cast<float>(uniform_open01(rng)), static_cast<float>(uniform_open01(rng) - 0.5)};
    return x;
  };
  std::size_t bad = 0, sizes = 0;
  for (std::size_t s = 32; s <= 256; s += 32, ++sizes) {
    const auto y = forward(m, cube(s, s, 1), false);
    if (y.shape() != Shape{1, s, s, 3}) ++bad;
  }
  const auto pred = predict_image(m, cube(250, 250, 0));
  const bool ok250 = pred.height == 250 && pred.width == 250;
  return {bad == 0 && ok250, fmt("%zu input sizes 32..256 keep their spatial shape (%zu wrong); 250x250 cube -> %zux%zu labels",
                                 sizes, bad, pred.height, pred.width)};
}

Outcome synthetic_end_to_end(const Options& o) {
  const auto t0 = Clock::now();
  const Experiment ex(o.scene);
  double oa = 0.0;
  std::size_t epoch = 0;
  ex.train({}, kMaxEpochs, [&](const EpochStats& s, const Trainer& t, const std::vector<std::uint8_t>& mask) {
    oa = ex.heldout_oa(t.model(), mask);
    epoch = s.epoch;
    if (o.verbose) std::cerr << "  epoch " << s.epoch << " held-out OA " << fixed6(oa) << "\n";
    return oa < kTargetOa;
  });
  const double secs = seconds_since(t0);
  return {oa >= kTargetOa && secs <= 900.0,
          fmt("held-out OA %.4f at epoch %zu (target %.2f within %zu), %.0f s", oa, epoch, kTargetOa, kMaxEpochs, secs)};
}

Outcome init_speed(const Options& o) {
  const Experiment ex(o.scene);
  auto epochs_to_target = [&](InitScheme scheme, std::uint64_t seed) {
    std::size_t reached = kMaxEpochs + 1;  // not reached within the budget
    ex.train({seed, scheme}, kMaxEpochs, [&](const EpochStats& s, const Trainer&, const std::vector<std::uint8_t>&) {
      if (s.val_oa >= kTargetOa) reached = s.epoch;
      return s.val_oa < kTargetOa;
    });
    return static_cast<double>(reached);
  };
  std::vector<double> cwi1, cwi2;
  for (std::uint64_t seed = 1; seed <= o.seeds; ++seed) {
    cwi1.push_back(epochs_to_target(InitScheme::RayleighPhase, seed));
    cwi2.push_back(epochs_to_target(InitScheme::UniformParts, seed));
    if (o.verbose) std::cerr << "  seed " << seed << ": rayleigh " << cwi1.back() << ", uniform " << cwi2.back() << "\n";
  }
  const double m1 = median(cwi1), m2 = median(cwi2);
  return {m1 <= m2, fmt("median epochs to val OA %.2f: rayleigh-phase %.1f [%s] vs uniform-parts %.1f [%s]", kTargetOa, m1,
                        join(cwi1, "%.0f").c_str(), m2, join(cwi2, "%.0f").c_str())};
}

Outcome ablation_direction(const Options& o) {
  // Fixed budget; noise margin in OA for "does not exceed the full model".
  constexpr std::size_t kBudget = 8;
  constexpr double kNoise = 0.01;
  const Experiment ex(o.scene);
  auto final_oa = [&](RunSpec r) {
    double oa = 0.0;
    ex.train(r, kBudget, [&](const EpochStats& s, const Trainer& t, const std::vector<std::uint8_t>& mask) {
      if (s.epoch == kBudget) oa = ex.heldout_oa(t.model(), mask);
      return true;
    });
    return oa;
  };
  std::vector<double> full, no_skips, no_locmaps;
  for (std::uint64_t seed = 1; seed <= o.seeds; ++seed) {
    full.push_back(final_oa({seed, InitScheme::RayleighPhase, true, true}));
    no_skips.push_back(final_oa({seed, InitScheme::RayleighPhase, false, true}));
    no_locmaps.push_back(final_oa({seed, InitScheme::RayleighPhase, true, false}));
    if (o.verbose)
      std::cerr << "  seed " << seed << ": full " << full.back() << ", no-skips " << no_skips.back() << ", no-locmaps "
                << no_locmaps.back() << "\n";
  }
  const double f = median(full), s = median(no_skips), l = median(no_locmaps);
  return {s <= f + kNoise && l <= f + kNoise,
          fmt("median held-out OA after %zu epochs: full %.4f [%s], no-skips %.4f [%s], no-locmaps %.4f [%s], noise %.2f", kBudget,
              f, join(full, "%.3f").c_str(), s, join(no_skips, "%.3f").c_str(), l, join(no_locmaps, "%.3f").c_str(), kNoise)};
}

Outcome metrics_correctness(const Options&) {
  const Confusion c(2, {40, 10, 20, 30});
  const double oa = overall_accuracy(c), aa = average_accuracy(c), k = kappa(c);
  const bool pass = std::abs(oa - 0.7) < 1e-12 && std::abs(aa - 0.7) < 1e-12 && std::abs(k - 0.4) < 1e-12 &&
                    metrics_json(c).find("\"oa\":0.700000,\"aa\":0.700000,\"kappa\":0.400000") != std::string::npos;
  return {pass, fmt("[[40,10],[20,30]] -> OA %.6f, AA %.6f, kappa %.6f", oa, aa, k)};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Outcome determinism(const Options& o) {
  const fs::path dir = fs::temp_directory_path() / fmt("cvfcn_acceptance_%lld", static_cast<long long>(Clock::now().time_since_epoch().count()));
  fs::create_directories(dir);
  auto run = [](std::vector<std::string> args) {
    args.insert(args.begin(), "cvfcn");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  const std::string cube = (dir / "cube.cvt").string(), labels = (dir / "labels.pgm").string();
  int rc = run({"synth", "--spec", o.scene, "--cube", cube, "--labels", labels});
  for (const char* tag : {"a", "b"})
    if (rc == 0)
      rc = run({"train", "--cube", cube, "--labels", labels, "--out", (dir / (std::string(tag) + ".cvm")).string(), "--log",
                (dir / (std::string(tag) + ".csv")).string(), "--epochs", "2", "--batch", "8", "--lr", "1e-3", "--window", "128",
                "--stride", "40", "--width-scale", "1/4", "--frac-per-class", "0.05", "--seed", "42", "--threads", "1",
                "--quiet"});
  Outcome r;
  if (rc != 0) {
    r = {false, fmt("cli exited with %d", rc)};
  } else {
    const std::string ca = slurp(dir / "a.cvm"), cb = slurp(dir / "b.cvm"), la = slurp(dir / "a.csv"), lb = slurp(dir / "b.csv");
    r = {ca == cb && la == lb && !ca.empty() && !la.empty(),
         fmt("checkpoints %s (%zu bytes), logs %s (%zu bytes)", ca == cb ? "identical" : "differ", ca.size(),
             la == lb ? "identical" : "differ", la.size())};
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  return r;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const Options&)> check;
};

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  std::vector<int> only;
  CLI::App app{"Acceptance checks"};
  app.add_option("--only", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
  app.add_option("--scene", opt.scene, "Synthetic scene spec (JSON)")->capture_default_str();
  app.add_option("--seeds", opt.seeds, "Seeds for the multi-seed criteria")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_flag("--verbose", opt.verbose, "Per-epoch progress on stderr");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {1, "gradient oracle", gradient_oracle},
      {2, "initialization statistics", init_statistics},
      {3, "pool/unpool contract", pool_unpool_contract},
      {4, "loss oracle", loss_oracle},
      {5, "pixel-to-pixel shape", pixel_to_pixel},
      {6, "synthetic end-to-end", synthetic_end_to_end},
      {7, "rayleigh-phase init trains no slower", init_speed},
      {8, "ablation direction", ablation_direction},
      {9, "metrics correctness", metrics_correctness},
      {10, "determinism", determinism},
  };
  bool all_pass = true;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome r;
    try {
      r = c.check(opt);
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << r.detail << std::endl;
  }
  return all_pass ? 0 : 3;
}
