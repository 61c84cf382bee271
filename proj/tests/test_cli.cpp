#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cvfcn/cli.hpp"

using namespace cvfcn;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cvfcn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// Unsets CVFCN_SEED on scope exit.
struct SeedEnv {
  explicit SeedEnv(const char* v) { ::setenv("CVFCN_SEED", v, 1); }
  ~SeedEnv() { ::unsetenv("CVFCN_SEED"); }
};

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::path(::testing::TempDir()) / ("cvfcn_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    std::ofstream(p("scene.json")) << R"({"width":64,"height":64,"looks":9,"seed":3,
      "classes":[{"cov":[[[1,0],[0,0],[0,0]],[[0,0],[0.1,0],[0,0]],[[0,0],[0,0],[0.1,0]]]},
                 {"cov":[[[0.1,0],[0,0],[0,0]],[[0,0],[1,0],[0,0]],[[0,0],[0,0],[0.1,0]]]}],
      "layout":[{"class":1,"x":0,"y":0,"w":64,"h":64},{"class":2,"x":32,"y":0,"w":32,"h":64}]})";
    ASSERT_EQ(run_cli({"synth", "--spec", p("scene.json"), "--cube", p("cube.cvt"), "--labels", p("labels.pgm")}).code, 0);
  }

  static void TearDownTestSuite() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  static std::string p(const std::string& name) { return (dir_ / name).string(); }

  static std::vector<std::string> train_args(const std::string& tag) {
    return {"train", "--cube", p("cube.cvt"), "--labels", p("labels.pgm"), "--out", p(tag + ".cvm"), "--log",
            p(tag + ".csv"), "--epochs", "2", "--batch", "8", "--lr", "1e-3", "--window", "32", "--stride", "16",
            "--width-scale", "1/4", "--frac-per-class", "0.2", "--seed", "5", "--quiet", "--train-labels-out",
            p(tag + "_train.pgm")};
  }

  static inline fs::path dir_;
};

}  // namespace

TEST_F(Cli, SynthWritesCubeAndLabels) {
  const auto r = run_cli({"synth", "--spec", p("scene.json"), "--cube", p("c2.cvt"), "--labels", p("l2.pgm")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("class 1: 2048"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("class 2: 2048"), std::string::npos) << r.out;
  const auto d = load_dataset(p("c2.cvt"), p("l2.pgm"));
  EXPECT_EQ(d.cube.shape(), (Shape{64, 64, 6}));
  EXPECT_EQ(d.num_classes, 2u);
  EXPECT_EQ(slurp(p("c2.cvt")), slurp(p("cube.cvt")));
}

TEST_F(Cli, SynthSeedOverrides) {
  ASSERT_EQ(run_cli({"synth", "--spec", p("scene.json"), "--cube", p("s9.cvt"), "--labels", p("s9.pgm"), "--seed", "9"}).code, 0);
  EXPECT_NE(slurp(p("s9.cvt")), slurp(p("cube.cvt")));
  {
    SeedEnv env("9");
    ASSERT_EQ(run_cli({"synth", "--spec", p("scene.json"), "--cube", p("e9.cvt"), "--labels", p("e9.pgm"), "--seed", "4"}).code, 0);
  }
  EXPECT_EQ(slurp(p("e9.cvt")), slurp(p("s9.cvt")));
}

TEST_F(Cli, SynthErrors) {
  EXPECT_EQ(run_cli({"synth", "--spec", p("missing.json"), "--cube", p("x.cvt"), "--labels", p("x.pgm")}).code, cli::kExitConfig);
  std::ofstream(p("bad.json")) << R"({"classes":[{"cov":[[[1,0],[0,0],[0,0]],[[0,0],[-1,0],[0,0]],[[0,0],[0,0],[1,0]]]}],
    "layout":[{"class":1,"x":0,"y":0,"w":8,"h":8}]})";
  const auto r = run_cli({"synth", "--spec", p("bad.json"), "--cube", p("x.cvt"), "--labels", p("x.pgm")});
  EXPECT_NE(r.code, cli::kExitOk);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(Cli, TrainPredictEvalPipeline) {
  const auto t = run_cli(train_args("pipe"));
  ASSERT_EQ(t.code, 0) << t.err;
  const std::string log = slurp(p("pipe.csv"));
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,train_loss,val_loss,val_oa,wall_seconds");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
  EXPECT_NE(log.find("\n2,"), std::string::npos);
  const auto ck = load_checkpoint(p("pipe.cvm"));
  EXPECT_EQ(ck.meta["seed"], 5);
  EXPECT_EQ(ck.meta["epochs_run"], 2);

  const auto pr = run_cli({"predict", "--model", p("pipe.cvm"), "--cube", p("cube.cvt"), "--out", p("pred.pgm")});
  ASSERT_EQ(pr.code, 0) << pr.err;
  const auto pred = load_pgm(p("pred.pgm"));
  EXPECT_EQ(pred.grid.height, 64u);
  EXPECT_EQ(pred.grid.width, 64u);
  EXPECT_EQ(pred.maxval, 2);
  const std::string ppm = slurp(p("pred.ppm"));
  EXPECT_EQ(ppm.substr(0, 13), "P6\n64 64\n255\n");
  EXPECT_EQ(ppm.size(), 13u + 64 * 64 * 3);

  const auto ev = run_cli({"eval", "--pred", p("pred.pgm"), "--truth", p("labels.pgm"), "--exclude", p("pipe_train.pgm"),
                           "--out", p("metrics.json")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto j = nlohmann::json::parse(slurp(p("metrics.json")));
  EXPECT_TRUE(j.contains("oa") && j.contains("aa") && j.contains("kappa") && j.contains("per_class"));
  EXPECT_EQ(j["per_class"].size(), 2u);
  long long total = 0;
  for (const auto& row : j["confusion"])
    for (const auto& v : row) total += v.get<long long>();
  const auto train_labels = load_pgm(p("pipe_train.pgm"));
  long long held = 0;
  for (int l : train_labels.grid.labels) held += l == 0;
  EXPECT_EQ(total, held);
}

TEST_F(Cli, TrainLogIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(run_cli(train_args("a")).code, 0);
  ASSERT_EQ(run_cli(train_args("b")).code, 0);
  EXPECT_EQ(slurp(p("a.csv")), slurp(p("b.csv")));
  EXPECT_EQ(slurp(p("a.cvm")), slurp(p("b.cvm")));
}

TEST_F(Cli, TrainSeedEnvironmentOverridesFlag) {
  auto args = train_args("env");
  {
    SeedEnv env("11");
    ASSERT_EQ(run_cli(args).code, 0);
  }
  EXPECT_EQ(load_checkpoint(p("env.cvm")).meta["seed"], 11);
  auto flagged = train_args("flag");
  *std::find(flagged.begin(), flagged.end(), "5") = "11";
  ASSERT_EQ(run_cli(flagged).code, 0);
  EXPECT_EQ(slurp(p("env.csv")), slurp(p("flag.csv")));
  SeedEnv bad("abc");
  EXPECT_EQ(run_cli(train_args("bad")).code, cli::kExitConfig);
}

TEST_F(Cli, TrainConfigAndDataErrors) {
  auto with = [](std::vector<std::string> a, const std::string& flag, const std::string& v) {
    *(std::find(a.begin(), a.end(), flag) + 1) = v;
    return a;
  };
  const auto base = train_args("err");
  EXPECT_EQ(run_cli(with(base, "--window", "30")).code, cli::kExitConfig);
  EXPECT_EQ(run_cli(with(base, "--lr", "0")).code, cli::kExitConfig);
  EXPECT_EQ(run_cli(with(base, "--frac-per-class", "1.5")).code, cli::kExitConfig);
  EXPECT_EQ(run_cli(with(base, "--width-scale", "1/5")).code, cli::kExitConfig);
  auto hinge = base;
  hinge.insert(hinge.end(), {"--loss", "hinge"});
  EXPECT_EQ(run_cli(hinge).code, cli::kExitConfig);
  EXPECT_EQ(run_cli(with(base, "--epochs", "zero")).code, cli::kExitConfig);
  EXPECT_EQ(run_cli(with(base, "--cube", p("missing.cvt"))).code, cli::kExitData);
  std::ofstream(p("garbage.cvt")) << "NOPE";
  EXPECT_EQ(run_cli(with(base, "--cube", p("garbage.cvt"))).code, cli::kExitData);
  EXPECT_EQ(run_cli(with(base, "--window", "128")).code, cli::kExitData);
  EXPECT_EQ(run_cli({"train"}).code, cli::kExitConfig);
  EXPECT_EQ(run_cli({}).code, cli::kExitConfig);
  EXPECT_EQ(run_cli({"bogus"}).code, cli::kExitConfig);
}

TEST_F(Cli, TrainLossVariantsShareLogSchema) {
  for (const char* loss : {"cmse", "cmae"}) {
    auto a = train_args(loss);
    *(std::find(a.begin(), a.end(), "--epochs") + 1) = "1";
    a.insert(a.end(), {"--loss", loss});
    ASSERT_EQ(run_cli(a).code, 0) << loss;
    const std::string log = slurp(p(std::string(loss) + ".csv"));
    EXPECT_EQ(log.substr(0, log.find('\n')), csv_header()) << loss;
  }
}

TEST_F(Cli, EvalErrors) {
  LabelGrid all(64, 64);
  all.labels = load_pgm(p("labels.pgm")).grid.labels;
  save_pgm(p("all_train.pgm"), all, 2);
  const auto r = run_cli({"eval", "--pred", p("labels.pgm"), "--truth", p("labels.pgm"), "--exclude", p("all_train.pgm")});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("empty"), std::string::npos) << r.err;
  save_pgm(p("small.pgm"), LabelGrid(4, 4), 2);
  EXPECT_EQ(run_cli({"eval", "--pred", p("small.pgm"), "--truth", p("labels.pgm")}).code, cli::kExitData);
  const auto ok = run_cli({"eval", "--pred", p("labels.pgm"), "--truth", p("labels.pgm")});
  ASSERT_EQ(ok.code, 0);
  EXPECT_EQ(nlohmann::json::parse(ok.out)["oa"], 1.0);
}

TEST_F(Cli, PredictRejectsWrongCube) {
  ASSERT_EQ(run_cli(train_args("pw")).code, 0);
  save_cvt(p("bad_cube.cvt"), CTensor({8, 8, 3}));
  EXPECT_EQ(run_cli({"predict", "--model", p("pw.cvm"), "--cube", p("bad_cube.cvt"), "--out", p("x.pgm")}).code,
            cli::kExitData);
  EXPECT_EQ(run_cli({"predict", "--model", p("missing.cvm"), "--cube", p("cube.cvt"), "--out", p("x.pgm")}).code,
            cli::kExitData);
}

TEST_F(Cli, InitStatsJson) {
  const auto r = run_cli({"init-stats", "--scheme", "rayleigh", "--fan-in", "108", "--n-samples", "200000", "--seed", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["fan_in"], 108);
  EXPECT_NEAR(j["var"].get<double>(), 2.0 / 108, 0.05 * 2.0 / 108);
  EXPECT_EQ(run_cli({"init-stats", "--fan-in", "0"}).code, cli::kExitConfig);
  EXPECT_EQ(run_cli({"init-stats", "--scheme", "zeros"}).code, cli::kExitConfig);
}

TEST_F(Cli, GradcheckPassesAndDetectsCorruption) {
  const auto ok = run_cli({"gradcheck", "--f64", "--seed", "3"});
  EXPECT_EQ(ok.code, cli::kExitOk) << ok.out;
  EXPECT_NE(ok.out.find("PASS"), std::string::npos);
  const auto bad = run_cli({"gradcheck", "--f64", "--seed", "3", "--corrupt-backward"});
  EXPECT_EQ(bad.code, cli::kExitNumerical);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
  EXPECT_FALSE(cvfcn::testing::corrupt_conv_backward());
  EXPECT_EQ(run_cli({"gradcheck", "--width-scale", "1/5"}).code, cli::kExitConfig);
}
