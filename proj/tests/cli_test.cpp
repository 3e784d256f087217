// Drives the installed command-line binary end to end. The binary path
// arrives as argv[1], wired up by the build so `ctest` runs the freshly
// built tool.
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_cli;

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run_cli(const std::string& args) {
  RunResult r;
  const std::string cmd = g_cli + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) {
    r.output = "popen failed";
    return r;
  }
  std::array<char, 4096> buf;
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0)
    r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

json slurp_json(const fs::path& p) { return json::parse(slurp(p)); }

class CliCase : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_FALSE(g_cli.empty()) << "binary path missing: pass it as argv[1]";
    dir_ = fs::temp_directory_path() /
           ("loadrec_cli_test_" + std::string(::testing::UnitTest::GetInstance()
                                                  ->current_test_info()
                                                  ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string quoted(const fs::path& p) const { return "'" + p.string() + "'"; }

  // Small evening scenario whose recovery converges quickly at this weight.
  void make_bundle(const fs::path& where, const std::string& extra = "") {
    const RunResult r = run_cli(
        "synth --case winter-night --seed 3 --houses 8 --pv 0 --ev 2 "
        "--horizon 60 --out " +
        quoted(where) + (extra.empty() ? "" : " " + extra));
    ASSERT_EQ(r.code, 0) << r.output;
  }

  fs::path dir_;
};

TEST_F(CliCase, VersionFlagPrintsSemverAndExitsClean) {
  const RunResult r = run_cli("--version");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("1.0.0"), std::string::npos);
}

TEST_F(CliCase, HelpExitsClean) {
  EXPECT_EQ(run_cli("--help").code, 0);
  EXPECT_EQ(run_cli("recover --help").code, 0);
}

TEST_F(CliCase, MissingSubcommandIsUsageError) {
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
}

TEST_F(CliCase, EndToEndPipeline) {
  const fs::path scn = dir_ / "scn";
  const fs::path run = dir_ / "run";
  const fs::path ev = dir_ / "eval";
  const fs::path plots = dir_ / "plots";
  make_bundle(scn);
  for (const char* f :
       {"P.csv", "L_true.csv", "S_true.csv", "events.csv", "pv_profile.csv",
        "spec.json", "config.json"})
    EXPECT_TRUE(fs::exists(scn / f)) << f;

  const RunResult rec = run_cli("recover --bundle " + quoted(scn) +
                                " --noise-seed 3 --lambda 0.05 --out " +
                                quoted(run));
  ASSERT_EQ(rec.code, 0) << rec.output;
  for (const char* f : {"K_hat.csv", "D_hat.csv", "P_hat.csv", "L_hat.csv",
                        "Y.csv", "z.csv", "support.csv", "report.json",
                        "trace.csv", "config.json"})
    EXPECT_TRUE(fs::exists(run / f)) << f;
  const json rep = slurp_json(run / "report.json");
  EXPECT_TRUE(rep.at("converged").get<bool>());
  EXPECT_TRUE(rep.at("postprocessed").get<bool>());
  EXPECT_FALSE(rep.at("used_step1_fallback").get<bool>());
  EXPECT_DOUBLE_EQ(rep.at("lambda").get<double>(), 0.05);
  EXPECT_GT(rep.at("iterations").get<int>(), 0);
  EXPECT_FALSE(rep.contains("wall_time"));  // reruns stay byte-identical

  const RunResult evr = run_cli("eval --run " + quoted(run) + " --bundle " +
                                quoted(scn) + " --out " + quoted(ev));
  ASSERT_EQ(evr.code, 0) << evr.output;
  EXPECT_TRUE(fs::exists(ev / "metrics.csv"));
  EXPECT_TRUE(fs::exists(ev / "roc.csv"));
  const std::string metrics = slurp(ev / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')),
            "p_rel_err,l_rel_err,d_rel_err,support_precision,support_recall,"
            "l_rank,pattern_score,auc,hf_energy_hat,hf_energy_true,"
            "left_coherence,right_coherence,support_autocorr_peak,"
            "support_autocorr_lag,d_true_rank");

  const RunResult plt = run_cli("plot --run " + quoted(run) + " --bundle " +
                                quoted(scn) + " --figure ev-profile --house 2 " +
                                "--out " + quoted(plots));
  ASSERT_EQ(plt.code, 0) << plt.output;
  EXPECT_TRUE(fs::exists(plots / "ev-profile.csv"));
  EXPECT_TRUE(fs::exists(plots / "ev-profile.svg"));
  const json man = slurp_json(plots / "manifest.json");
  EXPECT_TRUE(man.at("figures").contains("ev-profile"));
  EXPECT_EQ(man["figures"]["ev-profile"]["house"].get<int>(), 2);
}

TEST_F(CliCase, RecoveryRerunsAreByteIdentical) {
  const fs::path scn = dir_ / "scn";
  make_bundle(scn);
  const std::string args = "recover --bundle " + quoted(scn) +
                           " --noise-seed 3 --lambda 0.05 --out ";
  ASSERT_EQ(run_cli(args + quoted(dir_ / "run1")).code, 0);
  ASSERT_EQ(run_cli(args + quoted(dir_ / "run2")).code, 0);
  for (const char* f : {"K_hat.csv", "D_hat.csv", "P_hat.csv", "L_hat.csv",
                        "Y.csv", "z.csv", "support.csv", "report.json",
                        "trace.csv"})
    EXPECT_EQ(slurp(dir_ / "run1" / f), slurp(dir_ / "run2" / f)) << f;
}

TEST_F(CliCase, SkipPostprocessLeavesStepOneOutputs) {
  const fs::path scn = dir_ / "scn";
  make_bundle(scn);
  const RunResult rec = run_cli("recover --bundle " + quoted(scn) +
                                " --noise-seed 3 --lambda 0.05 "
                                "--skip-postprocess --out " +
                                quoted(dir_ / "run"));
  ASSERT_EQ(rec.code, 0) << rec.output;
  EXPECT_FALSE(fs::exists(dir_ / "run" / "support.csv"));
  const json rep = slurp_json(dir_ / "run" / "report.json");
  EXPECT_FALSE(rep.at("postprocessed").get<bool>());
}

TEST_F(CliCase, StarvedSolverSignalsNonConvergenceButWritesOutputs) {
  const fs::path scn = dir_ / "scn";
  make_bundle(scn);
  const RunResult rec = run_cli("recover --bundle " + quoted(scn) +
                                " --noise-seed 3 --max-iters 40 --out " +
                                quoted(dir_ / "run"));
  EXPECT_EQ(rec.code, 3) << rec.output;
  ASSERT_TRUE(fs::exists(dir_ / "run" / "report.json"));
  const json rep = slurp_json(dir_ / "run" / "report.json");
  EXPECT_FALSE(rep.at("converged").get<bool>());
  EXPECT_TRUE(rep.at("used_step1_fallback").get<bool>());
  EXPECT_TRUE(fs::exists(dir_ / "run" / "K_hat.csv"));
}

TEST_F(CliCase, ConfigFileSuppliesDefaultsAndFlagsWin) {
  const fs::path scn = dir_ / "scn";
  make_bundle(scn);
  {
    std::ofstream out(dir_ / "cfg.json");
    out << R"({"lambda": 0.5, "max_iters": 60, "noise_seed": 3})" << "\n";
  }
  const std::string base = "recover --bundle " + quoted(scn) + " --config " +
                           quoted(dir_ / "cfg.json") + " --out ";
  run_cli(base + quoted(dir_ / "runA"));
  const json repA = slurp_json(dir_ / "runA" / "report.json");
  EXPECT_DOUBLE_EQ(repA.at("lambda").get<double>(), 0.5);
  EXPECT_LE(repA.at("iterations").get<int>(), 60);

  run_cli(base + quoted(dir_ / "runB") + " --lambda 0.25");
  const json repB = slurp_json(dir_ / "runB" / "report.json");
  EXPECT_DOUBLE_EQ(repB.at("lambda").get<double>(), 0.25);
}

TEST_F(CliCase, DefaultWeightMatchesExplicitValueAtAnchorHorizon) {
  // 420-minute horizon: the horizon-scaled default weight equals 0.05, so an
  // explicit --lambda 0.05 must reproduce the default run exactly.
  const fs::path scn = dir_ / "scn";
  const RunResult sr = run_cli(
      "synth --case winter-night --seed 1 --houses 4 --pv 0 --ev 1 "
      "--horizon 420 --out " +
      quoted(scn));
  ASSERT_EQ(sr.code, 0) << sr.output;
  const std::string base = "recover --bundle " + quoted(scn) +
                           " --noise-seed 1 --max-iters 50 --out ";
  run_cli(base + quoted(dir_ / "runA"));
  run_cli(base + quoted(dir_ / "runB") + " --lambda 0.05");
  const json repA = slurp_json(dir_ / "runA" / "report.json");
  const json repB = slurp_json(dir_ / "runB" / "report.json");
  EXPECT_DOUBLE_EQ(repA.at("lambda").get<double>(), 0.05);
  EXPECT_EQ(slurp(dir_ / "runA" / "K_hat.csv"), slurp(dir_ / "runB" / "K_hat.csv"));
  EXPECT_EQ(repA.at("objective").get<double>(), repB.at("objective").get<double>());
}

TEST_F(CliCase, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli("synth --case autumn --out " + quoted(dir_ / "x")).code, 2);
  EXPECT_EQ(run_cli("recover --out " + quoted(dir_ / "x")).code, 2);
  EXPECT_EQ(run_cli("eval --out " + quoted(dir_ / "x")).code, 2);
  EXPECT_EQ(run_cli("synth --case winter-day").code, 2);  // --out is required
}

TEST_F(CliCase, UnknownFigureListsValidIds) {
  const fs::path scn = dir_ / "scn";
  make_bundle(scn);
  const RunResult r =
      run_cli("plot --run " + quoted(dir_ / "scn") + " --bundle " + quoted(scn) +
              " --figure sine --out " + quoted(dir_ / "p"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("ev-profile"), std::string::npos);
  EXPECT_NE(r.output.find("irradiance"), std::string::npos);
}

TEST_F(CliCase, IoFailuresExitFour) {
  EXPECT_EQ(run_cli("recover --bundle " + quoted(dir_ / "missing") + " --out " +
                    quoted(dir_ / "x"))
                .code,
            4);
  {
    std::ofstream out(dir_ / "bad.csv");
    out << "lonely-header\n";
  }
  EXPECT_EQ(run_cli("recover --load " + quoted(dir_ / "bad.csv") + " --out " +
                    quoted(dir_ / "x"))
                .code,
            4);
}

TEST_F(CliCase, IrradianceFigureNeedsAPvBundle) {
  const fs::path scn = dir_ / "scn";
  const fs::path run = dir_ / "run";
  const RunResult sr = run_cli(
      "synth --case winter-day --seed 3 --houses 6 --pv 3 --ev 1 "
      "--horizon 60 --out " +
      quoted(scn));
  ASSERT_EQ(sr.code, 0) << sr.output;
  // A shallow run is enough: the figure reads files, not the report.
  run_cli("recover --bundle " + quoted(scn) +
          " --noise-seed 3 --max-iters 200 --out " + quoted(run));
  ASSERT_TRUE(fs::exists(run / "L_hat.csv"));
  const RunResult plt =
      run_cli("plot --run " + quoted(run) + " --bundle " + quoted(scn) +
              " --figure irradiance --out " + quoted(dir_ / "p"));
  ASSERT_EQ(plt.code, 0) << plt.output;
  EXPECT_TRUE(fs::exists(dir_ / "p" / "irradiance.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "p" / "irradiance.svg"));

  // The evening bundle carries no irradiance, so the same figure is refused.
  const fs::path night = dir_ / "night";
  make_bundle(night);
  run_cli("recover --bundle " + quoted(night) +
          " --noise-seed 3 --max-iters 40 --out " + quoted(dir_ / "nrun"));
  const RunResult bad =
      run_cli("plot --run " + quoted(dir_ / "nrun") + " --bundle " +
              quoted(night) + " --figure irradiance --out " + quoted(dir_ / "q"));
  EXPECT_EQ(bad.code, 2);
}

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  if (argc > 1) g_cli = argv[1];
  return RUN_ALL_TESTS();
}
