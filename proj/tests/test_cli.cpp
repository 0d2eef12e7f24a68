#include "tsf/cli.hpp"

#include "tsf/train.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace tsf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& text) {
  std::size_t lines = 0;
  for (char c : text) {
    if (c == '\n') ++lines;
  }
  return lines;
}

int cli(std::initializer_list<std::string> args) {
  return run_cli(std::vector<std::string>(args));
}

}  // namespace

TEST_CASE("synth writes header plus T rows") {
  TempDir dir("tsf_cli_synth");
  const std::string out = dir.file("s.csv");
  CHECK(cli({"synth", "--kind", "sine_mix", "--T", "2000", "--n", "3", "--seed",
             "7", "--out", out}) == 0);
  CHECK(line_count(slurp(out)) == 2001);
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(cli({}) == 1);
  CHECK(cli({"frobnicate"}) == 1);
  CHECK(cli({"synth", "--no-such-flag", "1"}) == 1);
  CHECK(cli({"synth", "--T", "abc"}) == 1);
  CHECK(cli({"synth"}) == 1);               // missing --out
  CHECK(cli({"train", "--model", "x"}) == 1);
  CHECK(cli({"eval"}) == 1);                // missing --checkpoint
}

TEST_CASE("runtime failures exit with code 2") {
  CHECK(cli({"eval", "--checkpoint", "/nonexistent.json", "--data",
             "/nonexistent.csv"}) == 2);
  CHECK(cli({"train", "--data", "/nonexistent.csv"}) == 2);
}

TEST_CASE("train, eval, bench and report flow end to end") {
  TempDir dir("tsf_cli_flow");
  const std::string csv = dir.file("series.csv");
  REQUIRE(cli({"synth", "--kind", "sine_mix", "--T", "160", "--n", "1", "--seed",
               "5", "--out", csv}) == 0);

  const std::string run_dir = dir.file("run");
  CHECK(cli({"train", "--model", "mlinear", "--data", csv, "--L", "8", "--S", "4",
             "--max-epochs", "2", "--seed", "11", "--run-dir", run_dir}) == 0);
  CHECK(fs::exists(run_dir + "/checkpoint.json"));
  CHECK(fs::exists(run_dir + "/report.json"));
  CHECK(fs::exists(run_dir + "/summary.txt"));
  CHECK(fs::exists(run_dir + "/curves.csv"));
  CHECK(!fs::exists(run_dir + "/.lock"));  // released on exit

  const RunReport report = RunReport::load(run_dir + "/report.json");
  CHECK(std::isfinite(report.test_normalized.mse));
  CHECK(std::isfinite(report.test_normalized.mae));
  // Per-epoch curve rows match the trained epoch count (plus header).
  CHECK(line_count(slurp(run_dir + "/curves.csv")) ==
        static_cast<std::size_t>(report.epochs_run) + 1);

  const std::string eval_json = dir.file("eval.json");
  CHECK(cli({"eval", "--checkpoint", run_dir + "/checkpoint.json", "--data", csv,
             "--split", "test", "--out", eval_json}) == 0);
  CHECK(slurp(eval_json).find("\"mse\"") != std::string::npos);

  // The summary lists the config echo, best epoch and test metrics.
  const std::string summary_before = slurp(run_dir + "/summary.txt");
  CHECK(summary_before.find("model: mlinear") != std::string::npos);
  CHECK(summary_before.find("L=8 S=4") != std::string::npos);
  CHECK(summary_before.find("best epoch") != std::string::npos);
  CHECK(summary_before.find("test mse/mae") != std::string::npos);

  // Re-running report is byte-idempotent.
  const std::string curves_before = slurp(run_dir + "/curves.csv");
  CHECK(cli({"report", "--run-dir", run_dir}) == 0);
  CHECK(slurp(run_dir + "/summary.txt") == summary_before);
  CHECK(slurp(run_dir + "/curves.csv") == curves_before);
}

TEST_CASE("bench reports zero reuse measurement for an informer checkpoint") {
  TempDir dir("tsf_cli_bench");
  const std::string csv = dir.file("series.csv");
  REQUIRE(cli({"synth", "--kind", "sine_mix", "--T", "160", "--n", "1", "--seed",
               "3", "--out", csv}) == 0);
  const std::string run_dir = dir.file("run");
  REQUIRE(cli({"train", "--model", "informer_lite", "--data", csv, "--L", "8",
               "--S", "2", "--label-len", "4", "--d-model", "4", "--heads", "2",
               "--u-factor", "1", "--sample-factor", "2", "--max-epochs", "1",
               "--batch-size", "16", "--seed", "13", "--run-dir", run_dir}) == 0);

  const std::string bench_json = dir.file("bench.json");
  CHECK(cli({"bench", "--checkpoint", run_dir + "/checkpoint.json", "--data", csv,
             "--split", "test", "--out", bench_json}) == 0);
  const std::string text = slurp(bench_json);
  const auto reuse_pos = text.find("\"reuse\"");
  REQUIRE(reuse_pos != std::string::npos);
  CHECK(text.find("\"measurement_dot_products\": 0", reuse_pos) != std::string::npos);

  // Reuse-mode evaluation works through the eval subcommand too.
  CHECK(cli({"eval", "--checkpoint", run_dir + "/checkpoint.json", "--data", csv,
             "--split", "val"}) == 0);
}

TEST_CASE("config file applies under flags and rejects unknown keys") {
  TempDir dir("tsf_cli_config");
  const std::string csv = dir.file("series.csv");
  REQUIRE(cli({"synth", "--kind", "sine_mix", "--T", "160", "--n", "1", "--seed",
               "5", "--out", csv}) == 0);

  const std::string config = dir.file("overrides.cfg");
  {
    std::ofstream out(config);
    out << "# options for the smoke run\n"
        << "L=8\n"
        << "max-epochs=1\n"
        << "S = 4\n";
  }
  const std::string run_dir = dir.file("run");
  // --L on the command line beats L= in the file; S comes from the file.
  CHECK(cli({"train", "--model", "mlinear", "--data", csv, "--config", config,
             "--L", "12", "--run-dir", run_dir}) == 0);
  const RunReport report = RunReport::load(run_dir + "/report.json");
  CHECK(report.model.lookback == 12);
  CHECK(report.model.horizon == 4);
  CHECK(report.config.max_epochs == 1);
  CHECK(report.epochs_run == 1);

  const std::string bad = dir.file("bad.cfg");
  {
    std::ofstream out(bad);
    out << "no-such-key=1\n";
  }
  CHECK(cli({"train", "--model", "mlinear", "--data", csv, "--config", bad}) == 1);
}

TEST_CASE("concurrent runs on one directory are refused via the lock file") {
  TempDir dir("tsf_cli_lock");
  const std::string csv = dir.file("series.csv");
  REQUIRE(cli({"synth", "--kind", "sine_mix", "--T", "160", "--n", "1", "--seed",
               "5", "--out", csv}) == 0);
  const std::string run_dir = dir.file("run");
  fs::create_directories(run_dir);
  std::ofstream(run_dir + "/.lock") << "held\n";
  CHECK(cli({"train", "--model", "mlinear", "--data", csv, "--L", "8", "--S", "4",
             "--max-epochs", "1", "--run-dir", run_dir}) == 2);
}

TEST_CASE("TSF_RUN_ROOT supplies the default run directory root") {
  TempDir dir("tsf_cli_root");
  const std::string csv = dir.file("series.csv");
  REQUIRE(cli({"synth", "--kind", "sine_mix", "--T", "160", "--n", "1", "--seed",
               "5", "--out", csv}) == 0);
  const std::string root = dir.file("root");
  setenv("TSF_RUN_ROOT", root.c_str(), 1);
  CHECK(cli({"train", "--model", "mlinear", "--data", csv, "--L", "8", "--S", "4",
             "--max-epochs", "1", "--seed", "77"}) == 0);
  unsetenv("TSF_RUN_ROOT");
  REQUIRE(fs::exists(root));
  std::size_t runs = 0;
  for (const auto& entry : fs::directory_iterator(root)) {
    ++runs;
    CHECK(fs::exists(entry.path() / "checkpoint.json"));
    CHECK(entry.path().filename().string().find("seed77") != std::string::npos);
  }
  CHECK(runs == 1);
}

TEST_CASE("identical config and seed reproduce artifacts byte for byte") {
  TempDir dir("tsf_cli_repro");
  const std::string csv = dir.file("series.csv");
  REQUIRE(cli({"synth", "--kind", "sine_mix", "--T", "160", "--n", "1", "--seed",
               "5", "--out", csv}) == 0);
  const std::string run_a = dir.file("run_a");
  const std::string run_b = dir.file("run_b");
  for (const std::string& rd : {run_a, run_b}) {
    REQUIRE(cli({"train", "--model", "mlinear", "--data", csv, "--L", "8", "--S",
                 "4", "--max-epochs", "2", "--seed", "21", "--run-dir", rd}) == 0);
  }
  // checkpoint, summary and curves carry no wall-clock fields at all.
  CHECK(slurp(run_a + "/checkpoint.json") == slurp(run_b + "/checkpoint.json"));
  CHECK(slurp(run_a + "/summary.txt") == slurp(run_b + "/summary.txt"));
  CHECK(slurp(run_a + "/curves.csv") == slurp(run_b + "/curves.csv"));

  // Re-running synth reproduces the CSV bytes too.
  const std::string csv2 = dir.file("series2.csv");
  REQUIRE(cli({"synth", "--kind", "sine_mix", "--T", "160", "--n", "1", "--seed",
               "5", "--out", csv2}) == 0);
  CHECK(slurp(csv) == slurp(csv2));
}
