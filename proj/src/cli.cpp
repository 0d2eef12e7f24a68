#include "tsf/cli.hpp"

#include "tsf/checkpoint.hpp"
#include "tsf/data.hpp"
#include "tsf/train.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

namespace tsf {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] void usage_fail(const std::string& msg) { throw UsageError(msg); }

// Round-trip-exact double formatting for the machine-readable files.
std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

long parse_long(const std::string& key, const std::string& text) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    usage_fail(strcat("--", key, ": expected an integer, got '", text, "'"));
  }
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    usage_fail(strcat("--", key, ": expected a number, got '", text, "'"));
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  usage_fail(strcat("--", key, ": expected true/false, got '", text, "'"));
}

std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) usage_fail(strcat("--", key, ": expected a comma-separated list"));
  return out;
}

struct Option {
  std::string help;
  bool is_flag = false;  // bare --key means "true"
  std::function<void(const std::string&)> apply;
};

// Everything the subcommands need, filled from defaults, then config file,
// then flags.
struct CliState {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  std::string data_path;
  std::string out_path;
  std::string checkpoint_path;
  std::string run_dir;
  std::string config_path;
  std::string split = "test";
  std::string timestamps = "auto";  // auto|yes|no
  bool forward_fill = false;
};

std::map<std::string, Option> build_options(CliState& st) {
  std::map<std::string, Option> opts;
  auto add = [&](const std::string& key, const std::string& help,
                 std::function<void(const std::string&)> apply, bool is_flag = false) {
    opts[key] = Option{help, is_flag, std::move(apply)};
  };

  // Model family and architecture.
  add("model", "model kind: informer_lite|mlinear",
      [&](const std::string& v) { st.model.kind = model_kind_from_string(v); });
  add("L", "lookback window length",
      [&](const std::string& v) { st.model.lookback = parse_long("L", v); });
  add("S", "forecast horizon length",
      [&](const std::string& v) { st.model.horizon = parse_long("S", v); });
  add("label-len", "decoder start tokens (default L/2)",
      [&](const std::string& v) { st.model.label_len = parse_long("label-len", v); });
  add("d-model", "model width",
      [&](const std::string& v) { st.model.d_model = parse_long("d-model", v); });
  add("heads", "attention heads",
      [&](const std::string& v) { st.model.n_heads = parse_long("heads", v); });
  add("u-factor", "top-u factor: u = ceil(u_factor * ln L_Q)",
      [&](const std::string& v) { st.model.u_factor = parse_double("u-factor", v); });
  add("sample-factor", "key sample factor",
      [&](const std::string& v) { st.model.sample_factor = parse_double("sample-factor", v); });
  add("P", "mixing head divisor: d_k = max(1, S/P)",
      [&](const std::string& v) { st.model.p_factor = parse_long("P", v); });
  add("mapping", "mixing maps: sequence_mix|feature_mix",
      [&](const std::string& v) { st.model.mapping = mapping_kind_from_string(v); });
  add("attention", "self-attention kind: sparse|full", [&](const std::string& v) {
    if (v == "sparse") st.model.attention = AttentionKind::sparse;
    else if (v == "full") st.model.attention = AttentionKind::full;
    else usage_fail(strcat("--attention: expected sparse|full, got '", v, "'"));
  });

  // Training protocol.
  add("lr0", "initial learning rate",
      [&](const std::string& v) { st.train.lr0 = parse_double("lr0", v); });
  add("lr-decay", "per-epoch learning-rate factor",
      [&](const std::string& v) { st.train.lr_decay = parse_double("lr-decay", v); });
  add("batch-size", "minibatch size",
      [&](const std::string& v) { st.train.batch_size = static_cast<int>(parse_long("batch-size", v)); });
  add("patience", "early-stopping patience",
      [&](const std::string& v) { st.train.patience = static_cast<int>(parse_long("patience", v)); });
  add("max-epochs", "epoch cap",
      [&](const std::string& v) { st.train.max_epochs = static_cast<int>(parse_long("max-epochs", v)); });
  add("beta1", "adam beta1",
      [&](const std::string& v) { st.train.adam_beta1 = parse_double("beta1", v); });
  add("beta2", "adam beta2",
      [&](const std::string& v) { st.train.adam_beta2 = parse_double("beta2", v); });
  add("eps", "adam epsilon",
      [&](const std::string& v) { st.train.adam_eps = parse_double("eps", v); });
  add("loss", "loss kind: m_loss|huber|mae|mse",
      [&](const std::string& v) { st.train.loss.kind = loss_kind_from_string(v); });
  add("sigma", "loss band threshold",
      [&](const std::string& v) { st.train.loss.sigma = parse_double("sigma", v); });
  add("deep-supervision", "supervise CI and CD heads as well",
      [&](const std::string& v) { st.train.deep_supervision = parse_bool("deep-supervision", v); },
      /*is_flag=*/true);
  add("loss-weights", "comma list: ci,cd,mix term weights", [&](const std::string& v) {
    const auto w = parse_double_list("loss-weights", v);
    if (w.size() != 3) usage_fail("--loss-weights: expected exactly three values");
    st.train.loss_weights = {w[0], w[1], w[2]};
  });
  add("grad-clip", "global-norm gradient clip (0 = off)",
      [&](const std::string& v) { st.train.grad_clip = parse_double("grad-clip", v); });
  add("stride", "window stride",
      [&](const std::string& v) { st.train.stride = parse_long("stride", v); });
  add("metrics-scale", "normalized|raw default metric scale", [&](const std::string& v) {
    if (v == "normalized") st.train.normalized_metrics = true;
    else if (v == "raw") st.train.normalized_metrics = false;
    else usage_fail(strcat("--metrics-scale: expected normalized|raw, got '", v, "'"));
  });
  add("warmup-exclude", "drop epoch-0 records from index aggregation",
      [&](const std::string& v) { st.train.warmup_exclude = parse_bool("warmup-exclude", v); },
      /*is_flag=*/true);
  add("agg-mode", "index aggregation: frequency|eq3_mean", [&](const std::string& v) {
    if (v == "frequency") st.train.aggregation = AggregationMode::frequency;
    else if (v == "eq3_mean") st.train.aggregation = AggregationMode::eq3_mean;
    else usage_fail(strcat("--agg-mode: expected frequency|eq3_mean, got '", v, "'"));
  });
  add("seed", "master seed for every stochastic choice", [&](const std::string& v) {
    const long s = parse_long("seed", v);
    st.train.seed = static_cast<std::uint64_t>(s);
    st.model.seed = static_cast<std::uint64_t>(s);
    st.synth.seed = static_cast<std::uint64_t>(s);
  });

  // Data and files.
  add("data", "input CSV path",
      [&](const std::string& v) { st.data_path = v; });
  add("out", "output path (synth CSV / eval or bench JSON)",
      [&](const std::string& v) { st.out_path = v; });
  add("checkpoint", "checkpoint path",
      [&](const std::string& v) { st.checkpoint_path = v; });
  add("run-dir", "run directory (default: $TSF_RUN_ROOT/<timestamp>-seed<seed>)",
      [&](const std::string& v) { st.run_dir = v; });
  add("config", "key=value override file",
      [&](const std::string& v) { st.config_path = v; });
  add("split", "which split: train|val|test", [&](const std::string& v) {
    if (v != "train" && v != "val" && v != "test") {
      usage_fail(strcat("--split: expected train|val|test, got '", v, "'"));
    }
    st.split = v;
  });
  add("timestamps", "first CSV column is a date: auto|yes|no", [&](const std::string& v) {
    if (v != "auto" && v != "yes" && v != "no") {
      usage_fail(strcat("--timestamps: expected auto|yes|no, got '", v, "'"));
    }
    st.timestamps = v;
  });
  add("forward-fill", "forward-fill empty CSV cells",
      [&](const std::string& v) { st.forward_fill = parse_bool("forward-fill", v); },
      /*is_flag=*/true);

  // Synthetic data.
  add("kind", "synthetic kind: sine_mix|trend_season|random_walk",
      [&](const std::string& v) { st.synth.kind = synth_kind_from_string(v); });
  add("T", "synthetic row count",
      [&](const std::string& v) { st.synth.rows = parse_long("T", v); });
  add("n", "synthetic channel count",
      [&](const std::string& v) { st.synth.channels = parse_long("n", v); });
  add("noise", "synthetic noise amplitude",
      [&](const std::string& v) { st.synth.noise = parse_double("noise", v); });
  add("periods", "comma list of sine periods",
      [&](const std::string& v) { st.synth.periods = parse_double_list("periods", v); });
  add("amplitudes", "comma list of sine amplitudes",
      [&](const std::string& v) { st.synth.amplitudes = parse_double_list("amplitudes", v); });

  return opts;
}

void apply_option(std::map<std::string, Option>& opts, const std::string& key,
                  const std::string& value, const char* source) {
  auto it = opts.find(key);
  if (it == opts.end()) {
    usage_fail(strcat("unknown ", source, " key '", key, "'"));
  }
  try {
    it->second.apply(value);
  } catch (const UsageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    // Domain parsers reject bad values; that is a usage problem here.
    usage_fail(strcat("--", key, ": ", e.what()));
  }
}

void apply_config_file(std::map<std::string, Option>& opts, const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) usage_fail(strcat("--config: cannot open '", path, "'"));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      usage_fail(strcat("config ", path, ":", line_no, ": expected key=value"));
    }
    auto strip = [](std::string s) {
      const auto sb = s.find_first_not_of(" \t");
      if (sb == std::string::npos) return std::string();
      const auto se = s.find_last_not_of(" \t");
      return s.substr(sb, se - sb + 1);
    };
    apply_option(opts, strip(line.substr(0, eq)), strip(line.substr(eq + 1)), "config");
  }
}

SeriesFrame load_input(const CliState& st) {
  if (st.data_path.empty()) usage_fail("--data is required");
  bool has_ts = false;
  if (st.timestamps == "yes") {
    has_ts = true;
  } else if (st.timestamps == "auto") {
    std::ifstream probe(st.data_path);
    std::string header;
    if (probe.good() && std::getline(probe, header)) {
      has_ts = header.rfind("date,", 0) == 0 || header.rfind("\"date\",", 0) == 0;
    }
  }
  return load_csv(st.data_path, has_ts, st.forward_fill);
}

SeriesFrame pick_split(const CliState& st, const SeriesFrame& frame) {
  EttSplit split = split_ett(frame);
  if (st.split == "train") return split.train;
  if (st.split == "val") return split.val;
  return split.test;
}

// One run per directory; the lock file is created exclusively and removed on
// scope exit.
class RunDirLock {
 public:
  explicit RunDirLock(const fs::path& dir) : lock_path_(dir / ".lock") {
    const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw std::runtime_error(strcat("run directory '", dir.string(),
                                      "' is already in use (lock file present)"));
    }
    ::close(fd);
  }
  ~RunDirLock() {
    std::error_code ec;
    fs::remove(lock_path_, ec);
  }

 private:
  fs::path lock_path_;
};

fs::path resolve_run_dir(const CliState& st) {
  if (!st.run_dir.empty()) return fs::path(st.run_dir);
  const char* root_env = std::getenv("TSF_RUN_ROOT");
  const fs::path root = root_env ? fs::path(root_env) : fs::path("runs");
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
  return root / strcat(stamp, "-seed", st.train.seed);
}

int cmd_synth(const CliState& st) {
  if (st.out_path.empty()) usage_fail("synth: --out is required");
  const SeriesFrame frame = synth_generate(st.synth);
  write_csv(frame, st.out_path);
  std::cout << "wrote " << frame.rows() << " rows x " << frame.channels()
            << " channels to " << st.out_path << "\n";
  return 0;
}

int cmd_train(const CliState& st) {
  const SeriesFrame frame = load_input(st);
  const fs::path run_dir = resolve_run_dir(st);
  fs::create_directories(run_dir);
  RunDirLock lock(run_dir);

  TrainResult result = train(frame, st.model, st.train);
  result.checkpoint.save((run_dir / "checkpoint.json").string());
  result.report.save((run_dir / "report.json").string());
  emit_report(run_dir.string());

  const Metrics& m = st.train.normalized_metrics ? result.report.test_normalized
                                                 : result.report.test_raw;
  std::cout << "run dir: " << run_dir.string() << "\n"
            << "epochs run: " << result.report.epochs_run
            << " (best epoch " << result.report.best_epoch << ")\n"
            << "test mse: " << m.mse << "  mae: " << m.mae << "\n";
  return 0;
}

int cmd_eval(const CliState& st) {
  if (st.checkpoint_path.empty()) usage_fail("eval: --checkpoint is required");
  const Checkpoint ckpt = Checkpoint::load(st.checkpoint_path);
  const SeriesFrame frame = load_input(st);
  const EvalResult result = evaluate(ckpt, pick_split(st, frame), st.train.stride);
  const Metrics& m = st.train.normalized_metrics ? result.normalized : result.raw;
  std::cout << "windows: " << result.windows << "\n"
            << "mse: " << m.mse << "  mae: " << m.mae << "\n"
            << "mse_raw: " << result.raw.mse << "  mae_raw: " << result.raw.mae << "\n";
  if (!st.out_path.empty()) {
    std::ofstream out(st.out_path);
    require(out.good(), "eval: cannot open '", st.out_path, "' for writing");
    out << "{\n \"windows\": " << result.windows
        << ",\n \"mse\": " << g17(result.normalized.mse)
        << ",\n \"mae\": " << g17(result.normalized.mae)
        << ",\n \"mse_raw\": " << g17(result.raw.mse)
        << ",\n \"mae_raw\": " << g17(result.raw.mae) << "\n}\n";
  }
  return 0;
}

int cmd_bench(const CliState& st) {
  if (st.checkpoint_path.empty()) usage_fail("bench: --checkpoint is required");
  const Checkpoint ckpt = Checkpoint::load(st.checkpoint_path);
  const SeriesFrame frame = load_input(st);
  const BenchReport bench = bench_reuse(ckpt, pick_split(st, frame), st.train.stride);
  std::cout << bench.to_json_text() << "\n";
  if (!st.out_path.empty()) bench.save(st.out_path);
  if (!st.run_dir.empty()) {
    fs::create_directories(st.run_dir);
    bench.save((fs::path(st.run_dir) / "bench.json").string());
  }
  return 0;
}

int cmd_report(const CliState& st) {
  if (st.run_dir.empty()) usage_fail("report: --run-dir is required");
  emit_report(st.run_dir);
  std::ifstream summary(fs::path(st.run_dir) / "summary.txt");
  std::cout << summary.rdbuf();
  return 0;
}

}  // namespace

void emit_report(const std::string& run_dir) {
  const fs::path dir(run_dir);
  const RunReport report = RunReport::load((dir / "report.json").string());

  std::ostringstream summary;
  summary << "tsforecast run summary (" << report.version << ")\n"
          << "model: " << to_string(report.model.kind)
          << "  L=" << report.model.lookback << " S=" << report.model.horizon
          << " n=" << report.model.channels << " d_model=" << report.model.d_model
          << " heads=" << report.model.n_heads << "\n"
          << "loss: " << to_string(report.config.loss.kind)
          << " sigma=" << report.config.loss.sigma
          << (report.config.deep_supervision ? " (deep supervision)" : "") << "\n"
          << "epochs run: " << report.epochs_run
          << "  best epoch: " << report.best_epoch << "\n"
          << "test mse/mae (normalized): " << strcat(report.test_normalized.mse)
          << " / " << strcat(report.test_normalized.mae) << "\n"
          << "test mse/mae (raw): " << strcat(report.test_raw.mse) << " / "
          << strcat(report.test_raw.mae) << "\n"
          << "repeat-last baseline mse/mae: " << strcat(report.baseline_normalized.mse)
          << " / " << strcat(report.baseline_normalized.mae) << "\n"
          << "counters[train]: measurement=" << report.counters_train.measurement_dot_products
          << " attention=" << report.counters_train.attention_dot_products
          << " total=" << report.counters_train.multiplies_total << "\n"
          << "counters[test]: measurement=" << report.counters_test.measurement_dot_products
          << " attention=" << report.counters_test.attention_dot_products
          << " total=" << report.counters_test.multiplies_total << "\n"
          << "stability entries: " << report.stability.size() << "\n"
          << "(wall-clock timings are isolated in report.json)\n";
  {
    std::ofstream out(dir / "summary.txt");
    require(out.good(), "emit_report: cannot write summary.txt");
    out << summary.str();
  }
  {
    std::ofstream out(dir / "curves.csv");
    require(out.good(), "emit_report: cannot write curves.csv");
    out << "epoch,train_loss,val_loss,lr\n";
    for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
      out << e << ',' << g17(report.train_loss[e]) << ','
          << g17(report.val_loss[e]) << ',' << g17(report.lr_schedule[e]) << "\n";
    }
  }
  if (!report.stability.empty()) {
    std::ofstream out(dir / "stability.csv");
    require(out.good(), "emit_report: cannot write stability.csv");
    out << "layer_id,head_id,epoch_a,epoch_b,jaccard\n";
    for (const StabilityEntry& e : report.stability) {
      out << e.layer_id << ',' << e.head_id << ',' << e.epoch_a << ','
          << e.epoch_b << ',' << g17(e.jaccard) << "\n";
    }
  }
}

int run_cli(const std::vector<std::string>& args) {
  try {
    if (args.empty()) {
      usage_fail("usage: tsforecast <synth|train|eval|bench|report> [--key value]...");
    }
    const std::string& subcommand = args[0];
    if (subcommand != "synth" && subcommand != "train" && subcommand != "eval" &&
        subcommand != "bench" && subcommand != "report") {
      usage_fail(strcat("unknown subcommand '", subcommand, "'"));
    }

    CliState st;
    auto opts = build_options(st);

    // Two passes: collect flag pairs, apply the config file first so flags
    // override it.
    std::vector<std::pair<std::string, std::string>> flags;
    for (std::size_t i = 1; i < args.size(); ++i) {
      const std::string& token = args[i];
      if (token.rfind("--", 0) != 0) {
        usage_fail(strcat("expected --key, got '", token, "'"));
      }
      std::string key = token.substr(2);
      std::string value;
      const auto eq = key.find('=');
      if (eq != std::string::npos) {
        value = key.substr(eq + 1);
        key = key.substr(0, eq);
      } else {
        auto it = opts.find(key);
        if (it == opts.end()) usage_fail(strcat("unknown flag key '", key, "'"));
        if (it->second.is_flag &&
            (i + 1 >= args.size() || args[i + 1].rfind("--", 0) == 0)) {
          value = "true";
        } else {
          if (i + 1 >= args.size()) usage_fail(strcat("--", key, ": missing value"));
          value = args[++i];
        }
      }
      flags.emplace_back(std::move(key), std::move(value));
    }
    for (const auto& [key, value] : flags) {
      if (key == "config") st.config_path = value;
    }
    if (!st.config_path.empty()) apply_config_file(opts, st.config_path);
    for (const auto& [key, value] : flags) {
      apply_option(opts, key, value, "flag");
    }

    if (subcommand == "synth") return cmd_synth(st);
    if (subcommand == "train") return cmd_train(st);
    if (subcommand == "eval") return cmd_eval(st);
    if (subcommand == "bench") return cmd_bench(st);
    return cmd_report(st);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace tsf
