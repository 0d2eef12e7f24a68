#include "tsf/train.hpp"

#include "tsf/rng.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#ifndef TSF_VERSION
#define TSF_VERSION "v0.1.0"
#endif

namespace tsf {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::string version_string() { return TSF_VERSION; }

void TrainConfig::validate() const {
  require(lr0 > 0, "train config: lr0 must be positive, got ", lr0);
  require(lr_decay > 0 && lr_decay <= 1, "train config: lr_decay must be in (0, 1]");
  require(batch_size >= 1, "train config: batch_size must be >= 1");
  require(patience >= 1, "train config: patience must be >= 1");
  require(max_epochs >= 1, "train config: max_epochs must be >= 1");
  require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
          "train config: adam betas must be in [0, 1)");
  require(adam_eps > 0, "train config: adam_eps must be positive");
  require(loss.sigma > 0, "train config: loss sigma must be positive");
  require(grad_clip >= 0, "train config: grad_clip must be >= 0");
  require(stride >= 1, "train config: stride must be >= 1");
}

Adam::Adam(std::vector<NamedParam> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const NamedParam& p : params_) {
    m_.push_back(Matrix::Zero(p.data->rows(), p.data->cols()));
    v_.push_back(Matrix::Zero(p.data->rows(), p.data->cols()));
  }
}

void Adam::step(const std::vector<Matrix>& grads, double lr) {
  require(grads.size() == params_.size(), "adam: got ", grads.size(),
          " gradients for ", params_.size(), " parameters");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = (beta2_ * v_[i].array() + (1.0 - beta2_) * g.array().square()).matrix();
    const Matrix m_hat = m_[i] / bc1;
    const Matrix v_hat = v_[i] / bc2;
    *params_[i].data -=
        (lr * m_hat.array() / (v_hat.array().sqrt() + eps_)).matrix();
  }
}

namespace {

// Per-model-family hooks for the shared training loop.
struct SampleLoss {
  Tensor loss;
  std::vector<Tensor> param_leaves;
};

struct MLinearAdapter {
  MLinearModel model;
  const TrainConfig* cfg;

  explicit MLinearAdapter(const ModelConfig& mcfg, const TrainConfig& tcfg)
      : model(mcfg), cfg(&tcfg) {}

  std::vector<NamedParam> parameters() { return model.parameters(); }

  SampleLoss loss_on(Graph& g, const ForecastWindow& w, int /*epoch*/,
                     int /*iteration*/, bool /*record*/, OpCounters& counters) const {
    auto fwd = model.forward(g, w.lookback, counters);
    Tensor y = g.leaf(w.horizon_target, false);
    DeepSupervision ds =
        deep_supervised_loss(fwd.heads.ci, fwd.heads.cd, fwd.heads.mix, y,
                             cfg->loss, cfg->deep_supervision, cfg->loss_weights);
    return {ds.total, std::move(fwd.param_leaves)};
  }

  Matrix predict(const ForecastWindow& w, OpCounters& counters) const {
    return model.forecast(w.lookback, counters);
  }
};

struct InformerAdapter {
  InformerLite model;
  const TrainConfig* cfg;
  AttentionIndexMemory memory;

  explicit InformerAdapter(const ModelConfig& mcfg, const TrainConfig& tcfg)
      : model(mcfg),
        cfg(&tcfg),
        memory(tcfg.aggregation, tcfg.warmup_exclude ? 1 : 0) {
    model.register_sites(memory);
  }

  std::vector<NamedParam> parameters() { return model.parameters(); }

  SampleLoss loss_on(Graph& g, const ForecastWindow& w, int epoch, int iteration,
                     bool record, OpCounters& counters) {
    const Matrix dec = InformerLite::make_decoder_input(
        w.lookback, model.config().resolved_label_len(), model.config().horizon);
    auto fwd = model.forward(g, w.lookback, dec, RunMode::train,
                             record ? &memory : nullptr, epoch, iteration, counters);
    Tensor y = g.leaf(w.horizon_target, false);
    return {loss_value(fwd.output, y, cfg->loss), std::move(fwd.param_leaves)};
  }

  Matrix predict(const ForecastWindow& w, OpCounters& counters) const {
    return model.forecast(w.lookback, memory, counters);
  }
};

template <typename Adapter>
TrainResult run_training(Adapter& adapter, const ModelConfig& mcfg,
                         const TrainConfig& tcfg,
                         const std::vector<ForecastWindow>& train_windows,
                         const std::vector<ForecastWindow>& val_windows,
                         const std::vector<ForecastWindow>& test_windows,
                         const ChannelStats& stats) {
  RunReport report;
  report.version = version_string();
  report.model = mcfg;
  report.config = tcfg;

  std::vector<NamedParam> params = adapter.parameters();
  Adam optimizer(params, tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps);

  EarlyStopping stopper(tcfg.patience);
  std::map<std::string, Matrix> best_weights;
  int iteration = 0;

  const auto train_start = Clock::now();
  for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    const double lr = tcfg.lr0 * std::pow(tcfg.lr_decay, static_cast<double>(epoch));
    report.lr_schedule.push_back(lr);

    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 shuffle_rng(derive_seed(tcfg.seed, 0xE0u, static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);

    double epoch_loss = 0;
    std::size_t seen = 0;
    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<std::size_t>(tcfg.batch_size), ++iteration) {
      const std::size_t batch_end =
          std::min(order.size(), batch_start + static_cast<std::size_t>(tcfg.batch_size));
      std::vector<Matrix> grads;
      for (const NamedParam& p : params) {
        grads.push_back(Matrix::Zero(p.data->rows(), p.data->cols()));
      }
      for (std::size_t s = batch_start; s < batch_end; ++s) {
        Graph g;
        SampleLoss sample = adapter.loss_on(g, train_windows[order[s]], epoch,
                                            iteration, /*record=*/true,
                                            report.counters_train);
        const double value = sample.loss.value()(0, 0);
        if (!std::isfinite(value)) {
          throw std::runtime_error(strcat("training diverged: non-finite loss at epoch ",
                                          epoch, ", step ", iteration));
        }
        epoch_loss += value;
        ++seen;
        g.backward(sample.loss);
        for (std::size_t i = 0; i < grads.size(); ++i) {
          grads[i] += sample.param_leaves[i].grad();
        }
      }
      const Scalar inv = 1.0 / static_cast<Scalar>(batch_end - batch_start);
      for (Matrix& g : grads) g *= inv;
      if (tcfg.grad_clip > 0) {
        double sq = 0;
        for (const Matrix& g : grads) sq += g.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > tcfg.grad_clip) {
          const Scalar scale_by = tcfg.grad_clip / norm;
          for (Matrix& g : grads) g *= scale_by;
        }
      }
      optimizer.step(grads, lr);
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(seen, 1)));

    // Validation pass: same objective, no recording, no weight updates.
    const auto val_start = Clock::now();
    double val_total = 0;
    for (const ForecastWindow& w : val_windows) {
      Graph g;
      SampleLoss sample = adapter.loss_on(g, w, /*epoch=*/0, /*iteration=*/0,
                                          /*record=*/false, report.counters_val);
      val_total += sample.loss.value()(0, 0);
    }
    report.wall_val_seconds += seconds_since(val_start);
    const double val =
        val_windows.empty() ? report.train_loss.back()
                            : val_total / static_cast<double>(val_windows.size());
    require(std::isfinite(val), "training diverged: non-finite validation loss at epoch ",
            epoch);
    report.val_loss.push_back(val);
    report.epochs_run = epoch + 1;

    const bool stop = stopper.observe(val);
    if (stopper.best_epoch() == epoch) {
      best_weights.clear();
      for (const NamedParam& p : params) best_weights.emplace(p.name, *p.data);
    }
    if (stop) break;
  }
  report.wall_train_seconds = seconds_since(train_start) - report.wall_val_seconds;
  report.best_epoch = stopper.best_epoch();

  // Restore the best-validation weights before checkpointing.
  for (NamedParam& p : params) {
    auto it = best_weights.find(p.name);
    if (it != best_weights.end()) *p.data = it->second;
  }

  TrainResult result;
  const auto test_start = Clock::now();
  if constexpr (std::is_same_v<Adapter, InformerAdapter>) {
    adapter.memory.freeze();
    report.stability = adapter.memory.stability_report();
    result.checkpoint = Checkpoint::capture(adapter.model, adapter.memory, stats);
  } else {
    result.checkpoint = Checkpoint::capture(adapter.model, stats);
  }

  // Test metrics on both scales, plus the repeat-last baseline.
  if (!test_windows.empty()) {
    Matrix preds, targets;
    std::size_t row = 0;
    for (const ForecastWindow& w : test_windows) {
      const Matrix p = adapter.predict(w, report.counters_test);
      if (preds.rows() == 0) {
        preds.resize(static_cast<Index>(test_windows.size()) * p.rows(), p.cols());
        targets.resize(preds.rows(), preds.cols());
      }
      preds.middleRows(static_cast<Index>(row) * p.rows(), p.rows()) = p;
      targets.middleRows(static_cast<Index>(row) * p.rows(), p.rows()) = w.horizon_target;
      ++row;
    }
    report.test_normalized = metrics(preds, targets);
    report.test_raw = metrics(denormalize(preds, stats), denormalize(targets, stats));
    report.baseline_normalized = repeat_last_baseline(test_windows);
  }
  report.wall_test_seconds = seconds_since(test_start);

  result.report = std::move(report);
  return result;
}

}  // namespace

TrainResult train(const SeriesFrame& data, const ModelConfig& mcfg,
                  const TrainConfig& tcfg) {
  mcfg.validate();
  tcfg.validate();
  EttSplit split = split_ett(data);
  require(split.train.rows() > 0, "train: empty training split");
  const ChannelStats stats = compute_stats(split.train);
  ModelConfig cfg = mcfg;
  cfg.channels = data.channels();
  cfg.label_len = cfg.resolved_label_len();

  const auto train_windows =
      make_windows(split.train, cfg.lookback, cfg.horizon, tcfg.stride, stats);
  const auto val_windows =
      make_windows(split.val, cfg.lookback, cfg.horizon, tcfg.stride, stats);
  const auto test_windows =
      make_windows(split.test, cfg.lookback, cfg.horizon, tcfg.stride, stats);
  require(!train_windows.empty(),
          "train: training split yields no windows (", split.train.rows(),
          " rows for lookback ", cfg.lookback, " + horizon ", cfg.horizon, ")");

  if (cfg.kind == ModelKind::mlinear) {
    MLinearAdapter adapter(cfg, tcfg);
    return run_training(adapter, cfg, tcfg, train_windows, val_windows,
                        test_windows, stats);
  }
  InformerAdapter adapter(cfg, tcfg);
  return run_training(adapter, cfg, tcfg, train_windows, val_windows,
                      test_windows, stats);
}

EvalResult evaluate(const Checkpoint& ckpt, const SeriesFrame& split_frame,
                    Index stride, OpCounters* counters) {
  const auto windows = make_windows(split_frame, ckpt.model.lookback,
                                    ckpt.model.horizon, stride, ckpt.stats);
  require(!windows.empty(), "evaluate: split yields no windows");
  OpCounters local;
  OpCounters& cnt = counters ? *counters : local;

  Matrix preds(static_cast<Index>(windows.size()) * ckpt.model.horizon,
               split_frame.channels());
  Matrix targets(preds.rows(), preds.cols());
  Index row = 0;
  if (ckpt.model.kind == ModelKind::mlinear) {
    const MLinearModel model = ckpt.make_mlinear();
    for (const ForecastWindow& w : windows) {
      preds.middleRows(row, ckpt.model.horizon) = model.forecast(w.lookback, cnt);
      targets.middleRows(row, ckpt.model.horizon) = w.horizon_target;
      row += ckpt.model.horizon;
    }
  } else {
    require(ckpt.has_memory, "evaluate: checkpoint has no index memory segment");
    const InformerLite model = ckpt.make_informer();
    for (const ForecastWindow& w : windows) {
      preds.middleRows(row, ckpt.model.horizon) =
          model.forecast(w.lookback, ckpt.memory, cnt);
      targets.middleRows(row, ckpt.model.horizon) = w.horizon_target;
      row += ckpt.model.horizon;
    }
  }
  EvalResult result;
  result.normalized = metrics(preds, targets);
  result.raw = metrics(denormalize(preds, ckpt.stats), denormalize(targets, ckpt.stats));
  result.windows = windows.size();
  return result;
}

Metrics repeat_last_baseline(const std::vector<ForecastWindow>& windows) {
  require(!windows.empty(), "repeat_last_baseline: no windows");
  const Index s = windows.front().horizon_target.rows();
  const Index n = windows.front().horizon_target.cols();
  Matrix preds(static_cast<Index>(windows.size()) * s, n);
  Matrix targets(preds.rows(), preds.cols());
  Index row = 0;
  for (const ForecastWindow& w : windows) {
    const Matrix last = w.lookback.bottomRows(1);
    for (Index k = 0; k < s; ++k) preds.row(row + k) = last;
    targets.middleRows(row, s) = w.horizon_target;
    row += s;
  }
  return metrics(preds, targets);
}

BenchReport bench_reuse(const Checkpoint& ckpt, const SeriesFrame& split_frame,
                        Index stride) {
  require(ckpt.model.kind == ModelKind::informer_lite,
          "bench_reuse: needs an informer_lite checkpoint");
  require(ckpt.has_memory, "bench_reuse: checkpoint has no index memory segment");
  const InformerLite model = ckpt.make_informer();
  const auto windows = make_windows(split_frame, ckpt.model.lookback,
                                    ckpt.model.horizon, stride, ckpt.stats);
  require(!windows.empty(), "bench_reuse: split yields no windows");

  BenchReport bench;
  bench.windows = windows.size();
  std::vector<Matrix> recompute_out;
  recompute_out.reserve(windows.size());

  // Recompute mode: measurement on, indices selected per window.
  const auto t0 = Clock::now();
  {
    int iteration = 0;
    for (const ForecastWindow& w : windows) {
      Graph g;
      const Matrix dec = InformerLite::make_decoder_input(
          w.lookback, ckpt.model.resolved_label_len(), ckpt.model.horizon);
      auto fwd = model.forward(g, w.lookback, dec, RunMode::train,
                               /*memory=*/nullptr, /*epoch=*/0, iteration++,
                               bench.recompute);
      recompute_out.push_back(fwd.output.value());
    }
  }
  bench.wall_recompute_seconds = seconds_since(t0);

  // Reuse mode: frozen indices, no measurement.
  const auto t1 = Clock::now();
  {
    std::size_t i = 0;
    for (const ForecastWindow& w : windows) {
      const Matrix out = model.forecast(w.lookback, ckpt.memory, bench.reuse);
      bench.max_abs_diff = std::max(
          bench.max_abs_diff, (out - recompute_out[i++]).cwiseAbs().maxCoeff());
    }
  }
  bench.wall_reuse_seconds = seconds_since(t1);
  return bench;
}

// ---------------------------------------------------------------------------
// Report serialization

namespace {

json counters_to_json(const OpCounters& c) {
  return json{{"measurement_dot_products", c.measurement_dot_products},
              {"attention_dot_products", c.attention_dot_products},
              {"multiplies_total", c.multiplies_total}};
}

OpCounters counters_from_json(const json& j) {
  OpCounters c;
  c.measurement_dot_products = j.at("measurement_dot_products").get<std::uint64_t>();
  c.attention_dot_products = j.at("attention_dot_products").get<std::uint64_t>();
  c.multiplies_total = j.at("multiplies_total").get<std::uint64_t>();
  return c;
}

json metrics_to_json(const Metrics& m) {
  return json{{"mse", m.mse}, {"mae", m.mae}};
}

Metrics metrics_from_json(const json& j) {
  return Metrics{j.at("mse").get<Scalar>(), j.at("mae").get<Scalar>()};
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"lr0", c.lr0},
              {"lr_decay", c.lr_decay},
              {"batch_size", c.batch_size},
              {"patience", c.patience},
              {"max_epochs", c.max_epochs},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"seed", c.seed},
              {"loss", to_string(c.loss.kind)},
              {"sigma", c.loss.sigma},
              {"deep_supervision", c.deep_supervision},
              {"loss_weights", c.loss_weights},
              {"grad_clip", c.grad_clip},
              {"stride", c.stride},
              {"normalized_metrics", c.normalized_metrics},
              {"warmup_exclude", c.warmup_exclude},
              {"aggregation", c.aggregation == AggregationMode::frequency
                                  ? "frequency"
                                  : "eq3_mean"}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.lr0 = j.at("lr0").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.patience = j.at("patience").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.loss.kind = loss_kind_from_string(j.at("loss").get<std::string>());
  c.loss.sigma = j.at("sigma").get<Scalar>();
  c.deep_supervision = j.at("deep_supervision").get<bool>();
  c.loss_weights = j.at("loss_weights").get<std::array<Scalar, 3>>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.stride = j.at("stride").get<Index>();
  c.normalized_metrics = j.at("normalized_metrics").get<bool>();
  c.warmup_exclude = j.at("warmup_exclude").get<bool>();
  c.aggregation = j.at("aggregation").get<std::string>() == "eq3_mean"
                      ? AggregationMode::eq3_mean
                      : AggregationMode::frequency;
  return c;
}

json model_config_to_json_echo(const ModelConfig& cfg) {
  return json{{"kind", to_string(cfg.kind)},
              {"lookback", cfg.lookback},
              {"horizon", cfg.horizon},
              {"label_len", cfg.label_len},
              {"channels", cfg.channels},
              {"d_model", cfg.d_model},
              {"n_heads", cfg.n_heads},
              {"u_factor", cfg.u_factor},
              {"sample_factor", cfg.sample_factor},
              {"p_factor", cfg.p_factor},
              {"mapping", to_string(cfg.mapping)},
              {"attention", cfg.attention == AttentionKind::sparse ? "sparse" : "full"},
              {"seed", cfg.seed}};
}

ModelConfig model_config_from_json_echo(const json& j) {
  ModelConfig cfg;
  cfg.kind = model_kind_from_string(j.at("kind").get<std::string>());
  cfg.lookback = j.at("lookback").get<Index>();
  cfg.horizon = j.at("horizon").get<Index>();
  cfg.label_len = j.at("label_len").get<Index>();
  cfg.channels = j.at("channels").get<Index>();
  cfg.d_model = j.at("d_model").get<Index>();
  cfg.n_heads = j.at("n_heads").get<Index>();
  cfg.u_factor = j.at("u_factor").get<double>();
  cfg.sample_factor = j.at("sample_factor").get<double>();
  cfg.p_factor = j.at("p_factor").get<Index>();
  cfg.mapping = mapping_kind_from_string(j.at("mapping").get<std::string>());
  cfg.attention = j.at("attention").get<std::string>() == "full"
                      ? AttentionKind::full
                      : AttentionKind::sparse;
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

json stability_to_json(const StabilityTable& table) {
  json rows = json::array();
  for (const StabilityEntry& e : table) {
    rows.push_back(json{{"layer_id", e.layer_id},
                        {"head_id", e.head_id},
                        {"epoch_a", e.epoch_a},
                        {"epoch_b", e.epoch_b},
                        {"jaccard", e.jaccard}});
  }
  return rows;
}

StabilityTable stability_from_json(const json& j) {
  StabilityTable table;
  for (const json& row : j) {
    table.push_back({row.at("layer_id").get<int>(), row.at("head_id").get<int>(),
                     row.at("epoch_a").get<int>(), row.at("epoch_b").get<int>(),
                     row.at("jaccard").get<double>()});
  }
  return table;
}

}  // namespace

std::string RunReport::to_json_text() const {
  json j;
  j["format"] = "tsforecast-report";
  j["version"] = version;
  j["model"] = model_config_to_json_echo(model);
  j["train_config"] = train_config_to_json(config);
  j["train_loss"] = train_loss;
  j["val_loss"] = val_loss;
  j["lr_schedule"] = lr_schedule;
  j["best_epoch"] = best_epoch;
  j["epochs_run"] = epochs_run;
  j["test_normalized"] = metrics_to_json(test_normalized);
  j["test_raw"] = metrics_to_json(test_raw);
  j["baseline_normalized"] = metrics_to_json(baseline_normalized);
  j["counters"] = json{{"train", counters_to_json(counters_train)},
                       {"val", counters_to_json(counters_val)},
                       {"test", counters_to_json(counters_test)}};
  j["stability"] = stability_to_json(stability);
  // Wall-clock fields are isolated here and excluded from byte-for-byte
  // reproducibility comparisons.
  j["wall_clock"] = json{{"train_seconds", wall_train_seconds},
                         {"val_seconds", wall_val_seconds},
                         {"test_seconds", wall_test_seconds}};
  return j.dump(1);
}

RunReport RunReport::from_json_text(const std::string& text) {
  json j = json::parse(text);
  require(j.at("format").get<std::string>() == "tsforecast-report",
          "report: unrecognized format tag");
  RunReport r;
  r.version = j.at("version").get<std::string>();
  r.model = model_config_from_json_echo(j.at("model"));
  r.config = train_config_from_json(j.at("train_config"));
  r.train_loss = j.at("train_loss").get<std::vector<double>>();
  r.val_loss = j.at("val_loss").get<std::vector<double>>();
  r.lr_schedule = j.at("lr_schedule").get<std::vector<double>>();
  r.best_epoch = j.at("best_epoch").get<int>();
  r.epochs_run = j.at("epochs_run").get<int>();
  r.test_normalized = metrics_from_json(j.at("test_normalized"));
  r.test_raw = metrics_from_json(j.at("test_raw"));
  r.baseline_normalized = metrics_from_json(j.at("baseline_normalized"));
  r.counters_train = counters_from_json(j.at("counters").at("train"));
  r.counters_val = counters_from_json(j.at("counters").at("val"));
  r.counters_test = counters_from_json(j.at("counters").at("test"));
  r.stability = stability_from_json(j.at("stability"));
  r.wall_train_seconds = j.at("wall_clock").at("train_seconds").get<double>();
  r.wall_val_seconds = j.at("wall_clock").at("val_seconds").get<double>();
  r.wall_test_seconds = j.at("wall_clock").at("test_seconds").get<double>();
  return r;
}

void RunReport::save(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), "report: cannot open '", path, "' for writing");
  out << to_json_text() << '\n';
  require(out.good(), "report: write to '", path, "' failed");
}

RunReport RunReport::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "report: cannot open '", path, "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string BenchReport::to_json_text() const {
  json j;
  j["format"] = "tsforecast-bench";
  j["windows"] = windows;
  j["recompute"] = counters_to_json(recompute);
  j["reuse"] = counters_to_json(reuse);
  j["max_abs_diff"] = max_abs_diff;
  j["wall_clock"] = json{{"recompute_seconds", wall_recompute_seconds},
                         {"reuse_seconds", wall_reuse_seconds}};
  return j.dump(1);
}

void BenchReport::save(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), "bench report: cannot open '", path, "' for writing");
  out << to_json_text() << '\n';
  require(out.good(), "bench report: write to '", path, "' failed");
}

}  // namespace tsf
