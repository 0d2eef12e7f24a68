#pragma once

#include "tsf/checkpoint.hpp"
#include "tsf/data.hpp"
#include "tsf/losses.hpp"
#include "tsf/models.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace tsf {

std::string version_string();

struct TrainConfig {
  double lr0 = 1e-4;
  double lr_decay = 0.5;  // applied at every epoch end
  int batch_size = 32;
  int patience = 3;
  int max_epochs = 8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  LossConfig loss;
  bool deep_supervision = true;  // mlinear only
  std::array<Scalar, 3> loss_weights{1.0, 1.0, 1.0};
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  Index stride = 1;
  bool normalized_metrics = true;  // which scale evaluate() reports by default
  bool warmup_exclude = true;      // drop epoch-0 records from index aggregation
  AggregationMode aggregation = AggregationMode::frequency;

  void validate() const;
};

// Standard Adam over the model's parameter list; states are kept per
// parameter in list order.
class Adam {
 public:
  Adam(std::vector<NamedParam> params, double beta1, double beta2, double eps);

  // grads must parallel the parameter list.
  void step(const std::vector<Matrix>& grads, double lr);

  std::size_t size() const { return params_.size(); }

 private:
  std::vector<NamedParam> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

// Patience-based stopping on validation loss; strictly smaller is an
// improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Observes one epoch's validation loss; true means stop after this epoch.
  bool observe(double val_loss) {
    const int epoch = epochs_seen_++;
    if (val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch;
      bad_epochs_ = 0;
      return false;
    }
    return ++bad_epochs_ >= patience_;
  }

  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  int epochs_seen() const { return epochs_seen_; }

 private:
  int patience_;
  int epochs_seen_ = 0;
  int bad_epochs_ = 0;
  int best_epoch_ = -1;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct RunReport {
  std::string version;
  ModelConfig model;
  TrainConfig config;
  std::vector<double> train_loss;  // one per trained epoch
  std::vector<double> val_loss;
  std::vector<double> lr_schedule;
  int best_epoch = -1;
  int epochs_run = 0;
  Metrics test_normalized;
  Metrics test_raw;
  Metrics baseline_normalized;  // repeat-last-value on the test windows
  OpCounters counters_train;
  OpCounters counters_val;
  OpCounters counters_test;
  StabilityTable stability;
  double wall_train_seconds = 0;
  double wall_val_seconds = 0;
  double wall_test_seconds = 0;

  std::string to_json_text() const;
  static RunReport from_json_text(const std::string& text);
  void save(const std::string& path) const;
  static RunReport load(const std::string& path);
};

struct TrainResult {
  Checkpoint checkpoint;
  RunReport report;
};

// Full protocol: seeded shuffling, Adam steps, per-epoch lr halving, early
// stopping on validation loss, best-weights checkpointing; the index memory
// is populated during training and frozen at the end.
TrainResult train(const SeriesFrame& data, const ModelConfig& mcfg,
                  const TrainConfig& tcfg);

struct EvalResult {
  Metrics normalized;
  Metrics raw;
  std::size_t windows = 0;
};

// Metrics over every window of the split; predictions are collected and fed
// through metrics() once, on both scales.
EvalResult evaluate(const Checkpoint& ckpt, const SeriesFrame& split_frame,
                    Index stride = 1, OpCounters* counters = nullptr);

// Repeat-last-value baseline on normalized windows.
Metrics repeat_last_baseline(const std::vector<ForecastWindow>& windows);

struct BenchReport {
  OpCounters recompute;
  OpCounters reuse;
  double wall_recompute_seconds = 0;
  double wall_reuse_seconds = 0;
  double max_abs_diff = 0;
  std::size_t windows = 0;

  std::string to_json_text() const;
  void save(const std::string& path) const;
};

// Runs prediction over the split twice on identical inputs: once remeasuring
// the top-u selection per window, once reusing the checkpoint's frozen
// indices. Reuse mode performs no measurement at all.
BenchReport bench_reuse(const Checkpoint& ckpt, const SeriesFrame& split_frame,
                        Index stride = 1);

}  // namespace tsf
