#pragma once

#include "tsf/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tsf {

// Multi-channel series. Immutable after load; windowing reads, never writes.
struct SeriesFrame {
  std::vector<std::string> timestamps;  // optional, one per row when present
  Matrix values;                        // T x n
  std::vector<std::string> channel_names;

  Index rows() const { return values.rows(); }
  Index channels() const { return values.cols(); }
  bool has_timestamps() const { return !timestamps.empty(); }
};

// CSV: UTF-8, comma separated, header row, optional leading "date" column,
// all other columns numeric. Empty cells are forward-filled when requested,
// rejected otherwise; either way the loaded frame has no gaps.
SeriesFrame load_csv(const std::string& path, bool has_timestamp_col,
                     bool forward_fill = false);
void write_csv(const SeriesFrame& frame, const std::string& path);

struct EttSplit {
  SeriesFrame train;
  SeriesFrame val;
  SeriesFrame test;
  bool proportional = false;  // frame was too short for the month-based split
  Index rows_per_hour = 1;    // 1 for hourly data, 4 for 15-minute data
};

// 12/4/4-month split with 30-day months: 8640/2880/2880 rows hourly, x4 for
// 15-minute data (granularity inferred from timestamps, hourly otherwise).
// Shorter frames fall back to a proportional 12:4:4 split.
EttSplit split_ett(const SeriesFrame& frame);

struct ChannelStats {
  Vector mean;
  Vector std;
};

// Per-channel mean and standard deviation; degenerate channels (std == 0)
// are rejected with the channel named.
ChannelStats compute_stats(const SeriesFrame& frame);

Matrix normalize(const Matrix& values, const ChannelStats& stats);
Matrix denormalize(const Matrix& values, const ChannelStats& stats);

// One (lookback, horizon) slice. Values are stored normalized; stats are the
// train-split statistics used, carried for denormalization.
struct ForecastWindow {
  Matrix lookback;        // L x n
  Matrix horizon_target;  // S x n
  Index start = 0;        // frame row index of lookback[0]
  ChannelStats norm;
};

// floor((T - L - S) / stride) + 1 windows when T >= L + S, none otherwise.
std::vector<ForecastWindow> make_windows(const SeriesFrame& frame, Index lookback,
                                         Index horizon, Index stride,
                                         const ChannelStats& stats);

enum class SynthKind { sine_mix, trend_season, random_walk };

SynthKind synth_kind_from_string(const std::string& name);
std::string to_string(SynthKind kind);

// Default component grid for sine_mix / trend_season. Kept as explicit
// documented defaults so noiseless series are exactly periodic with period
// lcm(periods) = 96.
struct SynthConfig {
  SynthKind kind = SynthKind::sine_mix;
  Index rows = 2000;
  Index channels = 1;
  std::uint64_t seed = 1;
  double noise = 0.1;
  std::vector<double> periods = {24.0, 48.0, 96.0};
  std::vector<double> amplitudes = {1.0, 0.6, 0.3};
};

SeriesFrame synth_generate(const SynthConfig& cfg);

}  // namespace tsf
