#include "tsf/data.hpp"

#include "tsf/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

namespace tsf {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_cell(const std::string& raw, Scalar& out) {
  const std::string text = trim(raw);
  if (text.empty()) return false;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size();
}

// Seconds since epoch for "YYYY-MM-DD HH:MM[:SS]" (space or 'T' separator);
// -1 when the text does not parse.
long long parse_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  int got = std::sscanf(text.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &s);
  if (got < 5) {
    got = std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s);
  }
  if (got < 3) return -1;
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = s;
  return static_cast<long long>(timegm(&tm));
}

SeriesFrame slice_frame(const SeriesFrame& frame, Index begin, Index count) {
  SeriesFrame out;
  out.values = frame.values.middleRows(begin, count);
  out.channel_names = frame.channel_names;
  if (frame.has_timestamps()) {
    out.timestamps.assign(frame.timestamps.begin() + begin,
                          frame.timestamps.begin() + begin + count);
  }
  return out;
}

}  // namespace

SeriesFrame load_csv(const std::string& path, bool has_timestamp_col,
                     bool forward_fill) {
  std::ifstream in(path);
  require(in.good(), "load_csv: cannot open '", path, "'");

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "load_csv: '", path,
          "' is empty");
  std::vector<std::string> header = split_line(line);
  const std::size_t first_value_col = has_timestamp_col ? 1 : 0;
  require(header.size() > first_value_col, "load_csv: '", path,
          "' has no value columns");

  SeriesFrame frame;
  for (std::size_t c = first_value_col; c < header.size(); ++c) {
    frame.channel_names.push_back(trim(header[c]));
  }
  const std::size_t n = frame.channel_names.size();

  std::vector<std::vector<Scalar>> rows;
  Index row_number = 0;  // 1-based data row, for error messages
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_number;
    std::vector<std::string> cells = split_line(line);
    require(cells.size() == header.size(), "load_csv: row ", row_number, " has ",
            cells.size(), " cells, expected ", header.size());
    if (has_timestamp_col) frame.timestamps.push_back(trim(cells[0]));
    std::vector<Scalar> values(n);
    for (std::size_t c = 0; c < n; ++c) {
      const std::string& cell = cells[first_value_col + c];
      Scalar v = 0;
      if (parse_cell(cell, v)) {
        values[c] = v;
      } else if (trim(cell).empty() && forward_fill && !rows.empty()) {
        values[c] = rows.back()[c];
      } else {
        fail("load_csv: non-numeric cell '", trim(cell), "' at row ", row_number,
             ", column ", first_value_col + c + 1);
      }
    }
    rows.push_back(std::move(values));
  }
  require(!rows.empty(), "load_csv: '", path, "' has a header but no data rows");

  frame.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(n));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      frame.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
  }
  return frame;
}

void write_csv(const SeriesFrame& frame, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_csv: cannot open '", path, "' for writing");
  if (frame.has_timestamps()) out << "date,";
  for (Index c = 0; c < frame.channels(); ++c) {
    out << frame.channel_names[static_cast<std::size_t>(c)];
    out << (c + 1 < frame.channels() ? ',' : '\n');
  }
  char buf[40];
  for (Index r = 0; r < frame.rows(); ++r) {
    if (frame.has_timestamps()) out << frame.timestamps[static_cast<std::size_t>(r)] << ',';
    for (Index c = 0; c < frame.channels(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", frame.values(r, c));
      out << buf << (c + 1 < frame.channels() ? ',' : '\n');
    }
  }
  require(out.good(), "write_csv: write to '", path, "' failed");
}

EttSplit split_ett(const SeriesFrame& frame) {
  const Index t = frame.rows();
  require(t >= 3, "split_ett: need at least 3 rows, got ", t);

  EttSplit split;
  split.rows_per_hour = 1;
  if (frame.timestamps.size() >= 2) {
    const long long t0 = parse_timestamp(frame.timestamps[0]);
    const long long t1 = parse_timestamp(frame.timestamps[1]);
    if (t0 >= 0 && t1 > t0 && (t1 - t0) == 15 * 60) split.rows_per_hour = 4;
  }

  // 30-day months: 12/4/4 months of hourly rows, scaled by granularity.
  const Index month = 30 * 24 * split.rows_per_hour;
  Index train_rows = 12 * month;
  Index val_rows = 4 * month;
  Index test_rows = 4 * month;
  if (t < train_rows + val_rows + test_rows) {
    split.proportional = true;
    train_rows = t * 12 / 20;
    val_rows = t * 4 / 20;
    test_rows = t - train_rows - val_rows;
  }
  split.train = slice_frame(frame, 0, train_rows);
  split.val = slice_frame(frame, train_rows, val_rows);
  split.test = slice_frame(frame, train_rows + val_rows, test_rows);
  return split;
}

ChannelStats compute_stats(const SeriesFrame& frame) {
  require(frame.rows() >= 1, "compute_stats: empty frame");
  ChannelStats stats;
  stats.mean.resize(frame.channels());
  stats.std.resize(frame.channels());
  for (Index c = 0; c < frame.channels(); ++c) {
    const Scalar mean = frame.values.col(c).mean();
    const Scalar var = (frame.values.col(c).array() - mean).square().mean();
    const Scalar sd = std::sqrt(var);
    require(sd > 0, "compute_stats: channel '",
            frame.channel_names.empty() ? strcat("#", c)
                                        : frame.channel_names[static_cast<std::size_t>(c)],
            "' is degenerate (std == 0)");
    stats.mean(c) = mean;
    stats.std(c) = sd;
  }
  return stats;
}

Matrix normalize(const Matrix& values, const ChannelStats& stats) {
  require(values.cols() == stats.mean.size(), "normalize: ", values.cols(),
          " channels vs ", stats.mean.size(), " stat entries");
  Matrix out = values;
  for (Index c = 0; c < out.cols(); ++c) {
    out.col(c) = ((out.col(c).array() - stats.mean(c)) / stats.std(c)).matrix();
  }
  return out;
}

Matrix denormalize(const Matrix& values, const ChannelStats& stats) {
  require(values.cols() == stats.mean.size(), "denormalize: ", values.cols(),
          " channels vs ", stats.mean.size(), " stat entries");
  Matrix out = values;
  for (Index c = 0; c < out.cols(); ++c) {
    out.col(c) = (values.col(c).array() * stats.std(c) + stats.mean(c)).matrix();
  }
  return out;
}

std::vector<ForecastWindow> make_windows(const SeriesFrame& frame, Index lookback,
                                         Index horizon, Index stride,
                                         const ChannelStats& stats) {
  require(lookback >= 1 && horizon >= 1 && stride >= 1,
          "make_windows: lookback, horizon and stride must be >= 1 (got ",
          lookback, ", ", horizon, ", ", stride, ")");
  std::vector<ForecastWindow> windows;
  const Index t = frame.rows();
  if (t < lookback + horizon) return windows;
  const Matrix normalized = normalize(frame.values, stats);
  for (Index start = 0; start + lookback + horizon <= t; start += stride) {
    ForecastWindow w;
    w.lookback = normalized.middleRows(start, lookback);
    w.horizon_target = normalized.middleRows(start + lookback, horizon);
    w.start = start;
    w.norm = stats;
    windows.push_back(std::move(w));
  }
  return windows;
}

SynthKind synth_kind_from_string(const std::string& name) {
  if (name == "sine_mix") return SynthKind::sine_mix;
  if (name == "trend_season") return SynthKind::trend_season;
  if (name == "random_walk") return SynthKind::random_walk;
  fail("unknown synth kind '", name, "' (expected sine_mix|trend_season|random_walk)");
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::sine_mix: return "sine_mix";
    case SynthKind::trend_season: return "trend_season";
    case SynthKind::random_walk: return "random_walk";
  }
  return "sine_mix";
}

SeriesFrame synth_generate(const SynthConfig& cfg) {
  require(cfg.rows >= 1 && cfg.channels >= 1, "synth_generate: rows and channels must be >= 1");
  require(!cfg.periods.empty() && cfg.periods.size() == cfg.amplitudes.size(),
          "synth_generate: periods/amplitudes grids must be non-empty and equal length");
  SeriesFrame frame;
  frame.values.resize(cfg.rows, cfg.channels);
  for (Index c = 0; c < cfg.channels; ++c) {
    frame.channel_names.push_back(strcat("ch", c));
    SplitMix64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(cfg.kind),
                               static_cast<std::uint64_t>(c)));
    switch (cfg.kind) {
      case SynthKind::sine_mix: {
        std::vector<double> phases;
        for (std::size_t k = 0; k < cfg.periods.size(); ++k) {
          phases.push_back(rng.next_uniform(0.0, kTwoPi));
        }
        for (Index t = 0; t < cfg.rows; ++t) {
          double v = 0;
          for (std::size_t k = 0; k < cfg.periods.size(); ++k) {
            v += cfg.amplitudes[k] *
                 std::sin(kTwoPi * static_cast<double>(t) / cfg.periods[k] + phases[k]);
          }
          frame.values(t, c) = v + cfg.noise * rng.next_normal();
        }
        break;
      }
      case SynthKind::trend_season: {
        const double slope = rng.next_uniform(-2.0, 2.0);
        const double phase = rng.next_uniform(0.0, kTwoPi);
        const double span = static_cast<double>(std::max<Index>(cfg.rows - 1, 1));
        for (Index t = 0; t < cfg.rows; ++t) {
          const double trend = slope * static_cast<double>(t) / span;
          const double season =
              cfg.amplitudes[0] *
              std::sin(kTwoPi * static_cast<double>(t) / cfg.periods[0] + phase);
          frame.values(t, c) = trend + season + cfg.noise * rng.next_normal();
        }
        break;
      }
      case SynthKind::random_walk: {
        double level = 0;
        for (Index t = 0; t < cfg.rows; ++t) {
          if (t > 0) level += cfg.noise * rng.next_normal();
          frame.values(t, c) = level;
        }
        break;
      }
    }
  }
  return frame;
}

}  // namespace tsf
