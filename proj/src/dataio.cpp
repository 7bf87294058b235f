#include "mscmhmst/dataio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mscmhmst/errors.hpp"
#include "mscmhmst/random.hpp"

namespace mscmhmst {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t sensor_axis(const Tensor& x, std::size_t sensors) {
  const std::size_t axis = x.rank() >= 2 ? x.rank() - 2 : 0;
  if (x.dim(axis) != sensors) {
    throw ConfigError("tensor " + shape_string(x.shape()) + " does not have " + std::to_string(sensors) +
                      " sensors on its sensor axis");
  }
  return axis;
}

template <typename F>
Tensor per_sensor(const Tensor& x, const NormStats& stats, F&& fn) {
  const std::size_t S = stats.mean.size();
  const std::size_t axis = sensor_axis(x, S);
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t s = (i / inner) % S;
    out[i] = fn(x[i], stats.mean[s], stats.std[s]);
  }
  return out;
}

}  // namespace

FlowSeries parse_series(std::istream& in) {
  std::string line;
  std::vector<std::string> ids;
  bool have_header = false;
  std::vector<std::vector<double>> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto cells = split_csv_line(t);
    if (!have_header) {
      for (auto& c : cells) ids.push_back(trim(c));
      have_header = true;
      continue;
    }
    ++row;
    if (cells.size() != ids.size()) {
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(ids.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       row, std::min(cells.size(), ids.size()) + 1);
    }
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = trim(cells[c]);
      double v = 0.0;
      const char* begin = cell.data();
      const char* end = begin + cell.size();
      auto [ptr, ec] = std::from_chars(begin, end, v);
      if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(c + 1) + ": non-numeric cell '" +
                             cell + "'",
                         row, c + 1);
      }
      if (v < 0.0) {
        throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(c + 1) + ": negative flow",
                         row, c + 1);
      }
      values[c] = v;
    }
    rows.push_back(std::move(values));
  }
  if (!have_header || ids.empty()) throw ParseError("missing header row", 0, 0);
  if (rows.empty()) throw ParseError("no data rows", 0, 0);

  const std::size_t S = ids.size(), T = rows.size();
  Tensor values({S, T});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) values[s * T + t] = rows[t][s];
  }
  return FlowSeries{std::move(values), std::move(ids), 5};
}

FlowSeries load_series(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file: " + path.string());
  return parse_series(in);
}

void write_series(const std::filesystem::path& path, const FlowSeries& series, const std::vector<std::string>& comments,
                  int decimals) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write data file: " + path.string());
  for (const auto& c : comments) out << "# " << c << '\n';
  for (std::size_t s = 0; s < series.sensors(); ++s) {
    if (s) out << ',';
    out << series.sensor_ids[s];
  }
  out << '\n';
  char buf[64];
  for (std::size_t t = 0; t < series.steps(); ++t) {
    for (std::size_t s = 0; s < series.sensors(); ++s) {
      if (s) out << ',';
      std::snprintf(buf, sizeof buf, "%.*f", decimals, series.values[s * series.steps() + t]);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing data file: " + path.string());
}

std::uint64_t fingerprint(const FlowSeries& series) {
  std::uint64_t h = fnv1a(shape_string(series.values.shape()));
  for (const auto& id : series.sensor_ids) h = fnv1a(id + '\x1f', h);
  const auto bytes = series.values.data();
  return fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size_bytes()), h);
}

FlowSeries select_sensors(const FlowSeries& series, std::span<const std::size_t> columns) {
  if (columns.empty()) return series;
  const std::size_t T = series.steps();
  Tensor values({columns.size(), T});
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] >= series.sensors()) {
      throw ConfigError("sensor index " + std::to_string(columns[i]) + " out of range");
    }
    std::copy_n(series.values.raw() + columns[i] * T, T, values.raw() + i * T);
    ids.push_back(series.sensor_ids[columns[i]]);
  }
  return FlowSeries{std::move(values), std::move(ids), series.interval_minutes};
}

SplitSteps fractional_split(std::size_t steps) {
  const std::size_t train = steps * 7 / 10;
  const std::size_t val = steps / 10;
  return {train, val, steps - train - val};
}

std::array<FlowSeries, 3> split_series(const FlowSeries& series, const SplitSteps& split) {
  const std::size_t T = series.steps();
  if (split.train + split.val + split.test > T) {
    throw ConfigError("split " + std::to_string(split.train) + "/" + std::to_string(split.val) + "/" +
                      std::to_string(split.test) + " exceeds " + std::to_string(T) + " steps");
  }
  if (split.train == 0 || split.val == 0 || split.test == 0) throw ConfigError("split segments must be nonempty");
  const std::size_t S = series.sensors();
  auto segment = [&](std::size_t start, std::size_t len) {
    Tensor v({S, len});
    for (std::size_t s = 0; s < S; ++s) std::copy_n(series.values.raw() + s * T + start, len, v.raw() + s * len);
    return FlowSeries{std::move(v), series.sensor_ids, series.interval_minutes};
  };
  return {segment(0, split.train), segment(split.train, split.val), segment(split.train + split.val, split.test)};
}

NormStats normalize_stats(const FlowSeries& train_segment) {
  const std::size_t S = train_segment.sensors(), T = train_segment.steps();
  NormStats stats{Tensor({S}), Tensor({S})};
  for (std::size_t s = 0; s < S; ++s) {
    const double* row = train_segment.values.raw() + s * T;
    double mean = 0.0;
    for (std::size_t t = 0; t < T; ++t) mean += row[t];
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (std::size_t t = 0; t < T; ++t) var += (row[t] - mean) * (row[t] - mean);
    var /= static_cast<double>(T);
    const double sd = std::sqrt(var);
    stats.mean[s] = mean;
    stats.std[s] = sd > 0.0 ? sd : 1.0;
  }
  return stats;
}

Tensor normalize(const Tensor& x, const NormStats& stats) {
  return per_sensor(x, stats, [](double v, double mean, double sd) { return (v - mean) / sd; });
}

Tensor denormalize(const Tensor& x, const NormStats& stats) {
  return per_sensor(x, stats, [](double v, double mean, double sd) { return v * sd + mean; });
}

WindowedDataset make_windows(const FlowSeries& segment, std::size_t history, std::size_t horizon,
                             const NormStats& stats) {
  if (history == 0 || horizon == 0) throw ConfigError("history and horizon must be >= 1");
  const std::size_t T = segment.steps(), S = segment.sensors();
  if (history + horizon > T) {
    throw ConfigError("segment of " + std::to_string(T) + " steps is shorter than history + horizon = " +
                      std::to_string(history + horizon));
  }
  if (stats.mean.size() != S) throw ConfigError("normalization statistics do not match sensor count");
  const std::size_t N = T - history - horizon + 1;
  WindowedDataset ds;
  ds.history = history;
  ds.horizon = horizon;
  ds.stats = stats;
  ds.raw_inputs = Tensor({N, S, history});
  ds.raw_targets = Tensor({N, S, horizon});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t s = 0; s < S; ++s) {
      const double* row = segment.values.raw() + s * T;
      std::copy_n(row + n, history, ds.raw_inputs.raw() + (n * S + s) * history);
      std::copy_n(row + n + history, horizon, ds.raw_targets.raw() + (n * S + s) * horizon);
    }
  }
  ds.inputs = normalize(ds.raw_inputs, stats);
  ds.targets = normalize(ds.raw_targets, stats);
  return ds;
}

namespace {

Tensor gather(const Tensor& source, std::span<const std::size_t> indices) {
  const std::size_t row = source.size() / source.dim(0);
  Tensor out({indices.size(), source.dim(1), source.dim(2)});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= source.dim(0)) throw ConfigError("window index out of range");
    std::copy_n(source.raw() + indices[i] * row, row, out.raw() + i * row);
  }
  return out;
}

}  // namespace

Tensor WindowedDataset::gather_inputs(std::span<const std::size_t> indices) const { return gather(inputs, indices); }
Tensor WindowedDataset::gather_targets(std::span<const std::size_t> indices) const { return gather(targets, indices); }

namespace {
constexpr double kNoiseFraction = 0.03;
constexpr double kIncidentRate = 1.0 / 1000.0;
constexpr double kIncidentDepth = 0.6;
}  // namespace

std::vector<std::string> synthetic_formula_description(std::uint64_t seed) {
  char noise[128];
  std::snprintf(noise, sizeof noise, "noise ~ N(0, (%.2f * base_s)^2), incidents start with p=%.4f per step,", kNoiseFraction,
                kIncidentRate);
  return {
      "synthetic flow, seed=" + std::to_string(seed) + ", 288 steps per day (5-minute interval)",
      "flow_s(t) = max(0, base_s * (0.15 + 0.85 * sin^2(2*pi*(tod(t) - phase_s))) * incident_s(t) + noise)",
      "base_s = 180 + 60*s, phase_s = 0.015*s, tod(t) = (t mod 288) / 288",
      noise,
      "last 6..17 steps and scale flow by 0.6; values rounded to 3 decimals",
  };
}

FlowSeries synthesize_series(std::size_t sensors, std::size_t days, std::uint64_t seed) {
  if (sensors == 0 || days == 0) throw ConfigError("synth needs sensors >= 1 and days >= 1");
  const std::size_t T = days * kStepsPerDay;
  Tensor values({sensors, T});
  std::vector<std::string> ids;
  for (std::size_t s = 0; s < sensors; ++s) {
    Rng rng(derive_seed(seed, "synth.sensor." + std::to_string(s)));
    const double base = 180.0 + 60.0 * static_cast<double>(s);
    const double phase = 0.015 * static_cast<double>(s);
    std::size_t incident_left = 0;
    for (std::size_t t = 0; t < T; ++t) {
      const double tod = static_cast<double>(t % kStepsPerDay) / static_cast<double>(kStepsPerDay);
      const double wave = std::sin(2.0 * std::numbers::pi * (tod - phase));
      double v = base * (0.15 + 0.85 * wave * wave);
      if (incident_left == 0 && rng.uniform() < kIncidentRate) incident_left = 6 + rng.below(12);
      if (incident_left > 0) {
        v *= kIncidentDepth;
        --incident_left;
      }
      v += kNoiseFraction * base * rng.normal();
      v = std::max(0.0, v);
      values[s * T + t] = std::round(v * 1000.0) / 1000.0;
    }
    ids.push_back("s" + std::to_string(s + 1));
  }
  return FlowSeries{std::move(values), std::move(ids), 5};
}

}  // namespace mscmhmst
