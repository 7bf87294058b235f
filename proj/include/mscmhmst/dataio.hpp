#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mscmhmst/tensor.hpp"

namespace mscmhmst {

inline constexpr std::size_t kStepsPerDay = 288;

/// Flow counts per sensor and 5-minute step. values is [S, T], all
/// entries finite and >= 0.
struct FlowSeries {
  Tensor values;
  std::vector<std::string> sensor_ids;
  int interval_minutes = 5;

  std::size_t sensors() const { return values.dim(0); }
  std::size_t steps() const { return values.dim(1); }
};

/// Reads matrix_csv: a header of sensor ids, then one comma-separated row
/// of flows per step. Lines starting with '#' are comments. Throws IoError
/// if the file cannot be opened and ParseError (1-based data row/column)
/// on bad cells or ragged rows.
FlowSeries load_series(const std::filesystem::path& path);
FlowSeries parse_series(std::istream& in);

void write_series(const std::filesystem::path& path, const FlowSeries& series,
                  const std::vector<std::string>& comments = {}, int decimals = 3);

/// Content hash of shape, ids and values.
std::uint64_t fingerprint(const FlowSeries& series);

FlowSeries select_sensors(const FlowSeries& series, std::span<const std::size_t> columns);

struct SplitSteps {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// Chronological splits used for the public PeMS benchmarks.
inline constexpr SplitSteps kPems04Split{12672, 1440, 2880};
inline constexpr SplitSteps kPems08Split{13536, 1440, 2880};

/// 70/10/20 of the available steps, test taking the remainder.
SplitSteps fractional_split(std::size_t steps);

/// Contiguous, non-overlapping train/val/test segments covering the first
/// train + val + test steps.
std::array<FlowSeries, 3> split_series(const FlowSeries& series, const SplitSteps& split);

/// Per-sensor mean and population standard deviation; a zero std becomes 1.
struct NormStats {
  Tensor mean;  // [S]
  Tensor std;   // [S]
};

NormStats normalize_stats(const FlowSeries& train_segment);

/// Per-sensor affine maps. The sensor axis is the second-to-last axis for
/// rank >= 2 ([S, T], [N, S, t]) and axis 0 for rank 1.
Tensor normalize(const Tensor& x, const NormStats& stats);
Tensor denormalize(const Tensor& x, const NormStats& stats);

/// Supervised pairs cut from one segment. Window n reads inputs from steps
/// [n, n + h) and targets from [n + h, n + h + t).
struct WindowedDataset {
  Tensor inputs;       // [N, S, h], normalized
  Tensor targets;      // [N, S, t], normalized
  Tensor raw_inputs;   // [N, S, h], flow units
  Tensor raw_targets;  // [N, S, t], flow units
  std::size_t history = 0;
  std::size_t horizon = 0;
  NormStats stats;

  std::size_t size() const { return inputs.rank() == 0 ? 0 : inputs.dim(0); }
  std::size_t sensors() const { return inputs.rank() < 2 ? 0 : inputs.dim(1); }

  /// Gathers the given window indices into [B, S, h] / [B, S, t] batches.
  Tensor gather_inputs(std::span<const std::size_t> indices) const;
  Tensor gather_targets(std::span<const std::size_t> indices) const;
};

WindowedDataset make_windows(const FlowSeries& segment, std::size_t history, std::size_t horizon,
                             const NormStats& stats);

/// Deterministic desk-scale stand-in for PeMS flow data: a daily double
/// peak plus per-sensor phase, seeded noise and occasional incident dips.
/// Values are rounded to 3 decimals so the in-memory series equals its CSV.
FlowSeries synthesize_series(std::size_t sensors, std::size_t days, std::uint64_t seed);
std::vector<std::string> synthetic_formula_description(std::uint64_t seed);

}  // namespace mscmhmst
