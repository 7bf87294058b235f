#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mscmhmst/dataio.hpp"
#include "mscmhmst/model.hpp"

namespace mscmhmst {

struct Metrics {
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  /// Percent. Terms with a zero actual are excluded; NaN when every actual is zero.
  double mape = 0.0;

  bool mape_defined() const;
};

/// MAE, MSE, RMSE = sqrt(MSE) and MAPE over paired elements.
Metrics metrics(std::span<const double> actual, std::span<const double> predicted);
Metrics metrics(const Tensor& actual, const Tensor& predicted);

/// Reported horizons in 5-minute steps (15, 30 and 60 minutes).
inline constexpr std::array<std::size_t, 3> kReportHorizons{3, 6, 12};

struct HorizonMetrics {
  std::size_t steps = 0;
  Metrics metrics;
};

struct EvalReport {
  std::string variant;
  std::uint64_t seed = 0;
  std::string dataset_id;
  std::vector<HorizonMetrics> horizons;

  const Metrics& at(std::size_t steps) const;
};

/// Metrics over all (window, sensor, step) entries of the first 3, 6 and 12
/// forecast steps. Both tensors are [N, S, t] in flow units with t >= 12.
std::vector<HorizonMetrics> horizon_metrics(const Tensor& actual, const Tensor& predicted);

/// Denormalized model forecasts for every window, [N, S, t].
Tensor predict_dataset(const Model& model, const WindowedDataset& data, std::size_t batch_size = 256);
/// Repeats each window's last observed value across the horizon, [N, S, t].
Tensor naive_last_value(const WindowedDataset& data);

/// Runs the model over `test` and scores denormalized forecasts against
/// raw targets. Needs a horizon of at least 12 steps.
EvalReport evaluate_horizons(const Model& model, const WindowedDataset& test, const std::string& dataset_id = {});

/// Drops the `trim` values with the largest |z-score| (ties: earlier index
/// dropped first) and averages the rest. Returns the plain mean when all
/// values are equal.
double trimmed_mean(std::span<const double> values, std::size_t trim);

/// Repeated-run protocol: exactly `expected_runs` values (default 10), the
/// 20% with the largest |z| removed, mean of the remainder.
double trimmed_mean_protocol(std::span<const double> runs, std::size_t expected_runs = 10);

/// Table with one row per report and MAE/MSE/RMSE/MAPE columns for each
/// horizon, 15/30/60 minutes left to right.
std::string format_report_table(const std::vector<EvalReport>& reports);
/// One CSV record per report x horizon x metric, after a "# manifest=" line.
std::string format_report_records(const std::vector<EvalReport>& reports, const std::string& manifest_hash);

}  // namespace mscmhmst
