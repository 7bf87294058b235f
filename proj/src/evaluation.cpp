#include "mscmhmst/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mscmhmst/config.hpp"
#include "mscmhmst/errors.hpp"

namespace mscmhmst {

bool Metrics::mape_defined() const { return !std::isnan(mape); }

Metrics metrics(std::span<const double> actual, std::span<const double> predicted) {
  if (actual.size() != predicted.size()) throw ConfigError("metrics: actual and predicted differ in length");
  if (actual.empty()) throw ConfigError("metrics: need at least one element");
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  std::size_t pct_count = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double err = actual[i] - predicted[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
    if (actual[i] != 0.0) {
      pct_sum += std::abs(err) / std::abs(actual[i]);
      ++pct_count;
    }
  }
  const double n = static_cast<double>(actual.size());
  Metrics m;
  m.mae = abs_sum / n;
  m.mse = sq_sum / n;
  m.rmse = std::sqrt(m.mse);
  m.mape = pct_count ? 100.0 * pct_sum / static_cast<double>(pct_count) : std::nan("");
  return m;
}

Metrics metrics(const Tensor& actual, const Tensor& predicted) {
  if (actual.shape() != predicted.shape()) {
    throw ConfigError("metrics: shape mismatch " + shape_string(actual.shape()) + " vs " +
                      shape_string(predicted.shape()));
  }
  return metrics(actual.data(), predicted.data());
}

const Metrics& EvalReport::at(std::size_t steps) const {
  for (const auto& h : horizons) {
    if (h.steps == steps) return h.metrics;
  }
  throw ConfigError("report has no " + std::to_string(steps) + "-step horizon");
}

std::vector<HorizonMetrics> horizon_metrics(const Tensor& actual, const Tensor& predicted) {
  if (actual.shape() != predicted.shape() || actual.rank() != 3) {
    throw ConfigError("horizon metrics need matching [N, S, t] tensors");
  }
  const std::size_t t = actual.dim(2);
  if (t < kReportHorizons.back()) {
    throw ConfigError("evaluation needs a horizon of at least 12 steps, model has " + std::to_string(t));
  }
  const std::size_t rows = actual.dim(0) * actual.dim(1);
  std::vector<HorizonMetrics> out;
  for (std::size_t steps : kReportHorizons) {
    std::vector<double> a, p;
    a.reserve(rows * steps);
    p.reserve(rows * steps);
    for (std::size_t r = 0; r < rows; ++r) {
      a.insert(a.end(), actual.raw() + r * t, actual.raw() + r * t + steps);
      p.insert(p.end(), predicted.raw() + r * t, predicted.raw() + r * t + steps);
    }
    out.push_back({steps, metrics(a, p)});
  }
  return out;
}

Tensor predict_dataset(const Model& model, const WindowedDataset& data, std::size_t batch_size) {
  const std::size_t N = data.size();
  Tensor out(data.raw_targets.shape());
  const std::size_t row = out.size() / N;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < N; start += batch_size) {
    const std::size_t end = std::min(N, start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor pred = denormalize(model.predict(data.gather_inputs(idx)), data.stats);
    std::copy(pred.raw(), pred.raw() + pred.size(), out.raw() + start * row);
  }
  return out;
}

Tensor naive_last_value(const WindowedDataset& data) {
  Tensor out(data.raw_targets.shape());
  const std::size_t rows = data.size() * data.sensors();
  for (std::size_t r = 0; r < rows; ++r) {
    const double last = data.raw_inputs[r * data.history + data.history - 1];
    std::fill_n(out.raw() + r * data.horizon, data.horizon, last);
  }
  return out;
}

EvalReport evaluate_horizons(const Model& model, const WindowedDataset& test, const std::string& dataset_id) {
  if (model.config().horizon < kReportHorizons.back()) {
    throw ConfigError("evaluation needs a horizon of at least 12 steps, model has " +
                      std::to_string(model.config().horizon));
  }
  EvalReport report;
  report.variant = std::string(variant_name(model.config().variant));
  report.seed = model.config().seed;
  report.dataset_id = dataset_id;
  report.horizons = horizon_metrics(test.raw_targets, predict_dataset(model, test));
  return report;
}

double trimmed_mean(std::span<const double> values, std::size_t trim) {
  const std::size_t n = values.size();
  if (trim >= n) throw ConfigError("trimmed mean: cannot drop " + std::to_string(trim) + " of " + std::to_string(n));
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  if (sd == 0.0) return mean;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(values[a] - mean) / sd > std::abs(values[b] - mean) / sd;
  });
  double kept = 0.0;
  for (std::size_t i = trim; i < n; ++i) kept += values[order[i]];
  return kept / static_cast<double>(n - trim);
}

double trimmed_mean_protocol(std::span<const double> runs, std::size_t expected_runs) {
  if (expected_runs < 5 || expected_runs % 5 != 0) {
    throw ConfigError("run count must be a positive multiple of 5 so that 20% can be trimmed");
  }
  if (runs.size() != expected_runs) {
    throw ConfigError("protocol expects " + std::to_string(expected_runs) + " runs, got " +
                      std::to_string(runs.size()));
  }
  return trimmed_mean(runs, expected_runs / 5);
}

namespace {

std::string cell(double v, int precision) {
  if (std::isnan(v)) return "undefined";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

std::string format_report_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s", "Model");
  out << buf;
  for (std::size_t steps : kReportHorizons) {
    const std::string title = std::to_string(steps * 5) + "m(" + std::to_string(steps) + "step)";
    std::snprintf(buf, sizeof buf, " | %-47s", title.c_str());
    out << buf;
  }
  out << '\n';
  std::snprintf(buf, sizeof buf, "%-20s", "");
  out << buf;
  for (std::size_t i = 0; i < kReportHorizons.size(); ++i) {
    std::snprintf(buf, sizeof buf, " | %11s %11s %11s %11s", "MAE", "MSE", "RMSE", "MAPE(%)");
    out << buf;
  }
  out << '\n';
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-20s", r.variant.c_str());
    out << buf;
    for (std::size_t steps : kReportHorizons) {
      const Metrics& m = r.at(steps);
      std::snprintf(buf, sizeof buf, " | %11s %11s %11s %11s", cell(m.mae, 4).c_str(), cell(m.mse, 4).c_str(),
                    cell(m.rmse, 4).c_str(), cell(m.mape, 4).c_str());
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string format_report_records(const std::vector<EvalReport>& reports, const std::string& manifest_hash) {
  std::ostringstream out;
  out << "# manifest=" << manifest_hash << '\n';
  out << "variant,seed,dataset,horizon_steps,horizon_minutes,metric,value\n";
  for (const auto& r : reports) {
    for (const auto& h : r.horizons) {
      const std::pair<const char*, double> items[] = {
          {"MAE", h.metrics.mae}, {"MSE", h.metrics.mse}, {"RMSE", h.metrics.rmse}, {"MAPE", h.metrics.mape}};
      for (const auto& [name, value] : items) {
        out << r.variant << ',' << r.seed << ',' << r.dataset_id << ',' << h.steps << ',' << h.steps * 5 << ','
            << name << ',' << (std::isnan(value) ? std::string("undefined") : format_double(value)) << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace mscmhmst
