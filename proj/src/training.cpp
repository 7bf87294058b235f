#include "mscmhmst/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mscmhmst/errors.hpp"
#include "mscmhmst/random.hpp"

namespace mscmhmst {

Var loss(const Var& pred, const Var& target, LossKind kind) {
  return kind == LossKind::mse ? mse_loss(pred, target) : mae_loss(pred, target);
}

double loss_value(const Tensor& pred, const Tensor& target, LossKind kind) {
  if (pred.shape() != target.shape()) {
    throw ConfigError("loss: shape mismatch " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    total += kind == LossKind::mse ? d * d : std::abs(d);
  }
  return total / static_cast<double>(pred.size());
}

void adam_step(ParameterSet& params, AdamState& state, const AdamHyper& hyper) {
  auto& entries = params.entries();
  if (state.m.size() != entries.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& e : entries) {
      state.m.emplace_back(e.value.shape(), 0.0);
      state.v.emplace_back(e.value.shape(), 0.0);
    }
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t a = 0; a < entries.size(); ++a) {
    double* p = entries[a].value.raw();
    const double* g = entries[a].grad.raw();
    double* m = state.m[a].raw();
    double* v = state.v[a].raw();
    for (std::size_t i = 0, n = entries[a].value.size(); i < n; ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

double dataset_loss(const Model& model, const WindowedDataset& data, LossKind kind, std::size_t batch_size) {
  const std::size_t N = data.size();
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < N; start += batch_size) {
    const std::size_t end = std::min(N, start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor pred = model.predict(data.gather_inputs(idx));
    total += loss_value(pred, data.gather_targets(idx), kind) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(N);
}

namespace {

void check_compatible(const Model& model, const WindowedDataset& data, const char* which) {
  const ModelConfig& c = model.config();
  if (data.size() == 0) throw ConfigError(std::string(which) + " dataset is empty");
  if (data.sensors() != c.input_channels || data.history != c.history || data.horizon != c.horizon) {
    throw ConfigError(std::string(which) + " dataset windows [S=" + std::to_string(data.sensors()) +
                      ", h=" + std::to_string(data.history) + ", t=" + std::to_string(data.horizon) +
                      "] do not match the model configuration");
  }
}

}  // namespace

TrainHistory train(Model& model, const WindowedDataset& train_set, const WindowedDataset& val_set,
                   const TrainConfig& config) {
  config.validate();
  check_compatible(model, train_set, "training");
  check_compatible(model, val_set, "validation");

  const AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.adam_eps};
  AdamState state;
  Rng shuffle_rng(derive_seed(config.seed, "train.shuffle"));
  ParameterSet& params = model.parameters();

  TrainHistory history;
  history.initial_train_loss = dataset_loss(model, train_set, config.loss);
  history.initial_val_loss = dataset_loss(model, val_set, config.loss);

  std::vector<Tensor> best_values;
  double best = INFINITY;

  const std::size_t N = train_set.size();
  std::vector<std::size_t> order(N);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (config.shuffle) shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < N; start += config.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(N, start + config.batch_size) - start);
      params.zero_grad();
      Graph graph;
      Var pred = model.forward(graph, graph.constant(train_set.gather_inputs(idx)));
      Var l = loss(pred, graph.constant(train_set.gather_targets(idx)), config.loss);
      graph.backward(l);
      adam_step(params, state, hyper);
      loss_sum += l.value().item();
      ++batches;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(batches);
    record.val_loss = dataset_loss(model, val_set, config.loss);
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.epochs.push_back(record);

    if (record.val_loss < best || best_values.empty()) {
      best = record.val_loss;
      history.best_epoch = epoch;
      best_values.clear();
      for (const auto& e : params.entries()) best_values.push_back(e.value);
    }
  }
  params.zero_grad();
  for (std::size_t a = 0; a < best_values.size(); ++a) params.entries()[a].value = best_values[a];
  history.best_val_loss = best;
  return history;
}

std::string history_csv(const TrainHistory& history, const std::string& manifest_hash) {
  std::ostringstream out;
  out << "# manifest=" << manifest_hash << '\n';
  out << "epoch,train_loss,val_loss\n";
  out << "0," << format_double(history.initial_train_loss) << ',' << format_double(history.initial_val_loss) << '\n';
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << '\n';
  }
  return out.str();
}

std::string timing_csv(const TrainHistory& history, const std::string& manifest_hash) {
  std::ostringstream out;
  out << "# manifest=" << manifest_hash << '\n';
  out << "epoch,seconds\n";
  for (const auto& e : history.epochs) out << e.epoch << ',' << format_double(e.seconds) << '\n';
  return out.str();
}

std::vector<GridResult> grid_sweep(const ExperimentConfig& base, const Grid& grid, const WindowedDataset& train_set,
                                   const WindowedDataset& val_set, std::size_t max_combinations) {
  if (grid.empty()) throw ConfigError("grid sweep needs at least one key");
  std::size_t combos = 1;
  for (const auto& [key, values] : grid) {
    if (values.empty()) throw ConfigError("grid key '" + key + "' has no values");
    combos *= values.size();
    if (combos > max_combinations) {
      throw ConfigError("grid has more than " + std::to_string(max_combinations) + " combinations (cap " +
                        std::to_string(max_combinations) + ")");
    }
  }

  std::vector<GridResult> results;
  std::vector<std::size_t> digits(grid.size(), 0);
  for (std::size_t c = 0; c < combos; ++c) {
    // mixed-radix counter, last key varies fastest
    std::size_t rest = c;
    for (std::size_t k = grid.size(); k-- > 0;) {
      digits[k] = rest % grid[k].second.size();
      rest /= grid[k].second.size();
    }
    GridResult r;
    r.config = base;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      r.assignment.emplace_back(grid[k].first, grid[k].second[digits[k]]);
      r.config.set(grid[k].first, grid[k].second[digits[k]]);
    }
    r.config.validate();
    Model model = Model::build(r.config.model);
    r.history = train(model, train_set, val_set, r.config.train);
    results.push_back(std::move(r));
  }
  std::stable_sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
    return a.history.best_val_loss < b.history.best_val_loss;
  });
  return results;
}

}  // namespace mscmhmst
