#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mscmhmst/config.hpp"
#include "mscmhmst/dataio.hpp"
#include "mscmhmst/model.hpp"

namespace mscmhmst {

/// Mean squared or mean absolute error over all elements.
Var loss(const Var& pred, const Var& target, LossKind kind);
double loss_value(const Tensor& pred, const Tensor& target, LossKind kind);

struct AdamHyper {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update from the current grad buffers. Gradients
/// are left untouched; the caller resets them.
void adam_step(ParameterSet& params, AdamState& state, const AdamHyper& hyper);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  /// Loss of the untrained model over the whole training set.
  double initial_train_loss = 0.0;
  double initial_val_loss = 0.0;
  /// Epoch whose parameters the model holds after train().
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Mean loss over every window of `data`, evaluated in batches.
double dataset_loss(const Model& model, const WindowedDataset& data, LossKind kind, std::size_t batch_size = 256);

/// Minibatch Adam training. Each epoch visits every window once (shuffled
/// from a stream derived from config.seed, last partial batch kept),
/// records the mean batch loss and the validation loss, and at the end
/// the model is left at the epoch with the lowest validation loss.
TrainHistory train(Model& model, const WindowedDataset& train_set, const WindowedDataset& val_set,
                   const TrainConfig& config);

/// epoch,train_loss,val_loss with a leading "# manifest=<hash>" line. Row 0
/// holds the untrained losses. Byte-identical across reruns.
std::string history_csv(const TrainHistory& history, const std::string& manifest_hash);
/// epoch,seconds (wall clock), kept apart so history_csv stays reproducible.
std::string timing_csv(const TrainHistory& history, const std::string& manifest_hash);

using Grid = std::vector<std::pair<std::string, std::vector<std::string>>>;

struct GridResult {
  std::vector<std::pair<std::string, std::string>> assignment;
  ExperimentConfig config;
  TrainHistory history;
};

/// Trains every combination of `grid` (config keys to candidate values) on
/// top of `base` with the base seed and returns them ordered by best
/// validation loss, ties kept in enumeration order.
std::vector<GridResult> grid_sweep(const ExperimentConfig& base, const Grid& grid, const WindowedDataset& train_set,
                                   const WindowedDataset& val_set, std::size_t max_combinations = 64);

}  // namespace mscmhmst
