#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mscmhmst/config.hpp"
#include "mscmhmst/dataio.hpp"

namespace mscmhmst {

inline constexpr const char* kToolVersion = "0.1.0";

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitCheckpoint = 4,
};

/// Everything needed to re-run an experiment bit for bit. Artifact paths
/// are stored relative to the output directory so that the hash does not
/// depend on where a run was written.
struct RunManifest {
  std::string command;
  ExperimentConfig config;
  std::string dataset_fingerprint;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> artifacts;
  std::string tool_version = kToolVersion;

  std::string to_json() const;
  /// FNV-1a of to_json(), hex.
  std::string hash() const;
};

/// Train/validation/test windows cut from one series with train-only
/// normalization statistics.
struct PreparedData {
  FlowSeries series;
  SplitSteps split;
  NormStats stats;
  WindowedDataset train;
  WindowedDataset val;
  WindowedDataset test;
};

SplitSteps resolve_split(const std::string& split, std::size_t steps);
/// Applies the sensor subset and split, and windows every segment with the
/// configured history and horizon.
PreparedData prepare_data(const ExperimentConfig& config, const FlowSeries& series);

/// The small configuration the gradient check runs by default: 2 sensors,
/// 12-step history, 6-step horizon, 2 heads, 2 channels per branch, one
/// encoder layer.
ExperimentConfig gradcheck_default_config();

/// Entry point of the `mscmhmst` tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mscmhmst
