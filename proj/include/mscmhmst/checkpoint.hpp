#pragma once

#include <filesystem>
#include <string>

#include "mscmhmst/config.hpp"
#include "mscmhmst/dataio.hpp"
#include "mscmhmst/model.hpp"

namespace mscmhmst {

inline constexpr int kCheckpointVersion = 1;

/// Checkpoint layout:
///   line 1   "MSCMHMST-CHECKPOINT"
///   line 2   decimal byte length n of the header
///   n bytes  JSON header: format version, config echo, normalization
///            statistics, manifest hash, array manifest (name, shape,
///            byte offset, count) and total parameter count
///   "\n"
///   values   every parameter as little-endian IEEE-754 binary64, in
///            manifest order; offsets are relative to the first value byte
struct Checkpoint {
  ExperimentConfig config;
  Model model;
  NormStats stats;
  std::string manifest_hash;
};

std::string serialize_checkpoint(const Model& model, const ExperimentConfig& config, const NormStats& stats,
                                 const std::string& manifest_hash);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model, const ExperimentConfig& config,
                     const NormStats& stats, const std::string& manifest_hash);
/// Throws CheckpointError on unreadable, malformed, or inconsistent files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mscmhmst
