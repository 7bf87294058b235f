#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mscmhmst {

enum class Variant {
  MSCMHMST,
  MSCMHMST_4,
  MSCMHMST_8,
  MSCMHMST_16,
  CNN1D_Transformer,
  CNN1D_MHMST,
  MSC_Transformer,
  MSC1R_MHMST1L,
  MSC2R_MHMST2L,
  MSC3R_MHMST3L,
};

inline constexpr std::array<Variant, 10> kAllVariants{
    Variant::MSCMHMST,          Variant::MSCMHMST_4,  Variant::MSCMHMST_8,      Variant::MSCMHMST_16,
    Variant::CNN1D_Transformer, Variant::CNN1D_MHMST, Variant::MSC_Transformer, Variant::MSC1R_MHMST1L,
    Variant::MSC2R_MHMST2L,     Variant::MSC3R_MHMST3L,
};

std::string_view variant_name(Variant v);
/// Accepts the canonical names and the "1DCNN_" spelling of the CNN1D variants.
Variant parse_variant(std::string_view name);

/// Kernel sizes of one attention head. Sizes are odd, >= 1, distinct and
/// kept in ascending order.
class HeadSpec {
 public:
  explicit HeadSpec(std::vector<int> scales);

  /// Even sizes are rounded up to the next odd size (2 -> 3, ..., 10 -> 11)
  /// with a one-time warning, since "same" convolution needs a center tap.
  static HeadSpec rounded(std::vector<int> scales);

  const std::vector<int>& scales() const { return scales_; }
  std::size_t size() const { return scales_.size(); }
  std::string to_string() const;

  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;

 private:
  std::vector<int> scales_;
};

/// The 16 published head-scale pairs, in order, after odd rounding.
const std::vector<HeadSpec>& default_head_specs();
/// The same pairs exactly as published (some even).
const std::vector<std::vector<int>>& published_head_pairs();

struct ModelConfig {
  Variant variant = Variant::MSCMHMST;
  std::vector<int> msc_kernels{3, 5, 7, 9};
  /// Channels per convolution branch; also the channel count c_h of each
  /// attention feature map.
  std::size_t branch_channels = 8;
  /// Empty means "the variant's default head list".
  std::vector<HeadSpec> head_specs;
  std::size_t d_model = 8;
  std::size_t encoder_layers = 2;
  std::size_t encoder_heads = 2;
  std::size_t fc_hidden = 64;
  double prune_threshold = 0.0;
  bool residual = false;
  std::size_t history = 12;
  std::size_t horizon = 12;
  std::size_t input_channels = 2;
  std::uint64_t seed = 1;

  void validate() const;
};

enum class LossKind { mse, mae };

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  std::size_t epochs = 100;
  LossKind loss = LossKind::mse;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  bool shuffle = true;

  void validate() const;
};

/// Everything a run needs: model, optimizer and data selection. Serialized
/// as flat `key = value` lines; unknown keys are errors.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  /// "auto" (70/10/20), "pems04", "pems08" or "train/val/test" step counts.
  std::string split = "auto";
  /// Column indices to keep; empty keeps every sensor.
  std::vector<std::size_t> sensors;

  /// Applies one key. Throws ConfigError naming the key on unknown keys or
  /// unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Canonical key/value echo in schema order; feeding it back through
  /// set() reproduces this config.
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  std::string to_text() const;
  void validate() const;

  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// Every key accepted by ExperimentConfig::set, in schema order.
const std::vector<std::string>& config_keys();

std::string format_double(double v);

}  // namespace mscmhmst
