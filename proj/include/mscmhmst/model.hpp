#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mscmhmst/config.hpp"
#include "mscmhmst/graph.hpp"
#include "mscmhmst/ops.hpp"

namespace mscmhmst {

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from a generator seeded by
/// (seed, array name), so equally named and shaped arrays start equal
/// across variants.
Tensor init_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed, const std::string& name);

/// Parallel "same" convolutions, one per kernel size, each followed by relu
/// and stacked on the channel axis. With `residual` a 1x1 projection of the
/// input is added to the stacked output.
struct MultiScaleConvBlock {
  std::string prefix;
  std::vector<int> kernels;
  std::size_t in_channels = 0;
  std::size_t branch_channels = 0;
  bool residual = false;

  std::size_t out_channels() const { return kernels.size() * branch_channels; }
  void init(ParameterSet& params, std::uint64_t seed) const;
  Var operator()(Graph& graph, ParameterSet& params, const Var& x) const;
};

/// relu(x + conv_3(x)) with matching channel counts.
struct ResidualConvBlock {
  std::string prefix;
  std::size_t channels = 0;

  void init(ParameterSet& params, std::uint64_t seed) const;
  Var operator()(Graph& graph, ParameterSet& params, const Var& x) const;
};

/// Multi-head multi-scale attention. For head i and scale k_j:
///   F_ij = conv_kj(x)                       (head_channels channels)
///   A_ij = sigmoid(conv_kj^head_i(F_ij))    (same shape as F_ij)
///   W_ij = A_ij * F_ij                      (elementwise)
/// with attention entries below prune_threshold zeroed first. Output is the
/// channel concatenation over heads of the concatenation over scales.
struct MhmsAttention {
  std::string prefix;
  std::vector<HeadSpec> heads;
  std::size_t in_channels = 0;
  std::size_t head_channels = 0;
  double prune_threshold = 0.0;

  std::size_t out_channels() const;
  void init(ParameterSet& params, std::uint64_t seed) const;
  /// When `attention_maps` is given, receives every A_ij after pruning, in
  /// (head, scale) order.
  Var operator()(Graph& graph, ParameterSet& params, const Var& x, std::vector<Var>* attention_maps = nullptr) const;
};

/// Sinusoidal encoding: PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(same).
Tensor positional_encoding(std::size_t length, std::size_t d_model);

/// Post-norm encoder layer on [B, L, d]:
///   y = layer_norm(x + MultiHeadSelfAttention(x)); out = layer_norm(y + FFN(y)),
/// FFN = linear(d, 4d) -> relu -> linear(4d, d).
struct TransformerEncoderLayer {
  std::string prefix;
  std::size_t d_model = 0;
  std::size_t heads = 0;

  void init(ParameterSet& params, std::uint64_t seed) const;
  /// When `attention_weights` is given, receives each head's [B, L, L] softmax.
  Var operator()(Graph& graph, ParameterSet& params, const Var& x, std::vector<Var>* attention_weights = nullptr) const;
};

/// Concrete pipeline a variant resolves to.
struct ModelLayout {
  bool multi_scale_encoder = true;  // false: one k=3 convolution
  bool residual_projection = false;
  std::size_t residual_blocks = 0;
  std::vector<HeadSpec> heads;  // empty: no MHMS stage
  std::size_t encoder_layers = 0;

  std::vector<std::string> describe() const;
};

ModelLayout resolve_layout(const ModelConfig& config);

/// Intermediate values of one forward pass, for inspection.
struct ForwardTrace {
  Var encoded;
  Var attended;
  std::vector<Var> attention_maps;
  std::vector<Var> self_attention;
};

/// The forecasting network:
///   encoder -> residual blocks -> MHMS -> per-step projection to d_model
///   -> + positional encoding -> transformer encoder layers -> flatten
///   -> FC1 (relu) -> FC2 -> [C_in, horizon].
class Model {
 public:
  /// Resolves the variant and initializes parameters from config.seed.
  static Model build(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const ModelLayout& layout() const { return layout_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.total_size(); }

  /// [B, C_in, history] (or [C_in, history]) -> [B, C_in, horizon].
  Var forward(Graph& graph, const Var& batch, ForwardTrace* trace = nullptr);
  /// Inference without recording gradients.
  Tensor predict(const Tensor& batch) const;

 private:
  Model(ModelConfig config, ModelLayout layout);

  ModelConfig config_;
  ModelLayout layout_;
  ParameterSet params_;

  std::size_t encoded_channels_ = 0;
  MultiScaleConvBlock msc_;
  std::vector<ResidualConvBlock> residual_blocks_;
  MhmsAttention mhms_;
  std::vector<TransformerEncoderLayer> encoder_;
  Tensor positional_;
};

inline Model build_variant(const ModelConfig& config) { return Model::build(config); }
inline std::size_t count_parameters(const Model& model) { return model.parameter_count(); }

}  // namespace mscmhmst
