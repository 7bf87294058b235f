#include "mscmhmst/model.hpp"

#include <cmath>

#include "mscmhmst/errors.hpp"
#include "mscmhmst/random.hpp"

namespace mscmhmst {

Tensor init_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed, const std::string& name) {
  Tensor t(std::move(shape));
  Rng rng(derive_seed(seed, "init." + name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

namespace {

void add_conv(ParameterSet& params, const std::string& name, std::size_t c_out, std::size_t c_in, std::size_t k,
              std::uint64_t seed) {
  params.add(name + ".w", init_uniform({c_out, c_in, k}, c_in * k, seed, name + ".w"));
  params.add(name + ".b", Tensor({c_out}, 0.0));
}

void add_linear(ParameterSet& params, const std::string& name, std::size_t d_in, std::size_t d_out,
                std::uint64_t seed) {
  params.add(name + ".w", init_uniform({d_in, d_out}, d_in, seed, name + ".w"));
  params.add(name + ".b", Tensor({d_out}, 0.0));
}

void add_layer_norm(ParameterSet& params, const std::string& name, std::size_t d) {
  params.add(name + ".gain", Tensor({d}, 1.0));
  params.add(name + ".shift", Tensor({d}, 0.0));
}

Var conv(Graph& g, ParameterSet& params, const std::string& name, const Var& x) {
  return conv1d_same(x, g.parameter(params, name + ".w"), g.parameter(params, name + ".b"));
}

Var dense(Graph& g, ParameterSet& params, const std::string& name, const Var& x) {
  return linear(x, g.parameter(params, name + ".w"), g.parameter(params, name + ".b"));
}

std::string branch_name(const std::string& prefix, int k) { return prefix + ".k" + std::to_string(k); }

std::string head_name(const std::string& prefix, std::size_t head, std::size_t scale) {
  return prefix + ".head" + std::to_string(head) + ".s" + std::to_string(scale);
}

}  // namespace

void MultiScaleConvBlock::init(ParameterSet& params, std::uint64_t seed) const {
  for (int k : kernels) {
    add_conv(params, branch_name(prefix, k), branch_channels, in_channels, static_cast<std::size_t>(k), seed);
  }
  if (residual) add_conv(params, prefix + ".res", out_channels(), in_channels, 1, seed);
}

Var MultiScaleConvBlock::operator()(Graph& graph, ParameterSet& params, const Var& x) const {
  std::vector<Var> branches;
  branches.reserve(kernels.size());
  for (int k : kernels) branches.push_back(relu(conv(graph, params, branch_name(prefix, k), x)));
  Var out = concat_channels(branches);
  if (residual) out = add(out, conv(graph, params, prefix + ".res", x));
  return out;
}

void ResidualConvBlock::init(ParameterSet& params, std::uint64_t seed) const {
  add_conv(params, prefix, channels, channels, 3, seed);
}

Var ResidualConvBlock::operator()(Graph& graph, ParameterSet& params, const Var& x) const {
  return relu(add(x, conv(graph, params, prefix, x)));
}

std::size_t MhmsAttention::out_channels() const {
  std::size_t total = 0;
  for (const auto& h : heads) total += h.size() * head_channels;
  return total;
}

void MhmsAttention::init(ParameterSet& params, std::uint64_t seed) const {
  if (heads.empty()) throw ConfigError("mhms_attention needs at least one head");
  for (std::size_t i = 0; i < heads.size(); ++i) {
    for (std::size_t j = 0; j < heads[i].size(); ++j) {
      const auto k = static_cast<std::size_t>(heads[i].scales()[j]);
      const std::string name = head_name(prefix, i, j);
      add_conv(params, name + ".feat", head_channels, in_channels, k, seed);
      add_conv(params, name + ".attn", head_channels, head_channels, k, seed);
    }
  }
}

Var MhmsAttention::operator()(Graph& graph, ParameterSet& params, const Var& x,
                              std::vector<Var>* attention_maps) const {
  if (heads.empty()) throw ConfigError("mhms_attention needs at least one head");
  std::vector<Var> head_outputs;
  head_outputs.reserve(heads.size());
  for (std::size_t i = 0; i < heads.size(); ++i) {
    std::vector<Var> weighted;
    for (std::size_t j = 0; j < heads[i].size(); ++j) {
      const std::string name = head_name(prefix, i, j);
      Var feature = conv(graph, params, name + ".feat", x);
      Var attention = prune_below(sigmoid(conv(graph, params, name + ".attn", feature)), prune_threshold);
      if (attention_maps) attention_maps->push_back(attention);
      weighted.push_back(hadamard(attention, feature));
    }
    head_outputs.push_back(concat_channels(weighted));
  }
  return concat_channels(head_outputs);
}

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) throw ConfigError("positional encoding needs an even d_model");
  Tensor pe({length, d_model});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe[pos * d_model + 2 * i] = std::sin(angle);
      pe[pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return pe;
}

void TransformerEncoderLayer::init(ParameterSet& params, std::uint64_t seed) const {
  for (const char* proj : {".q", ".k", ".v", ".o"}) add_linear(params, prefix + proj, d_model, d_model, seed);
  add_layer_norm(params, prefix + ".ln1", d_model);
  add_linear(params, prefix + ".ffn1", d_model, 4 * d_model, seed);
  add_linear(params, prefix + ".ffn2", 4 * d_model, d_model, seed);
  add_layer_norm(params, prefix + ".ln2", d_model);
}

Var TransformerEncoderLayer::operator()(Graph& graph, ParameterSet& params, const Var& x,
                                        std::vector<Var>* attention_weights) const {
  if (x.shape().size() != 3 || x.shape()[2] != d_model) {
    throw ConfigError("transformer encoder layer expects [B, L, " + std::to_string(d_model) + "], got " +
                      shape_string(x.shape()));
  }
  if (heads == 0 || d_model % heads != 0) throw ConfigError("d_model must be divisible by encoder heads");
  const std::size_t d_head = d_model / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));

  Var q = dense(graph, params, prefix + ".q", x);
  Var k = dense(graph, params, prefix + ".k", x);
  Var v = dense(graph, params, prefix + ".v", x);
  std::vector<Var> head_out;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = slice_last(q, h * d_head, d_head);
    Var kh = slice_last(k, h * d_head, d_head);
    Var vh = slice_last(v, h * d_head, d_head);
    Var weights = softmax_rows(scale(batched_matmul(qh, kh, true), inv_sqrt));
    if (attention_weights) attention_weights->push_back(weights);
    head_out.push_back(batched_matmul(weights, vh));
  }
  Var attended = dense(graph, params, prefix + ".o", concat_last(head_out));
  Var y = layer_norm(add(x, attended), graph.parameter(params, prefix + ".ln1.gain"),
                     graph.parameter(params, prefix + ".ln1.shift"));
  Var ffn = dense(graph, params, prefix + ".ffn2", relu(dense(graph, params, prefix + ".ffn1", y)));
  return layer_norm(add(y, ffn), graph.parameter(params, prefix + ".ln2.gain"),
                    graph.parameter(params, prefix + ".ln2.shift"));
}

std::vector<std::string> ModelLayout::describe() const {
  std::vector<std::string> stages;
  stages.push_back(multi_scale_encoder ? "multi_scale_conv_block" : "conv1d_k3");
  if (residual_projection) stages.push_back("residual_projection_1x1");
  for (std::size_t r = 0; r < residual_blocks; ++r) stages.push_back("residual_block");
  if (!heads.empty()) stages.push_back("mhms_attention x" + std::to_string(heads.size()));
  stages.push_back("projection_to_d_model");
  stages.push_back("positional_encoding");
  for (std::size_t l = 0; l < encoder_layers; ++l) stages.push_back("transformer_encoder_layer");
  stages.push_back("fc1_relu");
  stages.push_back("fc2");
  return stages;
}

ModelLayout resolve_layout(const ModelConfig& config) {
  const std::vector<HeadSpec>& all_heads = config.head_specs.empty() ? default_head_specs() : config.head_specs;
  auto first_heads = [&](std::size_t n) {
    if (all_heads.size() < n) {
      throw ConfigError(std::string(variant_name(config.variant)) + " needs " + std::to_string(n) +
                        " head specs, only " + std::to_string(all_heads.size()) + " configured");
    }
    return std::vector<HeadSpec>(all_heads.begin(), all_heads.begin() + static_cast<std::ptrdiff_t>(n));
  };

  ModelLayout layout;
  layout.residual_projection = config.residual;
  layout.encoder_layers = config.encoder_layers;
  switch (config.variant) {
    case Variant::MSCMHMST:
      layout.residual_projection = true;
      layout.heads = all_heads;
      break;
    case Variant::MSCMHMST_4:
      layout.heads = first_heads(4);
      break;
    case Variant::MSCMHMST_8:
      layout.heads = first_heads(8);
      break;
    case Variant::MSCMHMST_16:
      layout.heads = first_heads(16);
      break;
    case Variant::CNN1D_Transformer:
      layout.multi_scale_encoder = false;
      break;
    case Variant::CNN1D_MHMST:
      layout.multi_scale_encoder = false;
      layout.heads = all_heads;
      break;
    case Variant::MSC_Transformer:
      break;
    case Variant::MSC1R_MHMST1L:
    case Variant::MSC2R_MHMST2L:
    case Variant::MSC3R_MHMST3L: {
      const std::size_t depth = config.variant == Variant::MSC1R_MHMST1L   ? 1
                                : config.variant == Variant::MSC2R_MHMST2L ? 2
                                                                           : 3;
      layout.residual_blocks = depth;
      layout.encoder_layers += depth;
      layout.heads = all_heads;
      break;
    }
  }
  return layout;
}

Model::Model(ModelConfig config, ModelLayout layout) : config_(std::move(config)), layout_(std::move(layout)) {}

Model Model::build(const ModelConfig& config) {
  config.validate();
  Model model(config, resolve_layout(config));
  const ModelLayout& lay = model.layout_;
  const std::uint64_t seed = config.seed;
  ParameterSet& params = model.params_;

  const std::size_t block_channels = config.msc_kernels.size() * config.branch_channels;
  if (lay.multi_scale_encoder) {
    model.msc_ = {"msc", config.msc_kernels, config.input_channels, config.branch_channels, lay.residual_projection};
  } else {
    model.msc_ = {"cnn1d", {3}, config.input_channels, block_channels, lay.residual_projection};
  }
  model.msc_.init(params, seed);
  model.encoded_channels_ = model.msc_.out_channels();

  for (std::size_t r = 0; r < lay.residual_blocks; ++r) {
    model.residual_blocks_.push_back({"resblock" + std::to_string(r), model.encoded_channels_});
    model.residual_blocks_.back().init(params, seed);
  }

  std::size_t channels = model.encoded_channels_;
  if (!lay.heads.empty()) {
    model.mhms_ = {"mhms", lay.heads, channels, config.branch_channels, config.prune_threshold};
    model.mhms_.init(params, seed);
    channels = model.mhms_.out_channels();
  }

  add_linear(params, "proj", channels, config.d_model, seed);
  for (std::size_t l = 0; l < lay.encoder_layers; ++l) {
    model.encoder_.push_back({"enc" + std::to_string(l), config.d_model, config.encoder_heads});
    model.encoder_.back().init(params, seed);
  }
  add_linear(params, "fc1", config.history * config.d_model, config.fc_hidden, seed);
  add_linear(params, "fc2", config.fc_hidden, config.input_channels * config.horizon, seed);
  model.positional_ = positional_encoding(config.history, config.d_model);
  return model;
}

Var Model::forward(Graph& graph, const Var& batch, ForwardTrace* trace) {
  const Shape& s = batch.shape();
  Var x = batch;
  if (s.size() == 2) x = reshape(batch, {1, s[0], s[1]});
  const Shape& xs = x.shape();
  if (xs.size() != 3 || xs[1] != config_.input_channels || xs[2] != config_.history) {
    throw ConfigError("model expects [B, " + std::to_string(config_.input_channels) + ", " +
                      std::to_string(config_.history) + "], got " + shape_string(s));
  }
  const std::size_t B = xs[0];

  Var h = msc_(graph, params_, x);
  for (const auto& block : residual_blocks_) h = block(graph, params_, h);
  if (trace) trace->encoded = h;
  if (!layout_.heads.empty()) h = mhms_(graph, params_, h, trace ? &trace->attention_maps : nullptr);
  if (trace) trace->attended = h;

  // [B, C, L] -> [B, L, C] -> [B, L, d_model]
  Var seq = dense(graph, params_, "proj", transpose_last2(h));
  seq = add_broadcast(seq, graph.constant(positional_));
  for (const auto& layer : encoder_) seq = layer(graph, params_, seq, trace ? &trace->self_attention : nullptr);

  Var flat = reshape(seq, {B, config_.history * config_.d_model});
  Var hidden = relu(dense(graph, params_, "fc1", flat));
  Var out = dense(graph, params_, "fc2", hidden);
  return reshape(out, {B, config_.input_channels, config_.horizon});
}

Tensor Model::predict(const Tensor& batch) const {
  Graph graph(false);
  // An unrecorded graph only reads parameter values.
  auto& self = const_cast<Model&>(*this);
  return self.forward(graph, graph.constant(batch)).value();
}

}  // namespace mscmhmst
