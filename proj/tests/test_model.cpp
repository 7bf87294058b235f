#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "generators.hpp"
#include "mscmhmst/errors.hpp"
#include "mscmhmst/gradcheck.hpp"
#include "mscmhmst/model.hpp"

using namespace mscmhmst;

namespace {

// Closed-form parameter count, written from the layer shapes.
std::size_t expected_parameters(const ModelConfig& c) {
  const std::size_t cin = c.input_channels, b = c.branch_channels, d = c.d_model;
  const std::vector<HeadSpec>& all = c.head_specs.empty() ? default_head_specs() : c.head_specs;
  std::size_t heads = all.size();
  bool multi_scale = true, projection = c.residual;
  std::size_t blocks = 0, layers = c.encoder_layers;
  switch (c.variant) {
    case Variant::MSCMHMST: projection = true; break;
    case Variant::MSCMHMST_4: heads = 4; break;
    case Variant::MSCMHMST_8: heads = 8; break;
    case Variant::MSCMHMST_16: heads = 16; break;
    case Variant::CNN1D_Transformer: multi_scale = false; heads = 0; break;
    case Variant::CNN1D_MHMST: multi_scale = false; break;
    case Variant::MSC_Transformer: heads = 0; break;
    case Variant::MSC1R_MHMST1L: blocks = 1; break;
    case Variant::MSC2R_MHMST2L: blocks = 2; break;
    case Variant::MSC3R_MHMST3L: blocks = 3; break;
  }
  layers += blocks;
  const std::size_t block = c.msc_kernels.size() * b;
  std::size_t n = 0;
  if (multi_scale) {
    for (int k : c.msc_kernels) n += b * cin * static_cast<std::size_t>(k) + b;
  } else {
    n += block * cin * 3 + block;
  }
  if (projection) n += block * cin + block;
  n += blocks * (block * block * 3 + block);
  std::size_t channels = block;
  if (heads) {
    channels = 0;
    for (std::size_t i = 0; i < heads; ++i) {
      for (int k : all[i].scales()) {
        const std::size_t ks = static_cast<std::size_t>(k);
        n += b * block * ks + b;  // feature conv
        n += b * b * ks + b;      // attention conv
        channels += b;
      }
    }
  }
  n += channels * d + d;
  n += layers * (4 * (d * d + d) + 2 * (2 * d) + (d * 4 * d + 4 * d) + (4 * d * d + d));
  n += c.history * d * c.fc_hidden + c.fc_hidden;
  n += c.fc_hidden * cin * c.horizon + cin * c.horizon;
  return n;
}

ModelConfig small_config(Variant v = Variant::MSCMHMST) {
  ModelConfig c;
  c.variant = v;
  c.branch_channels = 2;
  c.d_model = 4;
  c.encoder_layers = 1;
  c.encoder_heads = 2;
  c.fc_hidden = 8;
  c.history = 12;
  c.horizon = 6;
  c.input_channels = 2;
  return c;
}

Tensor random_tensor(gen::Source& src, Shape shape, double lo = -1.0, double hi = 1.0) {
  return Tensor(shape, src.reals(shape_size(shape), lo, hi));
}

std::vector<HeadSpec> random_heads(gen::Source& src, std::size_t max_heads) {
  std::vector<HeadSpec> heads;
  const std::size_t n = src.integer(1, max_heads);
  for (std::size_t i = 0; i < n; ++i) heads.emplace_back(src.odd_scales(3, 9));
  return heads;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("head specs must be odd, positive and distinct") {
    CHECK(HeadSpec({3, 1}).scales() == std::vector<int>{1, 3});
    CHECK_THROWS_AS(HeadSpec({2}), ConfigError);
    CHECK_THROWS_AS(HeadSpec({}), ConfigError);
    CHECK_THROWS_AS(HeadSpec({3, 3}), ConfigError);
    CHECK_THROWS_AS(HeadSpec({-1}), ConfigError);
  }

  TEST_CASE("even published scales round up to odd") {
    CHECK(HeadSpec::rounded({2, 6}).scales() == std::vector<int>{3, 7});
    CHECK(HeadSpec::rounded({8, 10}).scales() == std::vector<int>{9, 11});
    CHECK_THROWS_AS(HeadSpec::rounded({4, 5}), ConfigError);
    const auto& published = published_head_pairs();
    REQUIRE(published.size() == 16);
    CHECK(published[0] == std::vector<int>{1, 3});
    CHECK(default_head_specs().size() == 16);
    for (const auto& h : default_head_specs())
      for (int k : h.scales()) CHECK(k % 2 == 1);
  }

  TEST_CASE("model config validation") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    c.encoder_heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.msc_kernels = {4};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.branch_channels = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("variant names") {
    for (Variant v : kAllVariants) CHECK(parse_variant(variant_name(v)) == v);
    CHECK(parse_variant("1DCNN_Transformer") == Variant::CNN1D_Transformer);
    CHECK_THROWS_AS(parse_variant("MSCMHMST_5"), ConfigError);
  }
}

TEST_SUITE("multi_scale_conv_block") {
  TEST_CASE("default configuration has 32 channels") {
    ModelConfig c;
    MultiScaleConvBlock block{"msc", c.msc_kernels, 2, c.branch_channels, false};
    CHECK(block.out_channels() == 32);
    ParameterSet params;
    block.init(params, 1);
    Graph g(false);
    CHECK(block(g, params, g.constant(Tensor({1, 2, 12}, 0.5))).shape() == Shape{1, 32, 12});
  }

  TEST_CASE("zero input gives zero output with zero biases") {
    MultiScaleConvBlock block{"msc", {3, 5}, 3, 4, false};
    ParameterSet params;
    block.init(params, 7);
    Graph g(false);
    const Tensor y = block(g, params, g.constant(Tensor({3, 10}, 0.0))).value();
    for (double v : y.data()) CHECK(v == 0.0);
  }

  TEST_CASE("identity kernel yields relu of the input") {
    MultiScaleConvBlock block{"msc", {3}, 1, 1, false};
    ParameterSet params;
    block.init(params, 7);
    params.value("msc.k3.w") = Tensor({1, 1, 3}, {0, 1, 0});
    Graph g(false);
    const Tensor y = block(g, params, g.constant(Tensor({1, 4}, {-1, 2, -3, 4}))).value();
    CHECK(y.values() == std::vector<double>{0, 2, 0, 4});
  }

  TEST_CASE("residual projection adds a 1x1 path") {
    MultiScaleConvBlock block{"msc", {3, 5}, 2, 2, true};
    ParameterSet params;
    block.init(params, 3);
    CHECK(params.contains("msc.res.w"));
    CHECK(params.value("msc.res.w").shape() == Shape{4, 2, 1});
  }

  TEST_CASE("channel count equals kernels times branch width") {
    gen::Source src(71);
    for (int trial = 0; trial < 100; ++trial) {
      const std::vector<int> kernels = src.odd_scales(5, 11);
      const std::size_t b = src.integer(1, 4), cin = src.integer(1, 3);
      MultiScaleConvBlock block{"msc", kernels, cin, b, src.coin()};
      ParameterSet params;
      block.init(params, 1);
      Graph g(false);
      const Tensor y = block(g, params, g.constant(random_tensor(src, {cin, 7}))).value();
      CHECK(y.dim(0) == kernels.size() * b);
    }
  }
}

TEST_SUITE("mhms_attention") {
  TEST_CASE("sixteen two-scale heads with two channels give 64") {
    std::vector<HeadSpec> heads(16, HeadSpec({1, 3}));
    MhmsAttention att{"mhms", heads, 8, 2, 0.0};
    CHECK(att.out_channels() == 64);
    CHECK(MhmsAttention{"mhms", default_head_specs(), 32, 2, 0.0}.out_channels() == 64);
  }

  TEST_CASE("channel bookkeeping over random head lists") {
    gen::Source src(73);
    for (int trial = 0; trial < 100; ++trial) {
      const std::vector<HeadSpec> heads = random_heads(src, 6);
      const std::size_t ch = src.integer(1, 3), cin = src.integer(1, 4);
      std::size_t expected = 0;
      for (const auto& h : heads) expected += h.size() * ch;
      MhmsAttention att{"mhms", heads, cin, ch, 0.0};
      ParameterSet params;
      att.init(params, 2);
      Graph g(false);
      const Tensor y = att(g, params, g.constant(random_tensor(src, {2, cin, 5}))).value();
      CHECK(att.out_channels() == expected);
      CHECK(y.shape() == Shape{2, expected, 5});
    }
  }

  TEST_CASE("zero attention convolutions halve the features") {
    const std::vector<HeadSpec> heads{HeadSpec({1, 3}), HeadSpec({5})};
    MhmsAttention att{"mhms", heads, 3, 2, 0.0};
    ParameterSet params;
    att.init(params, 5);
    for (auto& e : params.entries())
      if (e.name.find(".attn.") != std::string::npos) e.value.fill(0.0);
    gen::Source src(79);
    const Tensor x = random_tensor(src, {3, 8});
    Graph g(false);
    Var in = g.constant(x);
    const Tensor y = att(g, params, in).value();
    std::vector<Var> features;
    for (const char* name : {"mhms.head0.s0", "mhms.head0.s1", "mhms.head1.s0"}) {
      const std::string n(name);
      features.push_back(conv1d_same(in, g.parameter(params, n + ".feat.w"), g.parameter(params, n + ".feat.b")));
    }
    const Tensor f = concat_channels(features).value();
    REQUIRE(f.shape() == y.shape());
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(y[i] == 0.5 * f[i]);
  }

  TEST_CASE("attention maps lie in (0,1) and pruning keeps only large entries") {
    gen::Source src(83);
    MhmsAttention att{"mhms", {HeadSpec({1, 3}), HeadSpec({3, 5})}, 2, 2, 0.0};
    ParameterSet params;
    att.init(params, 9);
    const Tensor x = random_tensor(src, {2, 2, 9}, -3, 3);
    std::size_t previous = SIZE_MAX;
    for (double tau : {0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0}) {
      att.prune_threshold = tau;
      Graph g(false);
      std::vector<Var> maps;
      att(g, params, g.constant(x), &maps);
      REQUIRE(maps.size() == 4);
      std::size_t nonzero = 0;
      for (const Var& m : maps) {
        for (double v : m.value().data()) {
          if (tau == 0.0) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
          }
          CHECK((v == 0.0 || v >= tau));
          nonzero += v != 0.0;
        }
      }
      CHECK(nonzero <= previous);
      previous = nonzero;
    }
    CHECK(previous == 0);
  }

  TEST_CASE("zero threshold matches the unpruned composition bitwise") {
    gen::Source src(89);
    const HeadSpec head({1, 3});
    MhmsAttention att{"mhms", {head}, 2, 2, 0.0};
    ParameterSet params;
    att.init(params, 4);
    const Tensor x = random_tensor(src, {1, 2, 7});
    Graph g(false);
    Var in = g.constant(x);
    const Tensor y = att(g, params, in).value();
    std::vector<Var> parts;
    for (const char* name : {"mhms.head0.s0", "mhms.head0.s1"}) {
      const std::string n(name);
      Var f = conv1d_same(in, g.parameter(params, n + ".feat.w"), g.parameter(params, n + ".feat.b"));
      Var a = sigmoid(conv1d_same(f, g.parameter(params, n + ".attn.w"), g.parameter(params, n + ".attn.b")));
      parts.push_back(hadamard(a, f));
    }
    CHECK(concat_channels(parts).value() == y);
  }
}

TEST_SUITE("positional_encoding") {
  TEST_CASE("known entries and range") {
    const Tensor pe = positional_encoding(20, 8);
    CHECK(pe.shape() == Shape{20, 8});
    CHECK(pe.at({0, 0}) == 0.0);
    CHECK(pe.at({0, 1}) == 1.0);
    CHECK(pe.at({1, 0}) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
    CHECK(pe.at({3, 2}) == doctest::Approx(std::sin(3.0 / std::pow(10000.0, 2.0 / 8.0))).epsilon(1e-14));
    CHECK(pe.at({3, 3}) == doctest::Approx(std::cos(3.0 / std::pow(10000.0, 2.0 / 8.0))).epsilon(1e-14));
    for (double v : pe.data()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(positional_encoding(4, 3), ConfigError);
  }
}

TEST_SUITE("transformer_encoder_layer") {
  TEST_CASE("shape preserved and attention rows sum to one") {
    gen::Source src(97);
    TransformerEncoderLayer layer{"enc0", 8, 2};
    ParameterSet params;
    layer.init(params, 3);
    for (std::size_t L : {1u, 2u, 5u, 12u}) {
      Graph g(false);
      std::vector<Var> weights;
      const Tensor x = random_tensor(src, {2, L, 8});
      const Tensor y = layer(g, params, g.constant(x), &weights).value();
      CHECK(y.shape() == x.shape());
      CHECK(y.all_finite());
      REQUIRE(weights.size() == 2);
      for (const Var& w : weights) {
        const Tensor& a = w.value();
        CHECK(a.shape() == Shape{2, L, L});
        for (std::size_t r = 0; r < 2 * L; ++r) {
          double total = 0.0;
          for (std::size_t j = 0; j < L; ++j) total += a[r * L + j];
          CHECK(std::fabs(total - 1.0) <= 1e-12);
          if (L == 1) CHECK(a[r] == 1.0);
        }
      }
    }
  }

  TEST_CASE("single position attends only to itself") {
    // With L = 1 the attention output is the value projection of x.
    TransformerEncoderLayer layer{"enc0", 4, 2};
    ParameterSet params;
    layer.init(params, 8);
    gen::Source src(101);
    const Tensor x = random_tensor(src, {1, 1, 4});
    params.value("enc0.q.w") = random_tensor(src, {4, 4});
    Graph g(false);
    Var in = g.constant(x);
    const Tensor out = layer(g, params, in).value();
    Var v = linear(in, g.parameter(params, "enc0.v.w"), g.parameter(params, "enc0.v.b"));
    Var o = linear(v, g.parameter(params, "enc0.o.w"), g.parameter(params, "enc0.o.b"));
    Var y = layer_norm(add(in, o), g.parameter(params, "enc0.ln1.gain"), g.parameter(params, "enc0.ln1.shift"));
    Var f = linear(relu(linear(y, g.parameter(params, "enc0.ffn1.w"), g.parameter(params, "enc0.ffn1.b"))),
                   g.parameter(params, "enc0.ffn2.w"), g.parameter(params, "enc0.ffn2.b"));
    const Tensor expected =
        layer_norm(add(y, f), g.parameter(params, "enc0.ln2.gain"), g.parameter(params, "enc0.ln2.shift")).value();
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_SUITE("forward") {
  TEST_CASE("output shape") {
    ModelConfig c = small_config();
    c.input_channels = 3;
    Model m = Model::build(c);
    gen::Source src(103);
    const Tensor y = m.predict(random_tensor(src, {2, 3, 12}));
    CHECK(y.shape() == Shape{2, 3, 6});
    CHECK(y.all_finite());
    CHECK(m.predict(random_tensor(src, {3, 12})).shape() == Shape{1, 3, 6});
  }

  TEST_CASE("identical samples give identical rows") {
    Model m = Model::build(small_config());
    gen::Source src(107);
    const Tensor one = random_tensor(src, {2, 12});
    Tensor batch({3, 2, 12});
    for (std::size_t n = 0; n < 3; ++n) std::copy(one.data().begin(), one.data().end(), batch.raw() + n * 24);
    const Tensor y = m.predict(batch);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(y[i] == y[12 + i]);
      CHECK(y[i] == y[24 + i]);
    }
  }

  TEST_CASE("same seed and config give bitwise-equal outputs") {
    gen::Source src(109);
    const Tensor x = random_tensor(src, {2, 2, 12});
    CHECK(Model::build(small_config()).predict(x) == Model::build(small_config()).predict(x));
    ModelConfig other = small_config();
    other.seed = 2;
    CHECK(Model::build(other).predict(x) != Model::build(small_config()).predict(x));
  }

  TEST_CASE("shape mismatch is a configuration error") {
    Model m = Model::build(small_config());
    CHECK_THROWS_AS(m.predict(Tensor({1, 3, 12})), ConfigError);
    CHECK_THROWS_AS(m.predict(Tensor({1, 2, 11})), ConfigError);
  }

  TEST_CASE("full model passes the gradient check") {
    ModelConfig c = small_config();
    c.head_specs = {HeadSpec({1, 3}), HeadSpec({3, 5})};
    c.d_model = 8;
    Model m = Model::build(c);
    gen::Source src(113);
    const Tensor x = random_tensor(src, {2, 2, 12}), target = random_tensor(src, {2, 2, 6});
    auto f = [&](Graph& g, ParameterSet&) { return mse_loss(m.forward(g, g.constant(x)), g.constant(target)); };
    CHECK(gradcheck(f, m.parameters()).max_relative_error <= 1e-4);
  }
}

TEST_SUITE("build_variant") {
  TEST_CASE("parameter counts match the closed form for every variant") {
    for (Variant v : kAllVariants) {
      ModelConfig c;
      c.variant = v;
      CAPTURE(variant_name(v));
      CHECK(build_variant(c).parameter_count() == expected_parameters(c));
      ModelConfig s = small_config(v);
      CHECK(build_variant(s).parameter_count() == expected_parameters(s));
    }
  }

  TEST_CASE("closed form holds over random configurations") {
    gen::Source src(127);
    for (int trial = 0; trial < 40; ++trial) {
      ModelConfig c;
      c.variant = kAllVariants[src.integer(0, kAllVariants.size() - 1)];
      c.msc_kernels = src.odd_scales(4, 9);
      c.branch_channels = src.integer(1, 3);
      c.head_specs = random_heads(src, 3);
      while (c.head_specs.size() < 16) c.head_specs.push_back(c.head_specs.front());
      c.d_model = 2 * src.integer(1, 3);
      c.encoder_heads = src.coin() ? 1 : 2;
      c.encoder_layers = src.integer(0, 2);
      c.fc_hidden = src.integer(1, 9);
      c.history = src.integer(1, 8);
      c.horizon = src.integer(1, 8);
      c.input_channels = src.integer(1, 3);
      c.residual = src.coin();
      CAPTURE(variant_name(c.variant));
      CHECK(build_variant(c).parameter_count() == expected_parameters(c));
    }
  }

  TEST_CASE("head selection variants") {
    ModelConfig c;
    c.variant = Variant::MSCMHMST_4;
    const Model m4 = build_variant(c);
    REQUIRE(m4.layout().heads.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(m4.layout().heads[i] == default_head_specs()[i]);
    c.variant = Variant::MSCMHMST_16;
    c.head_specs = {HeadSpec({1, 3})};
    CHECK_THROWS_AS(build_variant(c), ConfigError);
  }

  TEST_CASE("ordering and containment") {
    ModelConfig c;
    auto count = [&](Variant v) {
      c.variant = v;
      return build_variant(c).parameter_count();
    };
    CHECK(count(Variant::MSC_Transformer) < count(Variant::MSCMHMST_4));
    CHECK(count(Variant::MSCMHMST_4) < count(Variant::MSCMHMST_8));
    CHECK(count(Variant::MSCMHMST_8) < count(Variant::MSCMHMST_16));

    std::set<std::size_t> counts;
    for (Variant v : kAllVariants) counts.insert(count(v));
    CHECK(counts.size() == kAllVariants.size());

    c.variant = Variant::MSCMHMST_4;
    const auto small = build_variant(c).parameters().names();
    c.variant = Variant::MSCMHMST_16;
    const Model big = build_variant(c);
    for (const auto& name : small) {
      CAPTURE(name);
      REQUIRE(big.parameters().contains(name));
    }
  }

  TEST_CASE("shared arrays start equal across variants") {
    ModelConfig c;
    c.variant = Variant::MSCMHMST_4;
    const Model a = build_variant(c);
    c.variant = Variant::MSCMHMST_16;
    const Model b = build_variant(c);
    CHECK(a.parameters().value("msc.k3.w") == b.parameters().value("msc.k3.w"));
    CHECK(a.parameters().value("mhms.head0.s0.feat.w") == b.parameters().value("mhms.head0.s0.feat.w"));
  }

  TEST_CASE("same config twice gives identical parameters") {
    const Model a = build_variant(small_config()), b = build_variant(small_config());
    REQUIRE(a.parameters().count() == b.parameters().count());
    for (std::size_t i = 0; i < a.parameters().count(); ++i)
      CHECK(a.parameters().entries()[i].value == b.parameters().entries()[i].value);
  }

  TEST_CASE("initialization bounds") {
    const Model m = build_variant(small_config());
    const Tensor& w = m.parameters().value("fc1.w");
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.dim(0)));
    for (double v : w.data()) CHECK(std::fabs(v) <= bound);
    for (double v : m.parameters().value("fc1.b").data()) CHECK(v == 0.0);
  }
}

TEST_SUITE("count_parameters") {
  TEST_CASE("single linear layer") {
    ParameterSet params;
    params.add("w", Tensor({2, 3}));
    params.add("b", Tensor({3}));
    CHECK(params.total_size() == 9);
  }

  TEST_CASE("wider branches add parameters") {
    ModelConfig c = small_config();
    const std::size_t before = count_parameters(build_variant(c));
    c.branch_channels *= 2;
    CHECK(count_parameters(build_variant(c)) > before);
  }
}
