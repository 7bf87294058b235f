#include "mscmhmst/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

#include "mscmhmst/errors.hpp"

namespace mscmhmst {

namespace {

constexpr std::array<std::string_view, 10> kVariantNames{
    "MSCMHMST",          "MSCMHMST_4",  "MSCMHMST_8",      "MSCMHMST_16",   "CNN1D_Transformer",
    "CNN1D_MHMST",       "MSC_Transformer", "MSC1R_MHMST1L", "MSC2R_MHMST2L", "MSC3R_MHMST3L",
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "unsigned integer");
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "boolean");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  if (value.empty()) return out;
  for (const auto& item : split_on(value, ',')) out.push_back(static_cast<int>(parse_uint(key, item)));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& items, const char* sep) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out << sep;
    out << items[i];
  }
  return out.str();
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string_view variant_name(Variant v) { return kVariantNames[static_cast<std::size_t>(v)]; }

Variant parse_variant(std::string_view name) {
  std::string canonical(name);
  if (canonical.starts_with("1DCNN_")) canonical = "CNN1D_" + canonical.substr(6);
  for (std::size_t i = 0; i < kVariantNames.size(); ++i) {
    if (kVariantNames[i] == canonical) return static_cast<Variant>(i);
  }
  throw ConfigError("unknown variant: " + std::string(name));
}

HeadSpec::HeadSpec(std::vector<int> scales) : scales_(std::move(scales)) {
  if (scales_.empty()) throw ConfigError("head spec needs at least one scale");
  std::sort(scales_.begin(), scales_.end());
  for (std::size_t i = 0; i < scales_.size(); ++i) {
    if (scales_[i] < 1 || scales_[i] % 2 == 0) {
      throw ConfigError("head spec scales must be odd and >= 1, got " + std::to_string(scales_[i]));
    }
    if (i && scales_[i] == scales_[i - 1]) throw ConfigError("head spec scales must be distinct");
  }
}

HeadSpec HeadSpec::rounded(std::vector<int> scales) {
  static std::once_flag warned;
  bool changed = false;
  for (auto& s : scales) {
    if (s >= 1 && s % 2 == 0) {
      ++s;
      changed = true;
    }
  }
  if (changed) {
    std::call_once(warned, [] {
      std::clog << "warning: even attention kernel sizes rounded up to the next odd size "
                   "(2->3, 4->5, 6->7, 8->9, 10->11)\n";
    });
  }
  return HeadSpec(std::move(scales));
}

std::string HeadSpec::to_string() const { return join(scales_, ","); }

const std::vector<std::vector<int>>& published_head_pairs() {
  static const std::vector<std::vector<int>> pairs{
      {1, 3}, {3, 5}, {5, 7}, {7, 9}, {1, 5}, {3, 7}, {5, 9}, {1, 7},
      {1, 9}, {2, 6}, {4, 8}, {3, 9}, {2, 4}, {4, 6}, {6, 8}, {8, 10},
  };
  return pairs;
}

const std::vector<HeadSpec>& default_head_specs() {
  static const std::vector<HeadSpec> specs = [] {
    std::vector<HeadSpec> out;
    for (const auto& p : published_head_pairs()) out.push_back(HeadSpec::rounded(p));
    return out;
  }();
  return specs;
}

void ModelConfig::validate() const {
  if (msc_kernels.empty()) throw ConfigError("msc_kernels must not be empty");
  for (int k : msc_kernels) {
    if (k < 1 || k % 2 == 0) throw ConfigError("msc_kernels must be odd and >= 1, got " + std::to_string(k));
  }
  if (branch_channels == 0) throw ConfigError("branch_channels must be >= 1");
  if (d_model == 0 || d_model % 2 != 0) throw ConfigError("d_model must be even and >= 2");
  if (encoder_heads == 0 || d_model % encoder_heads != 0) {
    throw ConfigError("d_model must be divisible by encoder_heads");
  }
  if (fc_hidden == 0) throw ConfigError("fc_hidden must be >= 1");
  if (!(prune_threshold >= 0.0 && prune_threshold < 1.0)) throw ConfigError("prune_threshold must lie in [0, 1)");
  if (history == 0 || horizon == 0) throw ConfigError("history and horizon must be >= 1");
  if (input_channels == 0) throw ConfigError("input_channels must be >= 1");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "variant",        "msc_kernels",  "branch_channels", "head_specs", "d_model",    "encoder_layers",
      "encoder_heads",  "fc_hidden",    "prune_threshold", "residual",   "history",    "horizon",
      "input_channels", "seed",         "batch_size",      "learning_rate", "epochs",  "loss",
      "adam_beta1",     "adam_beta2",   "adam_eps",        "shuffle",    "split",      "sensors",
  };
  return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "variant") {
    model.variant = parse_variant(value);
  } else if (key == "msc_kernels") {
    model.msc_kernels = parse_int_list(key, value);
  } else if (key == "branch_channels") {
    model.branch_channels = parse_uint(key, value);
  } else if (key == "head_specs") {
    model.head_specs.clear();
    if (!value.empty() && value != "default") {
      for (const auto& spec : split_on(value, ';')) model.head_specs.push_back(HeadSpec::rounded(parse_int_list(key, spec)));
    }
  } else if (key == "d_model") {
    model.d_model = parse_uint(key, value);
  } else if (key == "encoder_layers") {
    model.encoder_layers = parse_uint(key, value);
  } else if (key == "encoder_heads") {
    model.encoder_heads = parse_uint(key, value);
  } else if (key == "fc_hidden") {
    model.fc_hidden = parse_uint(key, value);
  } else if (key == "prune_threshold") {
    model.prune_threshold = parse_double(key, value);
  } else if (key == "residual") {
    model.residual = parse_bool(key, value);
  } else if (key == "history") {
    model.history = parse_uint(key, value);
  } else if (key == "horizon") {
    model.horizon = parse_uint(key, value);
  } else if (key == "input_channels") {
    model.input_channels = parse_uint(key, value);
  } else if (key == "seed") {
    model.seed = parse_uint(key, value);
    train.seed = model.seed;
  } else if (key == "batch_size") {
    train.batch_size = parse_uint(key, value);
  } else if (key == "learning_rate") {
    train.learning_rate = parse_double(key, value);
  } else if (key == "epochs") {
    train.epochs = parse_uint(key, value);
  } else if (key == "loss") {
    if (value == "mse") {
      train.loss = LossKind::mse;
    } else if (value == "mae") {
      train.loss = LossKind::mae;
    } else {
      bad_value(key, value, "mse or mae");
    }
  } else if (key == "adam_beta1") {
    train.beta1 = parse_double(key, value);
  } else if (key == "adam_beta2") {
    train.beta2 = parse_double(key, value);
  } else if (key == "adam_eps") {
    train.adam_eps = parse_double(key, value);
  } else if (key == "shuffle") {
    train.shuffle = parse_bool(key, value);
  } else if (key == "split") {
    if (value != "auto" && value != "pems04" && value != "pems08") {
      auto parts = split_on(value, '/');
      if (parts.size() != 3) bad_value(key, value, "auto, pems04, pems08 or train/val/test");
      for (const auto& p : parts) parse_uint(key, p);
    }
    split = value;
  } else if (key == "sensors") {
    sensors.clear();
    for (int s : parse_int_list(key, value)) sensors.push_back(static_cast<std::size_t>(s));
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::to_pairs() const {
  std::vector<std::string> specs;
  for (const auto& h : model.head_specs) specs.push_back(h.to_string());
  return {
      {"variant", std::string(variant_name(model.variant))},
      {"msc_kernels", join(model.msc_kernels, ",")},
      {"branch_channels", std::to_string(model.branch_channels)},
      {"head_specs", specs.empty() ? "default" : join(specs, ";")},
      {"d_model", std::to_string(model.d_model)},
      {"encoder_layers", std::to_string(model.encoder_layers)},
      {"encoder_heads", std::to_string(model.encoder_heads)},
      {"fc_hidden", std::to_string(model.fc_hidden)},
      {"prune_threshold", format_double(model.prune_threshold)},
      {"residual", model.residual ? "true" : "false"},
      {"history", std::to_string(model.history)},
      {"horizon", std::to_string(model.horizon)},
      {"input_channels", std::to_string(model.input_channels)},
      {"seed", std::to_string(model.seed)},
      {"batch_size", std::to_string(train.batch_size)},
      {"learning_rate", format_double(train.learning_rate)},
      {"epochs", std::to_string(train.epochs)},
      {"loss", train.loss == LossKind::mse ? "mse" : "mae"},
      {"adam_beta1", format_double(train.beta1)},
      {"adam_beta2", format_double(train.beta2)},
      {"adam_eps", format_double(train.adam_eps)},
      {"shuffle", train.shuffle ? "true" : "false"},
      {"split", split},
      {"sensors", join(sensors, ",")},
  };
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_pairs()) out += k + " = " + v + "\n";
  return out;
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");
    cfg.set(key, t.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

}  // namespace mscmhmst
