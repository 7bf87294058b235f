#include "mscmhmst/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mscmhmst/errors.hpp"

namespace mscmhmst {

namespace {

constexpr std::string_view kMagic = "MSCMHMST-CHECKPOINT";

void append_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<double>(bits);
}

nlohmann::json tensor_json(const Tensor& t) { return nlohmann::json(t.values()); }

Tensor tensor_from_json(const nlohmann::json& j) {
  auto values = j.get<std::vector<double>>();
  if (values.empty()) throw CheckpointError("empty normalization statistics");
  return Tensor::vector(std::move(values));
}

}  // namespace

std::string serialize_checkpoint(const Model& model, const ExperimentConfig& config, const NormStats& stats,
                                 const std::string& manifest_hash) {
  nlohmann::json header;
  header["format"] = "mscmhmst-checkpoint";
  header["version"] = kCheckpointVersion;
  header["manifest_hash"] = manifest_hash;
  nlohmann::json cfg = nlohmann::json::array();
  for (const auto& [k, v] : config.to_pairs()) cfg.push_back({k, v});
  header["config"] = cfg;
  header["norm"] = {{"mean", tensor_json(stats.mean)}, {"std", tensor_json(stats.std)}};

  nlohmann::json arrays = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& e : model.parameters().entries()) {
    arrays.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"offset", offset}, {"count", e.value.size()}});
    offset += e.value.size() * 8;
  }
  header["arrays"] = arrays;
  header["total_parameters"] = model.parameter_count();

  const std::string text = header.dump();
  std::string out;
  out.reserve(text.size() + offset + 64);
  out += kMagic;
  out += '\n';
  out += std::to_string(text.size());
  out += '\n';
  out += text;
  out += '\n';
  for (const auto& e : model.parameters().entries()) {
    for (double v : e.value.data()) append_le(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  std::size_t pos = bytes.find('\n');
  if (pos == std::string::npos || std::string_view(bytes).substr(0, pos) != kMagic) {
    throw CheckpointError("not a checkpoint (bad magic line)");
  }
  const std::size_t len_end = bytes.find('\n', pos + 1);
  if (len_end == std::string::npos) throw CheckpointError("truncated checkpoint header");
  std::size_t header_len = 0;
  try {
    std::size_t used = 0;
    header_len = std::stoull(bytes.substr(pos + 1, len_end - pos - 1), &used);
    if (used != len_end - pos - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw CheckpointError("corrupted checkpoint header length");
  }
  const std::size_t header_start = len_end + 1;
  if (header_start + header_len + 1 > bytes.size() || bytes[header_start + header_len] != '\n') {
    throw CheckpointError("truncated checkpoint header");
  }
  const std::size_t data_start = header_start + header_len + 1;

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(header_start, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupted checkpoint header: ") + e.what());
  }

  try {
    if (header.at("format") != "mscmhmst-checkpoint") throw CheckpointError("unexpected checkpoint format");
    if (header.at("version").get<int>() != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");

    ExperimentConfig config;
    for (const auto& kv : header.at("config")) config.set(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    config.validate();

    NormStats stats{tensor_from_json(header.at("norm").at("mean")), tensor_from_json(header.at("norm").at("std"))};
    if (stats.mean.size() != config.model.input_channels || stats.std.size() != config.model.input_channels) {
      throw CheckpointError("normalization statistics do not match input_channels");
    }

    Model model = Model::build(config.model);
    auto& entries = model.parameters().entries();
    const auto& arrays = header.at("arrays");
    if (arrays.size() != entries.size()) throw CheckpointError("array manifest does not match the configured model");
    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& a = arrays[i];
      auto& e = entries[i];
      if (a.at("name").get<std::string>() != e.name || a.at("shape").get<Shape>() != e.value.shape() ||
          a.at("offset").get<std::size_t>() != expected_offset || a.at("count").get<std::size_t>() != e.value.size()) {
        throw CheckpointError("array manifest entry " + std::to_string(i) + " does not match the configured model");
      }
      if (data_start + expected_offset + e.value.size() * 8 > bytes.size()) {
        throw CheckpointError("checkpoint truncated in array " + e.name);
      }
      const char* p = bytes.data() + data_start + expected_offset;
      for (std::size_t k = 0; k < e.value.size(); ++k) e.value[k] = read_le(p + 8 * k);
      expected_offset += e.value.size() * 8;
    }
    if (data_start + expected_offset != bytes.size()) throw CheckpointError("trailing bytes after parameter data");
    if (header.at("total_parameters").get<std::size_t>() != model.parameter_count()) {
      throw CheckpointError("total parameter count mismatch");
    }
    return Checkpoint{std::move(config), std::move(model), std::move(stats),
                      header.at("manifest_hash").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupted checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const ExperimentConfig& config,
                     const NormStats& stats, const std::string& manifest_hash) {
  const std::string bytes = serialize_checkpoint(model, config, stats, manifest_hash);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace mscmhmst
