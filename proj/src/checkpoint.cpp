#include "cdrop/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <vector>

#include "cdrop/error.hpp"

namespace cdrop {

namespace {

constexpr const char* kFormat = "cdrop-checkpoint/1";

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::pair<std::string, std::string>> tensor_shapes(const ModelParams& p) {
  std::vector<std::pair<std::string, std::string>> out;
  auto add = [&](const std::string& name, const DenseLayer& l) {
    out.emplace_back(name + ".weight", std::to_string(l.weight.rows) + "x" + std::to_string(l.weight.cols));
    out.emplace_back(name + ".bias", std::to_string(l.bias.size()));
  };
  add("zeta", p.zeta);
  for (std::size_t l = 0; l < p.drift.layers.size(); ++l) add("drift." + std::to_string(l), p.drift.layers[l]);
  for (std::size_t l = 0; l < p.classifier.layers.size(); ++l) {
    add("classifier." + std::to_string(l), p.classifier.layers[l]);
  }
  return out;
}

std::map<std::string, std::string> architecture(const ModelConfig& c) {
  return {
      {"d_x", std::to_string(c.d_x)},
      {"d_z", std::to_string(c.d_z)},
      {"n_classes", std::to_string(c.n_classes)},
      {"drift_hidden", join(c.drift_hidden)},
      {"drift_activation", to_string(c.drift_activation)},
      {"classifier_hidden", join(c.classifier_hidden)},
      {"classifier_activation", to_string(c.classifier_activation)},
  };
}

}  // namespace

void save_checkpoint(const std::filesystem::path& descriptor, const ModelConfig& config,
                     const ModelParams& params, const CheckpointMeta& meta) {
  std::filesystem::path data_path = descriptor;
  data_path.replace_extension(".bin");

  std::ofstream txt(descriptor);
  if (!txt) fail(ErrorCode::IoError, "cannot write '" + descriptor.string() + "'");
  txt << "format = " << kFormat << '\n';
  for (const auto& [k, v] : architecture(config)) txt << k << " = " << v << '\n';
  txt << "seed = " << meta.seed << '\n';
  txt << "config_hash = " << meta.config_hash << '\n';
  txt << "param_count = " << params.size() << '\n';
  txt << "byte_order = little\n";
  txt << "data_file = " << data_path.filename().string() << '\n';
  for (const auto& [name, shape] : tensor_shapes(params)) txt << "tensor." << name << " = " << shape << '\n';
  if (!txt) fail(ErrorCode::IoError, "failed writing '" + descriptor.string() + "'");

  std::ofstream bin(data_path, std::ios::binary);
  if (!bin) fail(ErrorCode::IoError, "cannot write '" + data_path.string() + "'");
  for (auto t : params.tensors()) {
    for (double v : t) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      bin.write(bytes, 8);
    }
  }
  if (!bin) fail(ErrorCode::IoError, "failed writing '" + data_path.string() + "'");
}

std::map<std::string, std::string> read_descriptor(const std::filesystem::path& descriptor) {
  std::ifstream in(descriptor);
  if (!in) fail(ErrorCode::IoError, "cannot open checkpoint '" + descriptor.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

ModelParams load_checkpoint(const std::filesystem::path& descriptor, const ModelConfig& config,
                            CheckpointMeta* meta) {
  const auto kv = read_descriptor(descriptor);
  auto get = [&](const std::string& key) -> std::string {
    auto it = kv.find(key);
    return it == kv.end() ? std::string{} : it->second;
  };
  if (get("format") != kFormat) {
    fail(ErrorCode::CheckpointMismatch, "'" + descriptor.string() + "' is not a " + kFormat + " descriptor");
  }
  for (const auto& [k, v] : architecture(config)) {
    if (get(k) != v) {
      fail(ErrorCode::CheckpointMismatch,
           "checkpoint " + k + " = '" + get(k) + "' but the configuration expects '" + v + "'");
    }
  }

  // Shape template from the configuration; values are overwritten below.
  RandomStream scratch(0);
  ModelParams params = init_params(config, scratch);
  for (const auto& [name, shape] : tensor_shapes(params)) {
    if (get("tensor." + name) != shape) {
      fail(ErrorCode::CheckpointMismatch, "tensor " + name + " has shape '" + get("tensor." + name) +
                                              "', expected '" + shape + "'");
    }
  }

  const std::filesystem::path data_path = descriptor.parent_path() / get("data_file");
  std::ifstream bin(data_path, std::ios::binary);
  if (!bin) fail(ErrorCode::IoError, "cannot open checkpoint data '" + data_path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (bytes.size() != params.size() * 8) {
    fail(ErrorCode::CheckpointMismatch, "checkpoint data holds " + std::to_string(bytes.size()) +
                                            " bytes, expected " + std::to_string(params.size() * 8));
  }
  std::size_t offset = 0;
  for (auto t : params.tensors()) {
    for (double& v : t) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + b])) << (8 * b);
      }
      v = std::bit_cast<double>(bits);
      offset += 8;
    }
  }
  if (meta) {
    meta->seed = std::stoull(get("seed").empty() ? "0" : get("seed"));
    meta->config_hash = get("config_hash");
  }
  return params;
}

}  // namespace cdrop
