#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "cdrop/model.hpp"

namespace cdrop {

// Checkpoint = a text descriptor (one "key = value" per line: architecture,
// seed, config hash, tensor shapes) plus a flat little-endian float64 file of
// all parameters in ModelParams::tensors() order. The descriptor's data_file
// entry names the binary, relative to the descriptor's directory.

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
};

void save_checkpoint(const std::filesystem::path& descriptor, const ModelConfig& config,
                     const ModelParams& params, const CheckpointMeta& meta);

/// Throws CheckpointMismatch if the descriptor's architecture differs from
/// `config` or the binary has the wrong size; IoError if files are missing.
ModelParams load_checkpoint(const std::filesystem::path& descriptor, const ModelConfig& config,
                            CheckpointMeta* meta = nullptr);

std::map<std::string, std::string> read_descriptor(const std::filesystem::path& descriptor);

}  // namespace cdrop
