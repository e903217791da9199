#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "ust/nn/adam.hpp"
#include "ust/transporter/model.hpp"

namespace ust::transporter {

// Checkpoint container: 4-byte magic "USTC", u32 little-endian manifest
// length, JSON manifest, then concatenated raw little-endian f32 tensor
// payloads located by the manifest's entry table. Round-trips bit-exactly.

struct CheckpointMeta {
  ModelConfig model_config;
  int epoch = 0;
  uint64_t seed = 0;
  std::string rtfpm_hash;
  bool has_adam = false;
};

void save_checkpoint(const std::filesystem::path& path, TransporterModel<float>& model,
                     const nn::AdamState<float>* adam, int epoch, uint64_t seed,
                     const std::string& rtfpm_hash);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  TransporterModel<float> model;
  nn::AdamState<float> adam;  // valid iff meta.has_adam
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Refuses architecture mismatches with a field-by-field diff in the message.
void check_architecture(const ModelConfig& expected, const ModelConfig& loaded);

}  // namespace ust::transporter
