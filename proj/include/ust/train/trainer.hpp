#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "ust/fpm/pipeline.hpp"
#include "ust/train/pairs.hpp"
#include "ust/transporter/model.hpp"

namespace ust::train {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double lr = 1e-3;
  double lr_decay = 0.95;
  int lr_decay_every = 10;
  int pairs_train = 1024;
  int pairs_val = 512;
  int frame_gap_min = 1;
  int frame_gap_max = 10;
  uint64_t seed = 0;
  transporter::ModelConfig model;
  fpm::FpmConfig rtfpm;

  json to_json() const;
  static TrainConfig from_json(const json& j);
  void validate() const;
};

// lr(e) = lr * decay^floor(e / every)
double lr_at_epoch(const TrainConfig& cfg, int epoch);

// On-disk feature-map cache keyed by the rtfpm config hash:
//   <root>/<hash>/<video_id>/frame_NNNNNN.t32  + manifest.json
// A config change lands in a different directory, so stale maps can never be
// reused silently.
class FpmCache {
 public:
  FpmCache(std::filesystem::path root, fpm::FpmConfig config);

  const std::filesystem::path& dir() const { return dir_; }
  const fpm::FpmConfig& config() const { return config_; }

  // builds any missing per-frame maps; returns the number computed
  int ensure(const DatasetManifest& manifest, int workers = 1) const;

  std::vector<float> load(const VideoInfo& video, int frame) const;
  std::filesystem::path frame_path(const std::string& video_id, int frame) const;

 private:
  std::filesystem::path root_, dir_;
  fpm::FpmConfig config_;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  std::vector<EpochStats> history;
};

// Runs the optimization loop, logging one JSON line per epoch and split to
// `log` when given. `resume_from` restarts bit-exactly from a checkpoint
// written by a previous run with the same config.
TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest,
                  const std::filesystem::path& out_dir, const FpmCache& cache,
                  std::ostream* log = nullptr,
                  const std::optional<std::filesystem::path>& resume_from = std::nullopt);

}  // namespace ust::train
