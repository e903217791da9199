#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ust/core/json_io.hpp"

namespace ust::train {

struct VideoInfo {
  std::string id;
  std::filesystem::path dir;
  int n_frames = 0;
  std::string class_label;
};

struct DatasetManifest {
  std::vector<VideoInfo> videos;

  // A dataset root is either a single video directory (contains
  // frame_NNNNNN.pgm) or a directory of such directories.
  static DatasetManifest scan(const std::filesystem::path& root);

  int video_index(const std::string& id) const;
};

struct PairIndex {
  int video = 0;
  int t = 0;
  int t_plus_i = 0;
};

struct PairSampling {
  std::vector<PairIndex> train_pairs, val_pairs;
};

// Source frames at stride 10 within each split's frame range, target offset
// uniform in [gap_min, gap_max] (clipped to the range end). Splits are
// disjoint by video when the dataset has more than one, otherwise by frame
// range. Deterministic under the seed; oversampling falls back to
// replacement with a warning.
PairSampling sample_pairs(const DatasetManifest& manifest, int n_train, int n_val,
                          uint64_t seed, int gap_min = 1, int gap_max = 10);

}  // namespace ust::train
