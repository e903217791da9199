#pragma once

#include <string>
#include <vector>

#include "ust/core/image.hpp"
#include "ust/core/json_io.hpp"
#include "ust/fpm/pipeline.hpp"
#include "ust/transporter/model.hpp"

namespace ust::eval {

// Removes stationary structure by subtracting the per-pixel median frame
// (mean behind the flag), clamping back to [0,1]. Inference-time only.
VideoSequence frame_average_correct(const VideoSequence& seq, bool use_mean = false);

struct DetectedKeypoint {
  double x = 0, y = 0;    // normalized [-1,1]
  double px = 0, py = 0;  // pixel coordinates on the model's image grid
  double sigma = 0;
  double weight = 1;
  double confidence = 0;  // spatial-softmax peak mass
};

using FrameKeypoints = std::vector<DetectedKeypoint>;

// Runs the preprocessing pipeline and KeyNet over a sequence in inference
// mode. The correction flag changes only the input frames.
std::vector<FrameKeypoints> detect_keypoints(const VideoSequence& frames,
                                             transporter::TransporterModel<float>& model,
                                             const fpm::FpmConfig& fpm_config, bool correction);

struct EvalReport {
  double sp = 0, sn = 0;               // per-frame averages
  bool sn_defined = false;             // false when no frame has any component
  double sp_pooled = 0, sn_pooled = 0; // pooled counts over all frames
  int radius_px = 8;
  json per_frame;  // array of {frame, sp, sn, keypoints, components}

  json to_json() const;
};

// A keypoint detects a landmark component when any component pixel lies
// within radius_px of it. SP = detecting keypoints / keypoints,
// SN = components detected by at least one keypoint / components.
EvalReport sp_sn(const std::vector<FrameKeypoints>& keypoints, const std::vector<Image>& masks,
                 int radius_px = 8);

// 4-connected components of a binary mask; returns a label image (0 =
// background, 1..n = component index) and the component count.
std::pair<std::vector<int>, int> connected_components(const Image& mask);

struct EmbeddingRecord {
  std::string video_id;
  int frame = 0;
  std::vector<float> vec;  // C_f global-average-pooled FF-CNN features
  std::string label;
};

EmbeddingRecord embed_frame(const Image& frame, transporter::TransporterModel<float>& model,
                            const fpm::FpmConfig& fpm_config);

}  // namespace ust::eval
