#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ust/core/image.hpp"
#include "ust/core/json_io.hpp"

namespace ust::synth {

enum class ElementKind { horizontal_band, vertical_streak, static_overlay, moving_blob };

struct Element {
  ElementKind kind = ElementKind::horizontal_band;
  double center = 0;     // moving axis center (band: y, streak: x)
  double thickness = 8;  // band height / streak width
  double intensity = 0.8;
  double amplitude = 0;  // sinusoidal motion amplitude in px
  double period = 32;    // frames per cycle
  double extent_lo = -1, extent_hi = -1;  // static axis extent; -1 = margin-to-margin
  // static_overlay box
  double x = 0, y = 0, w = 16, h = 16;
  bool checker = false;  // textured overlay
  // moving_blob
  double cx = 0, cy = 0, sigma = 6;
  bool landmark = true;

  json to_json() const;
  static Element from_json(const json& j);
};

struct SceneSpec {
  int n_frames = 32;
  int size = 256;
  double background = 0.05;
  double speckle = 0.0;  // multiplicative noise half-width
  uint64_t seed = 0;
  std::vector<Element> elements;

  json to_json() const;
  static SceneSpec from_json(const json& j);
  void validate() const;
};

struct Generated {
  std::vector<Image> frames;
  std::vector<Image> masks;  // union of landmark element supports
  // per landmark element, per frame: centroid (x, y) in pixels
  std::vector<std::vector<std::pair<double, double>>> tracks;
  std::vector<std::string> track_names;
};

Generated generate(const SceneSpec& scene);

// Dataset layout the ingestion expects: frame_NNNNNN.pgm, masks/mask_NNNNNN.pgm,
// tracks.json, meta.json.
void write_dataset(const Generated& g, const SceneSpec& scene,
                   const std::filesystem::path& dir, const std::string& video_id,
                   const std::string& class_label = "");

// Mean over frames and tracked elements of the distance from the element
// centroid to its nearest keypoint.
double oracle_score(const std::vector<std::vector<std::pair<double, double>>>& tracks,
                    const std::vector<std::vector<std::pair<double, double>>>& keypoints_px);

}  // namespace ust::synth
