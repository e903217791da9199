#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ust/core/error.hpp"

namespace ust {

// Dense single-channel float image, row-major, values nominally in [0,1].
struct Image {
  int h = 0;
  int w = 0;
  std::vector<float> v;

  Image() = default;
  Image(int height, int width, float fill = 0.0f)
      : h(height), w(width), v(size_t(height) * width, fill) {}

  float& at(int y, int x) { return v[size_t(y) * w + x]; }
  float at(int y, int x) const { return v[size_t(y) * w + x]; }
  size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
};

// One frame of a video plus its provenance.
struct Frame {
  Image pixels;
  std::string source_id;
  int index = 0;
};

using VideoSequence = std::vector<Image>;

inline Image clamp01(Image img) {
  for (float& x : img.v) x = std::clamp(x, 0.0f, 1.0f);
  return img;
}

// Bilinear resize, align-corners convention (corner pixels map exactly).
inline Image resize_bilinear(const Image& src, int oh, int ow) {
  if (src.h < 1 || src.w < 1) throw data_error("resize_bilinear: empty image");
  if (src.h == oh && src.w == ow) return src;
  Image out(oh, ow);
  const double sy = oh > 1 ? double(src.h - 1) / (oh - 1) : 0.0;
  const double sx = ow > 1 ? double(src.w - 1) / (ow - 1) : 0.0;
  for (int y = 0; y < oh; ++y) {
    double fy = y * sy;
    int y0 = int(fy);
    int y1 = std::min(y0 + 1, src.h - 1);
    double wy = fy - y0;
    for (int x = 0; x < ow; ++x) {
      double fx = x * sx;
      int x0 = int(fx);
      int x1 = std::min(x0 + 1, src.w - 1);
      double wx = fx - x0;
      double v = (1 - wy) * ((1 - wx) * src.at(y0, x0) + wx * src.at(y0, x1)) +
                 wy * ((1 - wx) * src.at(y1, x0) + wx * src.at(y1, x1));
      out.at(y, x) = float(v);
    }
  }
  return out;
}

// min-max normalization to [0,1]; constant images map to zero
inline Image normalize01(Image img) {
  if (img.empty()) return img;
  auto [mn, mx] = std::minmax_element(img.v.begin(), img.v.end());
  float lo = *mn, hi = *mx;
  if (hi - lo < 1e-12f) {
    std::fill(img.v.begin(), img.v.end(), 0.0f);
    return img;
  }
  float inv = 1.0f / (hi - lo);
  for (float& x : img.v) x = (x - lo) * inv;
  return img;
}

}  // namespace ust
