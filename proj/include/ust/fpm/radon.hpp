#pragma once

#include <utility>
#include <vector>

#include "ust/core/image.hpp"

namespace ust::fpm {

// Angular selection for controlled backprojection: a union of up to two
// closed intervals in degrees within [0, 180].
struct AngleBand {
  std::vector<std::pair<double, double>> intervals;

  AngleBand() = default;
  AngleBand(std::initializer_list<std::pair<double, double>> iv) : intervals(iv) { validate(); }
  explicit AngleBand(std::vector<std::pair<double, double>> iv) : intervals(std::move(iv)) {
    validate();
  }

  void validate() const;
  bool contains(double deg) const;
  double measure() const;
  bool empty() const { return measure() <= 0.0; }

  // the band choices used for the two enhanced orientations
  static AngleBand vertical_edges() { return AngleBand{{0.0, 30.0}, {150.0, 180.0}}; }
  static AngleBand horizontal_edges() { return AngleBand{{65.0, 115.0}}; }
};

// Line-integral array R(rho, theta). rho is sampled at unit spacing over the
// image diagonal with the rotation center at pixel (h/2, w/2); at theta=0 the
// bins line up exactly with pixel columns.
struct Sinogram {
  int n_rho = 0;
  std::vector<double> angles_deg;
  std::vector<float> data;  // [angle][rho]

  float at(int angle_idx, int rho_idx) const {
    return data[size_t(angle_idx) * n_rho + rho_idx];
  }
};

std::vector<double> default_angles(double step_deg = 1.0);

// Pixel-driven Radon transform: every pixel's mass is split linearly between
// the two nearest rho bins, so per-angle mass is conserved exactly.
Sinogram radon(const Image& img, const std::vector<double>& angles_deg);

// Unfiltered backprojection restricted to the band, min-max normalized to
// [0,1]. An empty band yields a zero image (with a warning). The optional
// ramp filter is off by default.
Image controlled_iradon(const Sinogram& sino, const AngleBand& band, int h, int w,
                        bool ramp_filter = false);

}  // namespace ust::fpm
