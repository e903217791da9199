#pragma once

#include <string>
#include <vector>

#include "ust/core/image.hpp"
#include "ust/core/json_io.hpp"
#include "ust/fpm/radon.hpp"

namespace ust::fpm {

// Wavelength schedule for the five per-orientation scales. Index 1 is the
// declared pass-through channel (no filtering); the rest follow
// lambda0(k) = 4.2*pi*3k*(k-1).
std::vector<double> default_lambda0();

struct FpmConfig {
  int image_size = 256;
  std::string input_mode = "rtfpm";  // "rtfpm" | "normalization"
  bool dga_enabled = true;
  double attenuation_a = 2.0;
  bool attenuation_flip = false;
  double angle_step_deg = 1.0;
  std::vector<std::pair<double, double>> band_horizontal = {{65.0, 115.0}};
  std::vector<std::pair<double, double>> band_vertical = {{0.0, 30.0}, {150.0, 180.0}};
  std::vector<double> lambda0 = default_lambda0();
  double sigma0 = 0.55;
  double tau_percentile = 10.0;
  bool ramp_filter = false;

  json to_json() const;
  static FpmConfig from_json(const json& j);
  std::string hash() const { return json_hash(to_json()); }
  void validate() const;
};

// Depth-gain attenuation mask over normalized depth d in [0,1]:
// chi(d) = 1 - exp(-a d) / max(exp(-a d)). flip reverses the row order so the
// deep section is attenuated instead of the shallow one.
std::vector<float> dga_mask(int height, double a, bool flip);

Image apply_dga(const Image& frame, const std::vector<float>& mask);

// normalize(backproject(sino | band)) masked onto the compensated frame
Image enhance_orientation(const Image& frame_dga, const Sinogram& sino, const AngleBand& band,
                          bool ramp_filter = false);

// Log-Gabor radial gain at angular frequency omega (rad/pixel).
double log_gabor_gain(double omega, double omega0, double sigma0);

// Frequency-domain bandpass; lambda0 == 0 is the identity pass-through.
Image log_gabor_response(const Image& img, double lambda0, double sigma0);

struct LptResult {
  Image lpt;     // sqrt(Te^2 + To^2) cos(phi)
  Image t_even;  // Frobenius norm of the Hessian outer product
  Image t_odd;   // Frobenius norm of the gradient/Laplacian cross tensor
};

LptResult local_phase_tensor(const Image& bandpassed);

struct MonogenicSignal {
  Image m1, m2, m3;  // m1 = input, (m2,m3) = Riesz pair
};

MonogenicSignal monogenic(const Image& lpt);

struct LpFsIbs {
  Image lp, fs, ibs;
};

// tau below is the feature-symmetry threshold; the pipeline derives it from a
// per-image percentile of (t_even - t_odd).
LpFsIbs lp_fs_ibs(const MonogenicSignal& mono, const Image& t_even, const Image& t_odd,
                  const Image& intensity, double tau);

double tau_from_percentile(const Image& t_even, const Image& t_odd, double percentile);

struct FeatureProbabilityMap {
  int h = 0, w = 0;
  std::vector<float> channels;  // [10][h][w], orientation-major, scale-minor
  std::vector<double> lambda0_per_channel;

  static constexpr int kChannels = 10;
  const float* channel(int c) const { return channels.data() + size_t(c) * h * w; }
};

// Full per-frame pipeline: resize -> DGA -> {horizontal, vertical}
// enhancement -> per-scale log-Gabor -> local phase tensor -> monogenic ->
// LP x FS x (1 - IBS). Channels 0-4 are horizontal-enhanced, 5-9 vertical.
FeatureProbabilityMap compute(const Image& frame, const FpmConfig& config);

// Ablation baseline: ten clipped normalizations of the raw frame with mean
// varying linearly over [0.3, 0.7] and sigma fixed at 0.5.
FeatureProbabilityMap normalization_channels(const Image& frame);

}  // namespace ust::fpm
