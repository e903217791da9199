#include "ust/fpm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "ust/fpm/fft.hpp"

namespace ust::fpm {

std::vector<double> default_lambda0() {
  std::vector<double> v(5);
  for (int k = 1; k <= 5; ++k) v[size_t(k - 1)] = 4.2 * M_PI * (3.0 * k) * (k - 1);
  return v;
}

json FpmConfig::to_json() const {
  json bands_h = json::array(), bands_v = json::array();
  for (auto& [lo, hi] : band_horizontal) bands_h.push_back({lo, hi});
  for (auto& [lo, hi] : band_vertical) bands_v.push_back({lo, hi});
  return json{{"image_size", image_size},
              {"input_mode", input_mode},
              {"dga_enabled", dga_enabled},
              {"attenuation_a", attenuation_a},
              {"attenuation_flip", attenuation_flip},
              {"angle_step_deg", angle_step_deg},
              {"band_horizontal", bands_h},
              {"band_vertical", bands_v},
              {"lambda0", lambda0},
              {"sigma0", sigma0},
              {"tau_percentile", tau_percentile},
              {"ramp_filter", ramp_filter}};
}

FpmConfig FpmConfig::from_json(const json& j) {
  reject_unknown_keys(j, {"image_size", "input_mode", "dga_enabled", "attenuation_a",
                          "attenuation_flip", "angle_step_deg", "band_horizontal",
                          "band_vertical", "lambda0", "sigma0", "tau_percentile",
                          "ramp_filter"},
                      "rtfpm config");
  FpmConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.input_mode = j.value("input_mode", c.input_mode);
  c.dga_enabled = j.value("dga_enabled", c.dga_enabled);
  c.attenuation_a = j.value("attenuation_a", c.attenuation_a);
  c.attenuation_flip = j.value("attenuation_flip", c.attenuation_flip);
  c.angle_step_deg = j.value("angle_step_deg", c.angle_step_deg);
  auto read_band = [&](const char* key, std::vector<std::pair<double, double>>& dst) {
    if (!j.contains(key)) return;
    dst.clear();
    for (const auto& iv : j.at(key)) dst.emplace_back(iv.at(0).get<double>(), iv.at(1).get<double>());
  };
  read_band("band_horizontal", c.band_horizontal);
  read_band("band_vertical", c.band_vertical);
  if (j.contains("lambda0")) c.lambda0 = j.at("lambda0").get<std::vector<double>>();
  c.sigma0 = j.value("sigma0", c.sigma0);
  c.tau_percentile = j.value("tau_percentile", c.tau_percentile);
  c.ramp_filter = j.value("ramp_filter", c.ramp_filter);
  c.validate();
  return c;
}

void FpmConfig::validate() const {
  if (image_size < 8) throw data_error("rtfpm config: image_size too small");
  if (input_mode != "rtfpm" && input_mode != "normalization")
    throw data_error("rtfpm config: input_mode must be \"rtfpm\" or \"normalization\"");
  if (attenuation_a < 0) throw data_error("rtfpm config: attenuation_a must be >= 0");
  if (angle_step_deg <= 0) throw data_error("rtfpm config: angle_step_deg must be positive");
  if (lambda0.size() != 5) throw data_error("rtfpm config: lambda0 must list 5 scales");
  if (sigma0 <= 0 || sigma0 >= 1) throw data_error("rtfpm config: sigma0 must lie in (0,1)");
  if (tau_percentile < 0 || tau_percentile > 100)
    throw data_error("rtfpm config: tau_percentile must lie in [0,100]");
  AngleBand(band_horizontal).validate();
  AngleBand(band_vertical).validate();
}

std::vector<float> dga_mask(int height, double a, bool flip) {
  if (height < 2) throw data_error("dga_mask: height must be >= 2");
  if (a < 0) throw data_error("dga_mask: attenuation factor must be >= 0");
  if (a == 0.0)
    std::cerr << "warning: dga_mask with a=0 suppresses the whole image\n";
  // max over d in [0,1] of exp(-a d) is exp(0) = 1 for a >= 0
  std::vector<float> mask(size_t(height), 0.0f);
  for (int r = 0; r < height; ++r) {
    const double d = double(r) / double(height - 1);
    mask[size_t(r)] = float(1.0 - std::exp(-a * d));
  }
  if (flip) std::reverse(mask.begin(), mask.end());
  return mask;
}

Image apply_dga(const Image& frame, const std::vector<float>& mask) {
  if (int(mask.size()) != frame.h)
    throw data_error("apply_dga: mask length " + std::to_string(mask.size()) +
                     " != frame height " + std::to_string(frame.h));
  Image out = frame;
  for (int y = 0; y < out.h; ++y) {
    const float m = mask[size_t(y)];
    float* row = out.v.data() + size_t(y) * out.w;
    for (int x = 0; x < out.w; ++x) row[x] *= m;
  }
  return out;
}

Image enhance_orientation(const Image& frame_dga, const Sinogram& sino, const AngleBand& band,
                          bool ramp_filter) {
  Image back = controlled_iradon(sino, band, frame_dga.h, frame_dga.w, ramp_filter);
  Image out(frame_dga.h, frame_dga.w);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = back.v[i] * frame_dga.v[i];
  return out;
}

double log_gabor_gain(double omega, double omega0, double sigma0) {
  if (omega <= 0.0) return 0.0;
  const double num = std::log(omega / omega0);
  const double den = std::log(sigma0);
  return std::exp(-(num * num) / (2.0 * den * den));
}

Image log_gabor_response(const Image& img, double lambda0, double sigma0) {
  if (lambda0 < 0) throw data_error("log_gabor_response: lambda0 must be >= 0");
  if (lambda0 == 0.0) return img;  // declared pass-through channel
  const int H = img.h, W = img.w;
  const double omega0 = 2.0 * M_PI / lambda0;
  std::vector<cplx> freq(size_t(H) * W);
  for (size_t i = 0; i < freq.size(); ++i) freq[i] = cplx(double(img.v[i]), 0.0);
  fft_2d(freq, H, W, false);
  for (int ky = 0; ky < H; ++ky) {
    const double fy = dft_freq(ky, H);
    for (int kx = 0; kx < W; ++kx) {
      const double fx = dft_freq(kx, W);
      const double omega = 2.0 * M_PI * std::hypot(fx, fy);
      freq[size_t(ky) * W + kx] *= log_gabor_gain(omega, omega0, sigma0);
    }
  }
  fft_2d(freq, H, W, true);
  Image out(H, W);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = float(freq[i].real());
  return out;
}

namespace {

inline int clamp_idx(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

}  // namespace

LptResult local_phase_tensor(const Image& I) {
  const int H = I.h, W = I.w;
  LptResult r{Image(H, W), Image(H, W), Image(H, W)};

  // precompute Laplacian for the odd tensor's gradient-of-Laplacian term
  Image lap(H, W);
  auto px = [&](int y, int x) { return I.at(clamp_idx(y, H), clamp_idx(x, W)); };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const float ixx = px(y, x + 1) - 2 * px(y, x) + px(y, x - 1);
      const float iyy = px(y + 1, x) - 2 * px(y, x) + px(y - 1, x);
      lap.at(y, x) = ixx + iyy;
    }
  auto lp = [&](int y, int x) { return lap.at(clamp_idx(y, H), clamp_idx(x, W)); };

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double ixx = px(y, x + 1) - 2 * px(y, x) + px(y, x - 1);
      const double iyy = px(y + 1, x) - 2 * px(y, x) + px(y - 1, x);
      const double ixy = (px(y + 1, x + 1) - px(y + 1, x - 1) - px(y - 1, x + 1) +
                          px(y - 1, x - 1)) / 4.0;
      // even tensor: H H^T with symmetric H
      const double e11 = ixx * ixx + ixy * ixy;
      const double e12 = ixy * (ixx + iyy);
      const double e22 = ixy * ixy + iyy * iyy;
      const double te = std::sqrt(e11 * e11 + 2.0 * e12 * e12 + e22 * e22);

      const double gx = (px(y, x + 1) - px(y, x - 1)) / 2.0;
      const double gy = (px(y + 1, x) - px(y - 1, x)) / 2.0;
      const double hx = (lp(y, x + 1) - lp(y, x - 1)) / 2.0;
      const double hy = (lp(y + 1, x) - lp(y - 1, x)) / 2.0;
      // odd tensor: -0.5 (g h^T + h g^T)
      const double o11 = -gx * hx;
      const double o12 = -0.5 * (gx * hy + gy * hx);
      const double o22 = -gy * hy;
      const double to = std::sqrt(o11 * o11 + 2.0 * o12 * o12 + o22 * o22);

      const double phi = std::atan2(to, te);
      r.t_even.at(y, x) = float(te);
      r.t_odd.at(y, x) = float(to);
      r.lpt.at(y, x) = float(std::sqrt(te * te + to * to) * std::cos(phi));
    }
  return r;
}

MonogenicSignal monogenic(const Image& lpt) {
  const int H = lpt.h, W = lpt.w;
  MonogenicSignal m{lpt, Image(H, W), Image(H, W)};
  std::vector<cplx> freq(size_t(H) * W);
  for (size_t i = 0; i < freq.size(); ++i) freq[i] = cplx(double(lpt.v[i]), 0.0);
  fft_2d(freq, H, W, false);
  std::vector<cplx> r2(freq.size()), r3(freq.size());
  for (int ky = 0; ky < H; ++ky) {
    const double fy = dft_freq(ky, H);
    for (int kx = 0; kx < W; ++kx) {
      const double fx = dft_freq(kx, W);
      const double norm = std::hypot(fx, fy);
      const size_t idx = size_t(ky) * W + kx;
      if (norm == 0.0) {
        r2[idx] = r3[idx] = cplx(0, 0);
        continue;
      }
      // Riesz kernels (-i u / |w|, -i v / |w|)
      const cplx k2(0.0, -fx / norm);
      const cplx k3(0.0, -fy / norm);
      r2[idx] = freq[idx] * k2;
      r3[idx] = freq[idx] * k3;
    }
  }
  fft_2d(r2, H, W, true);
  fft_2d(r3, H, W, true);
  for (size_t i = 0; i < r2.size(); ++i) {
    m.m2.v[i] = float(r2[i].real());
    m.m3.v[i] = float(r3[i].real());
  }
  return m;
}

double tau_from_percentile(const Image& t_even, const Image& t_odd, double percentile) {
  std::vector<float> diff(t_even.v.size());
  for (size_t i = 0; i < diff.size(); ++i) diff[i] = t_even.v[i] - t_odd.v[i];
  const size_t rank = size_t(std::min(
      double(diff.size() - 1), std::max(0.0, percentile / 100.0 * double(diff.size() - 1))));
  std::nth_element(diff.begin(), diff.begin() + long(rank), diff.end());
  return double(diff[rank]);
}

LpFsIbs lp_fs_ibs(const MonogenicSignal& mono, const Image& t_even, const Image& t_odd,
                  const Image& intensity, double tau) {
  if (tau < 0) tau = 0;
  const int H = mono.m1.h, W = mono.m1.w;
  LpFsIbs r{Image(H, W), Image(H, W), Image(H, W)};
  constexpr double kEps = 1e-8;

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double m1 = mono.m1.at(y, x);
      const double m2 = mono.m2.at(y, x);
      const double m3 = mono.m3.at(y, x);
      const double odd_mag = std::sqrt(m2 * m2 + m3 * m3);
      // raw local phase lies in (1 - pi/2, 1 + pi/2); rescale to [0,1]
      const double denom = m1 >= 0 ? std::max(m1, kEps) : std::min(m1, -kEps);
      const double lp_raw = 1.0 - std::atan(odd_mag / denom);
      r.lp.at(y, x) = float(std::clamp((lp_raw - (1.0 - M_PI / 2.0)) / M_PI, 0.0, 1.0));

      const double fs_num = std::max(double(t_even.at(y, x)) - double(t_odd.at(y, x)) - tau, 0.0);
      const double fs = fs_num / (m1 * m1 + m2 * m2 + m3 * m3 + kEps);
      r.fs.at(y, x) = float(std::clamp(fs, 0.0, 1.0));
    }

  // depth-cumulative squared intensity, normalized per column
  for (int x = 0; x < W; ++x) {
    double total = 0;
    for (int y = 0; y < H; ++y) {
      const double v = intensity.at(y, x);
      total += v * v;
    }
    if (total < kEps) {
      for (int y = 0; y < H; ++y) r.ibs.at(y, x) = 0.0f;
      continue;
    }
    double run = 0;
    for (int y = 0; y < H; ++y) {
      const double v = intensity.at(y, x);
      run += v * v;
      r.ibs.at(y, x) = float(run / total);
    }
  }
  return r;
}

FeatureProbabilityMap compute(const Image& frame, const FpmConfig& config) {
  config.validate();
  Image resized = clamp01(resize_bilinear(frame, config.image_size, config.image_size));

  if (config.input_mode == "normalization") return normalization_channels(resized);

  const int S = config.image_size;
  FeatureProbabilityMap out;
  out.h = S;
  out.w = S;
  out.channels.assign(size_t(FeatureProbabilityMap::kChannels) * S * S, 0.0f);

  Image compensated = config.dga_enabled
                          ? apply_dga(resized, dga_mask(S, config.attenuation_a,
                                                        config.attenuation_flip))
                          : resized;

  const Sinogram sino = radon(compensated, default_angles(config.angle_step_deg));
  const AngleBand bands[2] = {AngleBand(config.band_horizontal),
                              AngleBand(config.band_vertical)};

  int channel = 0;
  for (const AngleBand& band : bands) {
    const Image enhanced = enhance_orientation(compensated, sino, band, config.ramp_filter);
    for (double lambda0 : config.lambda0) {
      const Image bandpassed = log_gabor_response(enhanced, lambda0, config.sigma0);
      const LptResult lpt = local_phase_tensor(bandpassed);
      const MonogenicSignal mono = monogenic(lpt.lpt);
      const double tau = tau_from_percentile(lpt.t_even, lpt.t_odd, config.tau_percentile);
      const LpFsIbs maps = lp_fs_ibs(mono, lpt.t_even, lpt.t_odd, enhanced, tau);
      float* dst = out.channels.data() + size_t(channel) * S * S;
      for (size_t i = 0; i < size_t(S) * S; ++i) {
        const float v = maps.lp.v[i] * maps.fs.v[i] * (1.0f - maps.ibs.v[i]);
        if (!std::isfinite(v)) throw numeric_error("fpm: non-finite channel value");
        dst[i] = std::clamp(v, 0.0f, 1.0f);
      }
      out.lambda0_per_channel.push_back(lambda0);
      ++channel;
    }
  }
  return out;
}

FeatureProbabilityMap normalization_channels(const Image& frame) {
  FeatureProbabilityMap out;
  out.h = frame.h;
  out.w = frame.w;
  const size_t plane = frame.v.size();
  out.channels.assign(size_t(FeatureProbabilityMap::kChannels) * plane, 0.0f);
  constexpr double kSigma = 0.5;
  for (int c = 0; c < FeatureProbabilityMap::kChannels; ++c) {
    const double mu = 0.3 + 0.4 * double(c) / 9.0;
    float* dst = out.channels.data() + size_t(c) * plane;
    for (size_t i = 0; i < plane; ++i)
      dst[i] = float(std::clamp((double(frame.v[i]) - mu) / kSigma, 0.0, 1.0));
    out.lambda0_per_channel.push_back(mu);  // records the mean used per channel
  }
  return out;
}

}  // namespace ust::fpm
