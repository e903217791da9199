#include "ust/fpm/radon.hpp"

#include <cmath>
#include <iostream>

#include "ust/fpm/fft.hpp"

namespace ust::fpm {

void AngleBand::validate() const {
  for (const auto& [lo, hi] : intervals) {
    if (lo < 0.0 || hi > 180.0 || lo > hi)
      throw data_error("angle band: interval out of range [0,180]");
  }
  for (size_t i = 0; i < intervals.size(); ++i)
    for (size_t j = i + 1; j < intervals.size(); ++j) {
      const auto& a = intervals[i];
      const auto& b = intervals[j];
      if (a.first < b.second && b.first < a.second)
        throw data_error("angle band: overlapping intervals");
    }
}

bool AngleBand::contains(double deg) const {
  for (const auto& [lo, hi] : intervals)
    if (deg >= lo && deg <= hi) return true;
  return false;
}

double AngleBand::measure() const {
  double m = 0;
  for (const auto& [lo, hi] : intervals) m += hi - lo;
  return m;
}

std::vector<double> default_angles(double step_deg) {
  if (step_deg <= 0) throw data_error("radon: angle step must be positive");
  std::vector<double> angles;
  for (double a = 0.0; a < 180.0 - 1e-9; a += step_deg) angles.push_back(a);
  return angles;
}

Sinogram radon(const Image& img, const std::vector<double>& angles_deg) {
  if (img.h != img.w) throw data_error("radon: image must be square");
  if (angles_deg.empty()) throw data_error("radon: empty angle list");
  for (double a : angles_deg)
    if (a < 0.0 || a >= 180.0) throw data_error("radon: angles must lie in [0,180)");

  const int H = img.h, W = img.w;
  const int cx = W / 2, cy = H / 2;
  int n_rho = int(std::ceil(std::hypot(double(H), double(W))));
  n_rho |= 1;  // odd, so a rho=0 bin exists
  const int half = n_rho / 2;

  Sinogram sino;
  sino.n_rho = n_rho;
  sino.angles_deg = angles_deg;
  sino.data.assign(angles_deg.size() * size_t(n_rho), 0.0f);

  for (size_t ai = 0; ai < angles_deg.size(); ++ai) {
    const double th = angles_deg[ai] * M_PI / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    float* row = sino.data.data() + ai * size_t(n_rho);
    for (int y = 0; y < H; ++y) {
      const double ys = (y - cy) * s;
      for (int x = 0; x < W; ++x) {
        const float v = img.at(y, x);
        if (v == 0.0f) continue;
        const double rho = (x - cx) * c + ys;
        const double t = rho + half;
        const int b0 = int(t);  // t >= 0 by construction of n_rho
        const double w1 = t - b0;
        row[b0] += float(v * (1.0 - w1));
        row[b0 + 1] += float(v * w1);
      }
    }
  }
  return sino;
}

namespace {

// |f| filtering of one projection, applied in the frequency domain.
void ramp_filter_profile(std::vector<float>& profile) {
  const size_t n = profile.size();
  size_t m = 1;
  while (m < 2 * n) m <<= 1;
  std::vector<cplx> buf(m, cplx(0, 0));
  for (size_t i = 0; i < n; ++i) buf[i] = cplx(double(profile[i]), 0.0);
  fft_1d(buf, false);
  for (size_t k = 0; k < m; ++k) buf[k] *= std::abs(dft_freq(int(k), int(m)));
  fft_1d(buf, true);
  for (size_t i = 0; i < n; ++i) profile[i] = float(buf[i].real());
}

}  // namespace

Image controlled_iradon(const Sinogram& sino, const AngleBand& band, int h, int w,
                        bool ramp_filter) {
  band.validate();
  Image out(h, w, 0.0f);
  if (band.empty()) {
    std::cerr << "warning: controlled_iradon called with an empty angle band; "
                 "returning a zero image\n";
    return out;
  }

  std::vector<size_t> selected;
  for (size_t ai = 0; ai < sino.angles_deg.size(); ++ai)
    if (band.contains(sino.angles_deg[ai])) selected.push_back(ai);
  if (selected.empty())
    throw data_error("controlled_iradon: no sinogram angles fall inside the band");

  const int cx = w / 2, cy = h / 2;
  const int half = sino.n_rho / 2;

  std::vector<float> profile(size_t(sino.n_rho));
  std::vector<double> acc(size_t(h) * w, 0.0);
  for (size_t ai : selected) {
    const float* src = sino.data.data() + ai * size_t(sino.n_rho);
    std::copy(src, src + sino.n_rho, profile.begin());
    if (ramp_filter) ramp_filter_profile(profile);
    const double th = sino.angles_deg[ai] * M_PI / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    for (int y = 0; y < h; ++y) {
      const double ys = (y - cy) * s;
      for (int x = 0; x < w; ++x) {
        const double t = (x - cx) * c + ys + half;
        const int b0 = int(t);
        if (b0 < 0 || b0 + 1 >= sino.n_rho) continue;
        const double w1 = t - b0;
        acc[size_t(y) * w + x] += (1.0 - w1) * profile[size_t(b0)] + w1 * profile[size_t(b0) + 1];
      }
    }
  }

  for (size_t i = 0; i < acc.size(); ++i) out.v[i] = float(acc[i]);
  return normalize01(std::move(out));
}

}  // namespace ust::fpm
