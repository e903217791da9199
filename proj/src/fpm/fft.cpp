#include "ust/fpm/fft.hpp"

#include <cmath>

#include "ust/core/error.hpp"

namespace ust::fpm {

namespace {

bool is_pow2(size_t n) { return n && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, decimation in time.
void fft_pow2(std::vector<cplx>& a, bool inverse) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * M_PI / double(len) * (inverse ? 1.0 : -1.0);
    const cplx wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        cplx u = a[i + k];
        cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Bluestein chirp-z for arbitrary length, via a power-of-two convolution.
void fft_bluestein(std::vector<cplx>& a, bool inverse) {
  const size_t n = a.size();
  size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;

  std::vector<cplx> chirp(n);
  for (size_t k = 0; k < n; ++k) {
    // angle uses k^2 mod 2n to avoid precision loss for large k;
    // forward chirp is e^{-i pi k^2 / n}, inverse conjugates it
    const double ang = M_PI * double((k * k) % (2 * n)) / double(n) * (inverse ? -1.0 : 1.0);
    chirp[k] = cplx(std::cos(ang), -std::sin(ang));
  }

  std::vector<cplx> x(m, cplx(0, 0)), y(m, cplx(0, 0));
  for (size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
  y[0] = std::conj(chirp[0]);
  for (size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);

  fft_pow2(x, false);
  fft_pow2(y, false);
  for (size_t i = 0; i < m; ++i) x[i] *= y[i];
  fft_pow2(x, true);
  const double inv_m = 1.0 / double(m);
  for (size_t k = 0; k < n; ++k) a[k] = x[k] * inv_m * chirp[k];
}

}  // namespace

void fft_1d(std::vector<cplx>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0) throw data_error("fft: empty input");
  if (n == 1) return;
  if (is_pow2(n)) {
    fft_pow2(a, inverse);
  } else {
    fft_bluestein(a, inverse);
  }
  if (inverse) {
    const double inv = 1.0 / double(n);
    for (cplx& v : a) v *= inv;
  }
}

void fft_2d(std::vector<cplx>& a, int h, int w, bool inverse) {
  if (a.size() != size_t(h) * w) throw data_error("fft_2d: buffer size mismatch");
  std::vector<cplx> line;
  line.resize(size_t(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) line[size_t(x)] = a[size_t(y) * w + x];
    fft_1d(line, inverse);
    for (int x = 0; x < w; ++x) a[size_t(y) * w + x] = line[size_t(x)];
  }
  line.resize(size_t(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) line[size_t(y)] = a[size_t(y) * w + x];
    fft_1d(line, inverse);
    for (int y = 0; y < h; ++y) a[size_t(y) * w + x] = line[size_t(y)];
  }
}

}  // namespace ust::fpm
