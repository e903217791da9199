#pragma once

#include <complex>
#include <vector>

namespace ust::fpm {

using cplx = std::complex<double>;

// In-place 1-D FFT for arbitrary length (radix-2 for powers of two,
// Bluestein otherwise). inverse=true applies the 1/N scaling.
void fft_1d(std::vector<cplx>& a, bool inverse);

// Row-major 2-D FFT.
void fft_2d(std::vector<cplx>& a, int h, int w, bool inverse);

// Signed digital frequency (cycles/sample) of DFT bin k out of n, in [-0.5, 0.5).
inline double dft_freq(int k, int n) {
  return (k <= (n - 1) / 2) ? double(k) / n : double(k - n) / n;
}

}  // namespace ust::fpm
