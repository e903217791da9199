#include <doctest.h>

#include <cmath>
#include <complex>

#include "ust/core/rng.hpp"
#include "ust/fpm/fft.hpp"
#include "ust/fpm/radon.hpp"

using ust::Image;
using ust::Rng;
using ust::fpm::AngleBand;
using ust::fpm::cplx;

namespace {

// Quadratic-time DFT used as the FFT oracle.
std::vector<cplx> naive_dft(const std::vector<cplx>& x, bool inverse) {
  const size_t n = x.size();
  std::vector<cplx> out(n, cplx(0, 0));
  const double sign = inverse ? 1.0 : -1.0;
  for (size_t k = 0; k < n; ++k) {
    for (size_t j = 0; j < n; ++j) {
      const double ang = sign * 2.0 * M_PI * double(j * k % n) / double(n);
      out[k] += x[j] * cplx(std::cos(ang), std::sin(ang));
    }
    if (inverse) out[k] /= double(n);
  }
  return out;
}

Image random_image(int h, int w, Rng& rng) {
  Image img(h, w);
  for (float& v : img.v) v = float(rng.uniform());
  return img;
}

double image_mass(const Image& img) {
  double m = 0;
  for (float v : img.v) m += v;
  return m;
}

}  // namespace

TEST_CASE("fft matches the naive DFT for pow2 and non-pow2 lengths") {
  Rng rng(20);
  for (int n : {2, 8, 16, 12, 27, 100}) {
    CAPTURE(n);
    std::vector<cplx> x(size_t(n), cplx(0, 0));
    for (auto& v : x) v = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));
    for (bool inverse : {false, true}) {
      auto want = naive_dft(x, inverse);
      auto got = x;
      ust::fpm::fft_1d(got, inverse);
      for (int i = 0; i < n; ++i) {
        CHECK(std::abs(got[size_t(i)] - want[size_t(i)]) < 1e-9);
      }
    }
  }
}

TEST_CASE("fft round trip restores the signal") {
  Rng rng(21);
  std::vector<cplx> x(48);
  for (auto& v : x) v = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));
  auto y = x;
  ust::fpm::fft_1d(y, false);
  ust::fpm::fft_1d(y, true);
  for (size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-10);
}

TEST_CASE("fft_2d round trip") {
  Rng rng(22);
  std::vector<cplx> x(size_t(6) * 10);
  for (auto& v : x) v = cplx(rng.uniform(-1, 1), 0.0);
  auto y = x;
  ust::fpm::fft_2d(y, 6, 10, false);
  ust::fpm::fft_2d(y, 6, 10, true);
  for (size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-10);
}

TEST_CASE("radon: zero image gives a zero sinogram") {
  Image img(16, 16, 0.0f);
  auto sino = ust::fpm::radon(img, ust::fpm::default_angles(5.0));
  for (float v : sino.data) CHECK(v == 0.0f);
}

TEST_CASE("radon: mass is conserved per angle") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Image img = random_image(24, 24, rng);
    const double mass = image_mass(img);
    auto sino = ust::fpm::radon(img, ust::fpm::default_angles(7.5));
    for (size_t ai = 0; ai < sino.angles_deg.size(); ++ai) {
      double s = 0;
      for (int r = 0; r < sino.n_rho; ++r) s += sino.at(int(ai), r);
      CHECK(std::abs(s - mass) / mass < 1e-3);
    }
  }
}

TEST_CASE("radon: theta=0 projection equals the column sums exactly") {
  Rng rng(24);
  Image img = random_image(32, 32, rng);
  auto sino = ust::fpm::radon(img, {0.0});
  const int half = sino.n_rho / 2;
  std::vector<double> colsum(32, 0.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) colsum[size_t(x)] += img.at(y, x);
  for (int x = 0; x < 32; ++x) {
    const int bin = (x - 16) + half;
    CHECK(sino.at(0, bin) == doctest::Approx(colsum[size_t(x)]).epsilon(1e-5));
  }
}

TEST_CASE("radon: a centered unit pixel concentrates at rho=0 for every angle") {
  Image img(33, 33, 0.0f);
  img.at(16, 16) = 1.0f;  // the rotation center at (h/2, w/2)
  auto sino = ust::fpm::radon(img, ust::fpm::default_angles(1.0));
  const int half = sino.n_rho / 2;
  for (size_t ai = 0; ai < sino.angles_deg.size(); ++ai) {
    int best = 0;
    for (int r = 1; r < sino.n_rho; ++r)
      if (sino.at(int(ai), r) > sino.at(int(ai), best)) best = r;
    CHECK(std::abs(best - half) <= 1);
  }
}

TEST_CASE("radon input validation") {
  Image rect(8, 9, 0.0f);
  CHECK_THROWS_AS(ust::fpm::radon(rect, {0.0}), ust::Error);
  Image sq(8, 8, 0.0f);
  CHECK_THROWS_AS(ust::fpm::radon(sq, {}), ust::Error);
  CHECK_THROWS_AS(ust::fpm::radon(sq, {180.0}), ust::Error);
}

TEST_CASE("controlled_iradon: empty band returns a zero image") {
  Image img(16, 16, 0.5f);
  auto sino = ust::fpm::radon(img, ust::fpm::default_angles(5.0));
  AngleBand empty_band;
  Image out = ust::fpm::controlled_iradon(sino, empty_band, 16, 16);
  for (float v : out.v) CHECK(v == 0.0f);
}

TEST_CASE("controlled_iradon: full band reconstructs a centered delta peak") {
  Image img(33, 33, 0.0f);
  img.at(16, 16) = 1.0f;
  auto sino = ust::fpm::radon(img, ust::fpm::default_angles(1.0));
  AngleBand full{{0.0, 180.0}};
  Image out = ust::fpm::controlled_iradon(sino, full, 33, 33);
  int by = 0, bx = 0;
  for (int y = 0; y < 33; ++y)
    for (int x = 0; x < 33; ++x)
      if (out.at(y, x) > out.at(by, bx)) {
        by = y;
        bx = x;
      }
  CHECK(by == 16);
  CHECK(bx == 16);
}

TEST_CASE("controlled_iradon: horizontal band favors the horizontal line") {
  // one horizontal line and one vertical line; the [65,115] band must put
  // at least twice the energy on the horizontal support
  const int S = 32;
  Image img(S, S, 0.0f);
  for (int x = 0; x < S; ++x) img.at(10, x) = 1.0f;
  for (int y = 0; y < S; ++y) img.at(y, 22) = 1.0f;
  auto sino = ust::fpm::radon(img, ust::fpm::default_angles(1.0));
  Image out = ust::fpm::controlled_iradon(sino, AngleBand::horizontal_edges(), S, S);

  double on_h = 0, on_v = 0;
  int nh = 0, nv = 0;
  for (int x = 0; x < S; ++x)
    if (x != 22) {
      on_h += out.at(10, x);
      ++nh;
    }
  for (int y = 0; y < S; ++y)
    if (y != 10) {
      on_v += out.at(y, 22);
      ++nv;
    }
  const double ratio = (on_h / nh) / (on_v / nv + 1e-12);
  CHECK(ratio > 2.0);
}

TEST_CASE("controlled_iradon: vertical band favors the vertical line") {
  const int S = 32;
  Image img(S, S, 0.0f);
  for (int x = 0; x < S; ++x) img.at(10, x) = 1.0f;
  for (int y = 0; y < S; ++y) img.at(y, 22) = 1.0f;
  auto sino = ust::fpm::radon(img, ust::fpm::default_angles(1.0));
  Image out = ust::fpm::controlled_iradon(sino, AngleBand::vertical_edges(), S, S);

  double on_h = 0, on_v = 0;
  int nh = 0, nv = 0;
  for (int x = 0; x < S; ++x)
    if (x != 22) {
      on_h += out.at(10, x);
      ++nh;
    }
  for (int y = 0; y < S; ++y)
    if (y != 10) {
      on_v += out.at(y, 22);
      ++nv;
    }
  const double ratio = (on_v / nv) / (on_h / nh + 1e-12);
  CHECK(ratio > 2.0);
}

TEST_CASE("angle band validation") {
  CHECK_THROWS_AS(AngleBand({{-5.0, 20.0}}).validate(), ust::Error);
  CHECK_THROWS_AS(AngleBand({{0.0, 190.0}}).validate(), ust::Error);
  CHECK_THROWS_AS(AngleBand({{30.0, 10.0}}).validate(), ust::Error);
  CHECK_THROWS_AS(AngleBand({{0.0, 50.0}, {40.0, 90.0}}).validate(), ust::Error);
  CHECK_NOTHROW(AngleBand::vertical_edges().validate());
}
