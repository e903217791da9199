#include <doctest.h>

#include <cmath>

#include "ust/core/rng.hpp"
#include "ust/fpm/pipeline.hpp"

using ust::Image;
using ust::Rng;
using ust::fpm::FpmConfig;

TEST_CASE("dga_mask: a=1 matches 1 - exp(-d) on a 4-row grid") {
  auto mask = ust::fpm::dga_mask(4, 1.0, false);
  const double expected[4] = {0.0, 0.2835, 0.4866, 0.6321};
  for (int i = 0; i < 4; ++i) CHECK(std::abs(mask[size_t(i)] - expected[i]) < 5e-4);
}

TEST_CASE("dga_mask: large a saturates everything past the first row") {
  auto mask = ust::fpm::dga_mask(4, 1e6, false);
  CHECK(mask[0] == 0.0f);
  for (int i = 1; i < 4; ++i) CHECK(mask[size_t(i)] == doctest::Approx(1.0));
}

TEST_CASE("dga_mask: a=0 suppresses the whole image") {
  auto mask = ust::fpm::dga_mask(4, 0.0, false);
  for (float v : mask) CHECK(v == 0.0f);
}

TEST_CASE("dga_mask: monotone in depth, flip reverses") {
  auto mask = ust::fpm::dga_mask(64, 2.0, false);
  for (size_t i = 1; i < mask.size(); ++i) CHECK(mask[i] > mask[i - 1]);
  auto flipped = ust::fpm::dga_mask(64, 2.0, true);
  for (size_t i = 0; i < mask.size(); ++i) CHECK(flipped[i] == mask[mask.size() - 1 - i]);
  CHECK_THROWS_AS(ust::fpm::dga_mask(1, 2.0, false), ust::Error);
}

TEST_CASE("apply_dga: identity and zero masks") {
  Rng rng(30);
  Image img(8, 8);
  for (float& v : img.v) v = float(rng.uniform());
  auto ones = std::vector<float>(8, 1.0f);
  Image same = ust::fpm::apply_dga(img, ones);
  for (size_t i = 0; i < img.v.size(); ++i) CHECK(same.v[i] == img.v[i]);
  auto zeros = std::vector<float>(8, 0.0f);
  Image dark = ust::fpm::apply_dga(img, zeros);
  for (float v : dark.v) CHECK(v == 0.0f);
  CHECK_THROWS_AS(ust::fpm::apply_dga(img, std::vector<float>(5, 1.0f)), ust::Error);
}

TEST_CASE("apply_dga: constant frame reproduces the mask per column") {
  Image img(16, 4, 1.0f);
  auto mask = ust::fpm::dga_mask(16, 1.0, false);
  Image out = ust::fpm::apply_dga(img, mask);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 4; ++x) CHECK(out.at(y, x) == mask[size_t(y)]);
}

TEST_CASE("log-gabor gain: unity at the peak, 0.511 at the octave") {
  CHECK(ust::fpm::log_gabor_gain(0.3, 0.3, 0.55) == doctest::Approx(1.0));
  const double want = std::exp(-(std::log(2.0) * std::log(2.0)) /
                               (2.0 * std::log(0.55) * std::log(0.55)));
  CHECK(want == doctest::Approx(0.511).epsilon(1e-3));
  CHECK(ust::fpm::log_gabor_gain(0.6, 0.3, 0.55) == doctest::Approx(want));
  CHECK(ust::fpm::log_gabor_gain(0.0, 0.3, 0.55) == 0.0);
}

TEST_CASE("log-gabor: lambda0=0 is the identity") {
  Rng rng(31);
  Image img(16, 16);
  for (float& v : img.v) v = float(rng.uniform());
  Image out = ust::fpm::log_gabor_response(img, 0.0, 0.55);
  for (size_t i = 0; i < img.v.size(); ++i) CHECK(out.v[i] == img.v[i]);
}

TEST_CASE("log-gabor: a matched grating passes, a detuned one is damped") {
  const int S = 64;
  const double cycles = 8.0;  // wavelength 8 px
  Image img(S, S);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) img.at(y, x) = float(std::cos(2.0 * M_PI * cycles * x / S));
  Image matched = ust::fpm::log_gabor_response(img, 8.0, 0.55);
  Image detuned = ust::fpm::log_gabor_response(img, 32.0, 0.55);
  double e_match = 0, e_detuned = 0;
  for (size_t i = 0; i < img.v.size(); ++i) {
    e_match += double(matched.v[i]) * matched.v[i];
    e_detuned += double(detuned.v[i]) * detuned.v[i];
  }
  CHECK(e_match > 4.0 * e_detuned);
}

TEST_CASE("local phase tensor: zero and constant images vanish") {
  Image zero(12, 12, 0.0f);
  auto r0 = ust::fpm::local_phase_tensor(zero);
  for (float v : r0.lpt.v) CHECK(v == 0.0f);
  Image constant(12, 12, 0.77f);
  auto rc = ust::fpm::local_phase_tensor(constant);
  for (float v : rc.lpt.v) CHECK(v == 0.0f);
  for (float v : rc.t_even.v) CHECK(v == 0.0f);
  for (float v : rc.t_odd.v) CHECK(v == 0.0f);
}

TEST_CASE("local phase tensor: cosine grating matches the stencil oracle") {
  const int S = 24;
  Image img(S, S);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) img.at(y, x) = float(0.5 + 0.4 * std::cos(2.0 * M_PI * x / 8.0));
  auto r = ust::fpm::local_phase_tensor(img);

  // independent pointwise recomputation with explicit stencils
  auto at = [&](int y, int x) {
    y = std::clamp(y, 0, S - 1);
    x = std::clamp(x, 0, S - 1);
    return double(img.at(y, x));
  };
  auto lap = [&](int y, int x) {
    return at(y, x + 1) + at(y, x - 1) + at(y + 1, x) + at(y - 1, x) - 4.0 * at(y, x);
  };
  for (int y = 2; y < S - 2; ++y)
    for (int x = 2; x < S - 2; ++x) {
      const double ixx = at(y, x + 1) - 2 * at(y, x) + at(y, x - 1);
      const double iyy = at(y + 1, x) - 2 * at(y, x) + at(y - 1, x);
      const double ixy =
          (at(y + 1, x + 1) - at(y + 1, x - 1) - at(y - 1, x + 1) + at(y - 1, x - 1)) / 4.0;
      const double e11 = ixx * ixx + ixy * ixy;
      const double e12 = ixy * (ixx + iyy);
      const double e22 = ixy * ixy + iyy * iyy;
      const double te = std::sqrt(e11 * e11 + 2 * e12 * e12 + e22 * e22);
      const double gx = (at(y, x + 1) - at(y, x - 1)) / 2.0;
      const double gy = (at(y + 1, x) - at(y - 1, x)) / 2.0;
      const double hx = (lap(y, x + 1) - lap(y, x - 1)) / 2.0;
      const double hy = (lap(y + 1, x) - lap(y - 1, x)) / 2.0;
      const double o11 = -gx * hx;
      const double o12 = -0.5 * (gx * hy + gy * hx);
      const double o22 = -gy * hy;
      const double to = std::sqrt(o11 * o11 + 2 * o12 * o12 + o22 * o22);
      const double want = std::hypot(te, to) * std::cos(std::atan2(to, te));
      CHECK(r.lpt.at(y, x) == doctest::Approx(want).epsilon(1e-4));
      CHECK(r.t_even.at(y, x) == doctest::Approx(te).epsilon(1e-4));
      CHECK(r.t_odd.at(y, x) == doctest::Approx(to).epsilon(1e-4));
    }
}

TEST_CASE("monogenic: degenerate inputs") {
  Image zero(16, 16, 0.0f);
  auto mz = ust::fpm::monogenic(zero);
  for (float v : mz.m1.v) CHECK(v == 0.0f);
  for (float v : mz.m2.v) CHECK(std::abs(v) < 1e-12);
  for (float v : mz.m3.v) CHECK(std::abs(v) < 1e-12);

  Image constant(16, 16, 0.3f);
  auto mc = ust::fpm::monogenic(constant);
  for (float v : mc.m2.v) CHECK(std::abs(v) < 1e-9);
  for (float v : mc.m3.v) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("monogenic: horizontal-frequency grating lands in M2") {
  const int S = 32;
  Image img(S, S);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) img.at(y, x) = float(std::sin(2.0 * M_PI * 4.0 * x / S));
  auto m = ust::fpm::monogenic(img);
  double e2 = 0, e3 = 0;
  for (size_t i = 0; i < img.v.size(); ++i) {
    e2 += double(m.m2.v[i]) * m.m2.v[i];
    e3 += double(m.m3.v[i]) * m.m3.v[i];
  }
  CHECK(e2 > 10.0 * (e3 + 1e-18));
}

TEST_CASE("integrated backscatter: definitions") {
  using ust::fpm::MonogenicSignal;
  const int S = 8;
  Image zero(S, S, 0.0f);
  MonogenicSignal mono{zero, zero, zero};
  auto rz = ust::fpm::lp_fs_ibs(mono, zero, zero, zero, 0.0);
  for (float v : rz.ibs.v) CHECK(v == 0.0f);

  // single bright bottom row: IBS jumps from 0 to 1 at that row
  Image bottom(S, S, 0.0f);
  for (int x = 0; x < S; ++x) bottom.at(S - 1, x) = 1.0f;
  auto rb = ust::fpm::lp_fs_ibs(mono, zero, zero, bottom, 0.0);
  for (int y = 0; y < S - 1; ++y)
    for (int x = 0; x < S; ++x) CHECK(rb.ibs.at(y, x) == 0.0f);
  for (int x = 0; x < S; ++x) CHECK(rb.ibs.at(S - 1, x) == doctest::Approx(1.0));
}

TEST_CASE("integrated backscatter: random image matches the running-sum oracle") {
  Rng rng(32);
  const int S = 8;
  Image img(S, S);
  for (float& v : img.v) v = float(rng.uniform());
  Image zero(S, S, 0.0f);
  ust::fpm::MonogenicSignal mono{zero, zero, zero};
  auto r = ust::fpm::lp_fs_ibs(mono, zero, zero, img, 0.0);
  for (int x = 0; x < S; ++x) {
    double total = 0;
    for (int y = 0; y < S; ++y) total += double(img.at(y, x)) * img.at(y, x);
    double run = 0;
    for (int y = 0; y < S; ++y) {
      run += double(img.at(y, x)) * img.at(y, x);
      CHECK(r.ibs.at(y, x) == doctest::Approx(run / total).epsilon(1e-5));
    }
  }
}

TEST_CASE("fpm: zero frame produces all-zero channels") {
  FpmConfig cfg;
  cfg.image_size = 32;
  Image zero(32, 32, 0.0f);
  auto map = ust::fpm::compute(zero, cfg);
  CHECK(map.channels.size() == size_t(10) * 32 * 32);
  for (float v : map.channels) CHECK(v == 0.0f);
}

TEST_CASE("fpm: lambda0=0 channel equals the product applied to the unfiltered image") {
  FpmConfig cfg;
  cfg.image_size = 32;
  Rng rng(33);
  Image frame(32, 32);
  for (float& v : frame.v) v = float(rng.uniform());
  auto map = ust::fpm::compute(frame, cfg);

  // recompose channel 0 (horizontal band, lambda0 = 0) by hand
  Image resized = ust::clamp01(frame);
  Image comp = ust::fpm::apply_dga(resized,
                                   ust::fpm::dga_mask(32, cfg.attenuation_a, cfg.attenuation_flip));
  auto sino = ust::fpm::radon(comp, ust::fpm::default_angles(cfg.angle_step_deg));
  Image enh = ust::fpm::enhance_orientation(comp, sino,
                                            ust::fpm::AngleBand(cfg.band_horizontal), false);
  auto lpt = ust::fpm::local_phase_tensor(enh);
  auto mono = ust::fpm::monogenic(lpt.lpt);
  const double tau = ust::fpm::tau_from_percentile(lpt.t_even, lpt.t_odd, cfg.tau_percentile);
  auto maps = ust::fpm::lp_fs_ibs(mono, lpt.t_even, lpt.t_odd, enh, tau);
  for (int i = 0; i < 32 * 32; ++i) {
    const float want =
        std::clamp(maps.lp.v[size_t(i)] * maps.fs.v[size_t(i)] * (1.0f - maps.ibs.v[size_t(i)]),
                   0.0f, 1.0f);
    CHECK(map.channels[size_t(i)] == doctest::Approx(want));
  }
}

TEST_CASE("fpm: range, finiteness and determinism on adversarial frames") {
  FpmConfig cfg;
  cfg.image_size = 32;
  Rng rng(34);
  std::vector<Image> frames;
  frames.emplace_back(32, 32, 0.0f);
  frames.emplace_back(32, 32, 1.0f);
  Image single(32, 32, 0.0f);
  single.at(13, 21) = 1.0f;
  frames.push_back(single);
  for (int t = 0; t < 5; ++t) {
    Image f(32, 32);
    for (float& v : f.v) v = float(rng.uniform());
    frames.push_back(f);
  }
  for (const Image& f : frames) {
    auto a = ust::fpm::compute(f, cfg);
    for (float v : a.channels) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    auto b = ust::fpm::compute(f, cfg);
    CHECK(std::equal(a.channels.begin(), a.channels.end(), b.channels.begin()));
  }
}

TEST_CASE("fpm: horizontal band concentrates energy in horizontal channels") {
  // Unfiltered backprojection of a single-orientation scene is a near-flat
  // plateau (ray mass, not structure), so this energy split needs the ramp
  // comparison flag.
  FpmConfig cfg;
  cfg.image_size = 64;
  cfg.ramp_filter = true;
  Image frame(64, 64, 0.05f);
  for (int y = 28; y < 36; ++y)
    for (int x = 0; x < 64; ++x) frame.at(y, x) = 0.9f;
  auto map = ust::fpm::compute(frame, cfg);
  double horiz = 0, total = 0;
  for (int c = 0; c < 10; ++c) {
    const float* ch = map.channel(c);
    for (int y = 28; y < 36; ++y)
      for (int x = 0; x < 64; ++x) {
        const double v = ch[size_t(y) * 64 + x];
        total += v * v;
        if (c < 5) horiz += v * v;
      }
  }
  CHECK(total > 0.0);
  CHECK(horiz / total > 0.6);
}

TEST_CASE("fpm: normalization-channel baseline") {
  Image frame(16, 16, 0.5f);
  auto map = ust::fpm::normalization_channels(frame);
  CHECK(map.channels.size() == size_t(10) * 16 * 16);
  // mu sequence: 0.3 ... 0.7 with spacing 0.4/9
  for (int c = 0; c < 10; ++c)
    CHECK(std::abs(map.lambda0_per_channel[size_t(c)] - (0.3 + 0.4 * c / 9.0)) < 1e-9);
  CHECK(std::abs(map.lambda0_per_channel[1] - map.lambda0_per_channel[0] - 0.044444) < 1e-5);
  // frame==mu channel: (0.5-0.5)/0.5 = 0 everywhere after clipping
  // mu for channel c where mu=0.5 is c=4.5 -> not exact; check clipping behavior instead
  Image zero(8, 8, 0.0f);
  auto mz = ust::fpm::normalization_channels(zero);
  for (float v : mz.channels) CHECK(v == 0.0f);  // (0 - mu)/0.5 < 0 clamps to 0
  // constant frame maps to a constant channel
  for (int c = 0; c < 10; ++c) {
    const float* ch = map.channel(c);
    for (size_t i = 1; i < size_t(16) * 16; ++i) CHECK(ch[i] == ch[0]);
  }
}

TEST_CASE("fpm: orientation selectivity on the band and streak harness patterns") {
  // One scene containing both a horizontal band and a vertical streak:
  // each enhanced orientation must put markedly more energy density on its
  // matching pattern's support than on the other pattern's.
  const int S = 64;
  FpmConfig cfg;
  cfg.image_size = S;
  Image frame(S, S, 0.05f);
  Image band_mask(S, S, 0.0f), streak_mask(S, S, 0.0f);
  // band and streak at comparable depths so the DGA weighting is even-handed
  for (int y = 28; y < 33; ++y)
    for (int x = 4; x < 34; ++x) {
      frame.at(y, x) = 0.9f;
      band_mask.at(y, x) = 1.0f;
    }
  for (int y = 14; y < 50; ++y)
    for (int x = 46; x < 51; ++x) {
      frame.at(y, x) = 0.9f;
      streak_mask.at(y, x) = 1.0f;
    }

  auto density = [&](const Image& enh, const Image& mask) {
    double e = 0;
    int n = 0;
    for (size_t i = 0; i < enh.v.size(); ++i)
      if (mask.v[i] > 0.5f) {
        e += double(enh.v[i]) * enh.v[i];
        ++n;
      }
    return e / n;
  };

  Image comp = ust::fpm::apply_dga(
      frame, ust::fpm::dga_mask(S, cfg.attenuation_a, cfg.attenuation_flip));
  auto sino = ust::fpm::radon(comp, ust::fpm::default_angles(1.0));
  Image eh = ust::fpm::enhance_orientation(comp, sino, ust::fpm::AngleBand::horizontal_edges());
  Image ev = ust::fpm::enhance_orientation(comp, sino, ust::fpm::AngleBand::vertical_edges());
  CHECK(density(eh, band_mask) > 2.0 * density(eh, streak_mask));
  CHECK(density(ev, streak_mask) > 2.0 * density(ev, band_mask));
}

TEST_CASE("fpm config: json round trip and unknown keys") {
  FpmConfig cfg;
  cfg.image_size = 128;
  cfg.attenuation_a = 1.5;
  auto j = cfg.to_json();
  auto back = FpmConfig::from_json(j);
  CHECK(back.image_size == 128);
  CHECK(back.attenuation_a == 1.5);
  CHECK(back.hash() == cfg.hash());
  j["bogus_key"] = 1;
  CHECK_THROWS_AS(FpmConfig::from_json(j), ust::Error);
  auto j2 = cfg.to_json();
  j2["image_size"] = 64;
  CHECK(FpmConfig::from_json(j2).hash() != cfg.hash());
}
