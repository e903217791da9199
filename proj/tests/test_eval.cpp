#include <doctest.h>

#include <cmath>

#include "ust/core/rng.hpp"
#include "ust/eval/knn.hpp"
#include "ust/eval/metrics.hpp"
#include "ust/eval/tsne.hpp"

using ust::Image;
using ust::Rng;
using ust::VideoSequence;
using ust::eval::DetectedKeypoint;
using ust::eval::FrameKeypoints;

TEST_CASE("frame correction: a static sequence collapses to zero, idempotently") {
  Image frame(8, 8);
  for (size_t i = 0; i < frame.v.size(); ++i) frame.v[i] = float(i % 7) / 7.0f;
  VideoSequence seq(5, frame);
  auto corrected = ust::eval::frame_average_correct(seq);
  for (const auto& f : corrected)
    for (float v : f.v) CHECK(v == 0.0f);
  auto twice = ust::eval::frame_average_correct(corrected);
  for (const auto& f : twice)
    for (float v : f.v) CHECK(v == 0.0f);
}

TEST_CASE("frame correction: median arithmetic and minimum length") {
  // per-pixel median of {0, 0, 1} is 0: nothing subtracted at that pixel
  Image a(2, 2, 0.0f), b(2, 2, 0.0f), c(2, 2, 1.0f);
  auto corrected = ust::eval::frame_average_correct({a, b, c});
  CHECK(corrected[2].v[0] == 1.0f);
  CHECK(corrected[0].v[0] == 0.0f);
  CHECK_THROWS_AS(ust::eval::frame_average_correct({a, b}), ust::Error);
}

TEST_CASE("frame correction: a moving dot survives, static background vanishes") {
  const float bg = 0.4f;
  VideoSequence seq;
  for (int f = 0; f < 5; ++f) {
    Image img(16, 16, bg);
    img.at(8, 3 + 2 * f) = 0.9f;  // dot at a fresh location every frame
    seq.push_back(img);
  }
  auto corrected = ust::eval::frame_average_correct(seq);
  for (int f = 0; f < 5; ++f) {
    CHECK(corrected[size_t(f)].at(8, 3 + 2 * f) >= 0.9f - bg - 1e-6f);
    // background pixels are exactly removed
    CHECK(corrected[size_t(f)].at(2, 2) == 0.0f);
  }
}

namespace {

FrameKeypoints kp_at(std::initializer_list<std::pair<double, double>> pts) {
  FrameKeypoints fk;
  for (auto& [x, y] : pts) {
    DetectedKeypoint kp;
    kp.px = x;
    kp.py = y;
    fk.push_back(kp);
  }
  return fk;
}

}  // namespace

TEST_CASE("sp_sn: all keypoints on the single component") {
  Image mask(32, 32, 0.0f);
  for (int y = 10; y < 20; ++y)
    for (int x = 10; x < 20; ++x) mask.at(y, x) = 1.0f;
  auto report = ust::eval::sp_sn({kp_at({{12, 12}, {15, 18}})}, {mask}, 8);
  CHECK(report.sp == 1.0);
  CHECK(report.sn == 1.0);
  CHECK(report.sn_defined);
}

TEST_CASE("sp_sn: two components, one hit") {
  Image mask(64, 64, 0.0f);
  for (int x = 5; x < 15; ++x) mask.at(5, x) = 1.0f;
  for (int x = 40; x < 50; ++x) mask.at(50, x) = 1.0f;
  auto report = ust::eval::sp_sn({kp_at({{10, 5}})}, {mask}, 4);
  CHECK(report.sp == 1.0);
  CHECK(report.sn == 0.5);
}

TEST_CASE("sp_sn: empty masks leave SN undefined") {
  Image mask(16, 16, 0.0f);
  auto report = ust::eval::sp_sn({kp_at({{4, 4}})}, {mask}, 8);
  CHECK_FALSE(report.sn_defined);
  CHECK(report.sp == 0.0);
  CHECK(report.to_json().at("sn").is_null());
}

TEST_CASE("sp_sn: random frames match the brute-force all-pairs oracle") {
  Rng rng(60);
  std::vector<Image> masks;
  std::vector<FrameKeypoints> kps;
  for (int f = 0; f < 20; ++f) {
    Image mask(32, 32, 0.0f);
    for (int b = 0; b < 3; ++b) {
      const int cy = int(rng.uniform_int(4, 27)), cx = int(rng.uniform_int(4, 27));
      for (int y = cy - 2; y <= cy + 2; ++y)
        for (int x = cx - 2; x <= cx + 2; ++x) mask.at(y, x) = 1.0f;
    }
    masks.push_back(mask);
    FrameKeypoints fk;
    for (int k = 0; k < 5; ++k) {
      DetectedKeypoint kp;
      kp.px = rng.uniform(0, 31);
      kp.py = rng.uniform(0, 31);
      fk.push_back(kp);
    }
    kps.push_back(fk);
  }
  const int radius = 5;
  auto report = ust::eval::sp_sn(kps, masks, radius);

  // oracle: O(k * |mask|) scan per frame
  double sp_sum = 0, sn_sum = 0;
  int sn_frames = 0;
  for (int f = 0; f < 20; ++f) {
    auto [labels, n_comp] = ust::eval::connected_components(masks[size_t(f)]);
    std::vector<bool> hit(size_t(n_comp), false);
    int detecting = 0;
    for (const auto& kp : kps[size_t(f)]) {
      bool any = false;
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          const int l = labels[size_t(y) * 32 + x];
          if (!l) continue;
          const double d = std::hypot(kp.px - x, kp.py - y);
          if (d <= radius) {
            hit[size_t(l - 1)] = true;
            any = true;
          }
        }
      detecting += any;
    }
    sp_sum += double(detecting) / 5.0;
    if (n_comp > 0) {
      sn_sum += double(std::count(hit.begin(), hit.end(), true)) / double(n_comp);
      ++sn_frames;
    }
  }
  CHECK(report.sp == doctest::Approx(sp_sum / 20.0).epsilon(1e-12));
  CHECK(report.sn == doctest::Approx(sn_sum / sn_frames).epsilon(1e-12));
}

TEST_CASE("sp_sn: monotone non-decreasing in the radius") {
  Rng rng(61);
  Image mask(32, 32, 0.0f);
  for (int x = 10; x < 22; ++x) mask.at(16, x) = 1.0f;
  FrameKeypoints fk;
  for (int k = 0; k < 6; ++k) {
    DetectedKeypoint kp;
    kp.px = rng.uniform(0, 31);
    kp.py = rng.uniform(0, 31);
    fk.push_back(kp);
  }
  double prev_sp = -1, prev_sn = -1;
  for (int radius : {0, 2, 4, 8, 16, 32}) {
    auto r = ust::eval::sp_sn({fk}, {mask}, radius);
    CHECK(r.sp >= prev_sp);
    CHECK(r.sn >= prev_sn);
    prev_sp = r.sp;
    prev_sn = r.sn;
  }
}

TEST_CASE("connected components: 4-connectivity") {
  Image mask(4, 4, 0.0f);
  mask.at(0, 0) = 1.0f;
  mask.at(1, 1) = 1.0f;  // diagonal: NOT connected under 4-connectivity
  mask.at(3, 2) = 1.0f;
  mask.at(3, 3) = 1.0f;  // adjacent: one component
  auto [labels, n] = ust::eval::connected_components(mask);
  CHECK(n == 3);
  CHECK(labels[15] == labels[14]);
  CHECK(labels[0] != labels[5]);
}

TEST_CASE("tsne: two well-separated blobs separate in the embedding") {
  Rng rng(62);
  std::vector<std::vector<float>> x;
  for (int i = 0; i < 30; ++i)
    x.push_back({float(rng.normal() * 0.3), float(rng.normal() * 0.3), 0.0f});
  for (int i = 0; i < 30; ++i)
    x.push_back({float(10 + rng.normal() * 0.3), float(rng.normal() * 0.3), 1.0f});
  ust::eval::TsneConfig cfg;
  cfg.perplexity = 10;
  cfg.iterations = 500;
  cfg.seed = 3;
  auto r = ust::eval::tsne(x, cfg);
  REQUIRE(r.points.size() == 60);
  CHECK(r.final_kl <= r.initial_kl);

  auto centroid = [&](int lo, int hi) {
    std::array<double, 2> c{0, 0};
    for (int i = lo; i < hi; ++i) {
      c[0] += r.points[size_t(i)][0];
      c[1] += r.points[size_t(i)][1];
    }
    c[0] /= (hi - lo);
    c[1] /= (hi - lo);
    return c;
  };
  auto c0 = centroid(0, 30), c1 = centroid(30, 60);
  const double between = std::hypot(c0[0] - c1[0], c0[1] - c1[1]);
  double intra = 0;
  for (int i = 0; i < 30; ++i) intra += std::hypot(r.points[size_t(i)][0] - c0[0],
                                                   r.points[size_t(i)][1] - c0[1]);
  for (int i = 30; i < 60; ++i) intra += std::hypot(r.points[size_t(i)][0] - c1[0],
                                                    r.points[size_t(i)][1] - c1[1]);
  intra /= 60.0;
  CHECK(between > 3.0 * intra);
}

TEST_CASE("tsne: duplicates embed together") {
  Rng rng(63);
  std::vector<std::vector<float>> x;
  for (int i = 0; i < 40; ++i)
    x.push_back({float(rng.uniform(0, 5)), float(rng.uniform(0, 5))});
  x.push_back(x[7]);  // exact duplicate of point 7 -> index 40
  ust::eval::TsneConfig cfg;
  cfg.perplexity = 8;
  cfg.iterations = 400;
  cfg.seed = 4;
  auto r = ust::eval::tsne(x, cfg);
  std::vector<double> dists;
  for (size_t i = 0; i < r.points.size(); ++i)
    for (size_t j = i + 1; j < r.points.size(); ++j)
      dists.push_back(std::hypot(r.points[i][0] - r.points[j][0],
                                 r.points[i][1] - r.points[j][1]));
  std::sort(dists.begin(), dists.end());
  const double median = dists[dists.size() / 2];
  const double dup = std::hypot(r.points[7][0] - r.points[40][0],
                                r.points[7][1] - r.points[40][1]);
  CHECK(dup < median / 10.0);
}

TEST_CASE("tsne: bandwidth calibration hits the target entropy") {
  Rng rng(64);
  std::vector<std::vector<float>> x;
  for (int i = 0; i < 50; ++i)
    x.push_back({float(rng.normal()), float(rng.normal()), float(rng.normal())});
  ust::eval::TsneConfig cfg;
  cfg.perplexity = 12;
  cfg.iterations = 10;
  auto r = ust::eval::tsne(x, cfg);
  const double target = std::log(12.0);
  for (double h : r.entropy) CHECK(std::abs(h - target) < 1e-3);
}

TEST_CASE("tsne: deterministic under the seed, errors on oversized perplexity") {
  Rng rng(65);
  std::vector<std::vector<float>> x;
  for (int i = 0; i < 30; ++i) x.push_back({float(rng.uniform(0, 1)), float(rng.uniform(0, 1))});
  ust::eval::TsneConfig cfg;
  cfg.perplexity = 5;
  cfg.iterations = 120;
  cfg.seed = 9;
  auto a = ust::eval::tsne(x, cfg);
  auto b = ust::eval::tsne(x, cfg);
  for (size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i][0] == b.points[i][0]);
    CHECK(a.points[i][1] == b.points[i][1]);
  }
  cfg.perplexity = 20;  // 30 < 3*20
  CHECK_THROWS_AS(ust::eval::tsne(x, cfg), ust::Error);
}

TEST_CASE("knn: perfectly separated clusters classify exactly") {
  Rng rng(66);
  std::vector<std::vector<double>> pts;
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) {
    pts.push_back({rng.uniform(0, 1), rng.uniform(0, 1)});
    labels.push_back(0);
    pts.push_back({rng.uniform(100, 101), rng.uniform(0, 1)});
    labels.push_back(1);
  }
  ust::eval::CoclassifyConfig cfg;
  auto m = ust::eval::knn_coclassify(pts, labels, cfg);
  CHECK(m.accuracy == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
}

TEST_CASE("knn: shuffled labels sit at chance level") {
  Rng rng(67);
  std::vector<std::vector<double>> pts;
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) {
    pts.push_back({rng.uniform(0, 1), rng.uniform(0, 1)});
    labels.push_back(i % 2);
  }
  ust::eval::CoclassifyConfig cfg;
  cfg.trials = 10;
  cfg.seed = 5;
  auto m = ust::eval::knn_coclassify(pts, labels, cfg);
  CHECK(m.accuracy > 0.35);
  CHECK(m.accuracy < 0.65);
}

TEST_CASE("knn: a lone point among the other class is misclassified") {
  // train: two of class 0 far away, one of class 1 near the test point's
  // class-0 twin; with k=1 the test point of class 1 lands on class 0
  std::vector<std::vector<double>> pts = {
      {0.0, 0.0},   // 0: class 0 (train)
      {0.1, 0.0},   // 1: class 0 (train)
      {5.0, 5.0},   // 2: class 1 (train)
      {0.05, 0.0},  // 3: class 1 (test) - nearest train point is class 0
  };
  std::vector<int> labels = {0, 0, 1, 1};
  auto m = ust::eval::knn_classify_once(pts, labels, {0, 1, 2}, {3}, 1);
  CHECK(m.accuracy == 0.0);
}

TEST_CASE("knn: degenerate inputs are rejected") {
  std::vector<std::vector<double>> pts = {{0, 0}, {1, 1}, {2, 2}};
  ust::eval::CoclassifyConfig cfg;
  CHECK_THROWS_AS(ust::eval::knn_coclassify(pts, {0, 0, 0}, cfg), ust::Error);
  CHECK_THROWS_AS(ust::eval::knn_coclassify(pts, {0, 0, 1}, cfg), ust::Error);
}

TEST_CASE("embeddings: identical frames give identical C_f vectors, pooled = channel mean") {
  ust::transporter::ModelConfig mc;
  mc.k = 2;
  mc.image_size = 32;
  mc.feature_channels = 4;
  ust::transporter::TransporterModel<float> model(mc, 3);
  ust::fpm::FpmConfig fc;
  fc.image_size = 32;

  Image frame(32, 32, 0.1f);
  for (int x = 0; x < 32; ++x) frame.at(16, x) = 0.8f;
  auto a = ust::eval::embed_frame(frame, model, fc);
  auto b = ust::eval::embed_frame(frame, model, fc);
  REQUIRE(a.vec.size() == 4);
  for (size_t i = 0; i < a.vec.size(); ++i) CHECK(a.vec[i] == b.vec[i]);

  // oracle: global average of each feature channel
  auto map = ust::fpm::compute(frame, fc);
  auto t = ust::nn::Tensor<float>::from({1, 10, 32, 32}, map.channels);
  ust::nn::NoGradGuard off;
  auto feats = model.features(t, false);
  const int plane = feats.dim(2) * feats.dim(3);
  for (int c = 0; c < 4; ++c) {
    double mean = 0;
    for (int p = 0; p < plane; ++p) mean += feats.value()[size_t(c) * plane + size_t(p)];
    mean /= plane;
    CHECK(a.vec[size_t(c)] == doctest::Approx(mean).epsilon(1e-5));
  }
}

TEST_CASE("detect_keypoints: pixel mapping and correction purity") {
  ust::transporter::ModelConfig mc;
  mc.k = 3;
  mc.image_size = 32;
  mc.feature_channels = 4;
  ust::transporter::TransporterModel<float> model(mc, 4);
  ust::fpm::FpmConfig fc;
  fc.image_size = 32;

  VideoSequence seq;
  Rng rng(68);
  for (int f = 0; f < 4; ++f) {
    Image img(32, 32, 0.2f);
    img.at(10 + f, 12) = 0.9f;
    seq.push_back(img);
  }
  auto raw = ust::eval::detect_keypoints(seq, model, fc, false);
  REQUIRE(raw.size() == 4);
  for (const auto& fk : raw)
    for (const auto& kp : fk) {
      CHECK(kp.px == doctest::Approx((kp.x + 1.0) / 2.0 * 31.0).epsilon(1e-9));
      CHECK(kp.py == doctest::Approx((kp.y + 1.0) / 2.0 * 31.0).epsilon(1e-9));
      CHECK(kp.sigma == doctest::Approx(0.1).epsilon(1e-5));
      CHECK(kp.weight == 1.0);
      CHECK(kp.confidence > 0.0);
    }

  // correction flag == running detection on the pre-corrected sequence
  auto with_flag = ust::eval::detect_keypoints(seq, model, fc, true);
  auto precorrected = ust::eval::detect_keypoints(ust::eval::frame_average_correct(seq), model,
                                                  fc, false);
  for (size_t f = 0; f < with_flag.size(); ++f)
    for (size_t k = 0; k < with_flag[f].size(); ++k) {
      CHECK(with_flag[f][k].x == precorrected[f][k].x);
      CHECK(with_flag[f][k].y == precorrected[f][k].y);
    }
}
