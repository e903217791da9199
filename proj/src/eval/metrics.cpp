#include "ust/eval/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace ust::eval {

VideoSequence frame_average_correct(const VideoSequence& seq, bool use_mean) {
  if (seq.size() < 3) throw data_error("frame_average_correct: needs at least 3 frames");
  const int h = seq[0].h, w = seq[0].w;
  for (const auto& f : seq)
    if (f.h != h || f.w != w)
      throw data_error("frame_average_correct: inconsistent frame sizes");

  Image reference(h, w);
  const size_t n = seq.size();
  if (use_mean) {
    for (size_t i = 0; i < reference.v.size(); ++i) {
      double acc = 0;
      for (const auto& f : seq) acc += f.v[i];
      reference.v[i] = float(acc / double(n));
    }
  } else {
    std::vector<float> column(n);
    for (size_t i = 0; i < reference.v.size(); ++i) {
      for (size_t f = 0; f < n; ++f) column[f] = seq[f].v[i];
      auto mid = column.begin() + long(n / 2);
      std::nth_element(column.begin(), mid, column.end());
      float med = *mid;
      if (n % 2 == 0) {
        auto lo = std::max_element(column.begin(), mid);
        med = 0.5f * (med + *lo);
      }
      reference.v[i] = med;
    }
  }

  VideoSequence out;
  out.reserve(n);
  for (const auto& f : seq) {
    Image corrected(h, w);
    for (size_t i = 0; i < corrected.v.size(); ++i)
      corrected.v[i] = std::clamp(f.v[i] - reference.v[i], 0.0f, 1.0f);
    out.push_back(std::move(corrected));
  }
  return out;
}

std::vector<FrameKeypoints> detect_keypoints(const VideoSequence& frames,
                                             transporter::TransporterModel<float>& model,
                                             const fpm::FpmConfig& fpm_config, bool correction) {
  const VideoSequence& input = correction ? frame_average_correct(frames) : frames;
  const int S = model.config().image_size;
  if (fpm_config.image_size != S)
    throw data_error("detect_keypoints: rtfpm image_size differs from the model's");

  std::vector<FrameKeypoints> out;
  out.reserve(input.size());
  nn::NoGradGuard off_tape;
  auto sigma = model.sigma();
  auto weights = model.transport_weights();
  for (const auto& frame : input) {
    auto map = fpm::compute(frame, fpm_config);
    auto t = nn::Tensor<float>::from({1, 10, S, S}, map.channels);
    auto keys = model.keypoints(t, false);
    FrameKeypoints fk;
    const int fh = keys.probs.dim(2), fw = keys.probs.dim(3);
    for (int k = 0; k < model.config().k; ++k) {
      DetectedKeypoint kp;
      kp.x = keys.coords.value()[size_t(k) * 2];
      kp.y = keys.coords.value()[size_t(k) * 2 + 1];
      kp.px = (kp.x + 1.0) / 2.0 * (S - 1);
      kp.py = (kp.y + 1.0) / 2.0 * (S - 1);
      kp.sigma = sigma.value()[size_t(k)];
      kp.weight = weights.value()[size_t(k)];
      float peak = 0;
      const float* p = keys.probs.value().data() + size_t(k) * fh * fw;
      for (int i = 0; i < fh * fw; ++i) peak = std::max(peak, p[size_t(i)]);
      kp.confidence = peak;
      fk.push_back(kp);
    }
    out.push_back(std::move(fk));
  }
  return out;
}

std::pair<std::vector<int>, int> connected_components(const Image& mask) {
  const int h = mask.h, w = mask.w;
  std::vector<int> labels(size_t(h) * w, 0);
  int next = 0;
  std::vector<int> stack;
  for (int start = 0; start < h * w; ++start) {
    if (mask.v[size_t(start)] <= 0.5f || labels[size_t(start)] != 0) continue;
    ++next;
    stack.push_back(start);
    labels[size_t(start)] = next;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int y = p / w, x = p % w;
      const int neigh[4] = {p - w, p + w, p - 1, p + 1};
      const bool ok[4] = {y > 0, y < h - 1, x > 0, x < w - 1};
      for (int i = 0; i < 4; ++i) {
        if (!ok[i]) continue;
        const int q = neigh[i];
        if (mask.v[size_t(q)] > 0.5f && labels[size_t(q)] == 0) {
          labels[size_t(q)] = next;
          stack.push_back(q);
        }
      }
    }
  }
  return {std::move(labels), next};
}

EvalReport sp_sn(const std::vector<FrameKeypoints>& keypoints, const std::vector<Image>& masks,
                 int radius_px) {
  if (radius_px < 0) throw data_error("sp_sn: radius must be >= 0");
  if (keypoints.size() != masks.size())
    throw data_error("sp_sn: keypoint and mask frame counts differ");

  EvalReport report;
  report.radius_px = radius_px;
  report.per_frame = json::array();

  double sp_sum = 0, sn_sum = 0;
  int sp_frames = 0, sn_frames = 0;
  long total_kp = 0, detecting_kp = 0, total_comp = 0, detected_comp = 0;
  const double r2 = double(radius_px) * radius_px;

  for (size_t f = 0; f < masks.size(); ++f) {
    auto [labels, n_comp] = connected_components(masks[f]);
    const int h = masks[f].h, w = masks[f].w;
    const auto& kps = keypoints[f];

    // bounding boxes per component to cut the distance scans short
    std::vector<int> x0(size_t(n_comp), w), x1(size_t(n_comp), -1), y0(size_t(n_comp), h),
        y1(size_t(n_comp), -1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int l = labels[size_t(y) * w + x];
        if (!l) continue;
        x0[size_t(l - 1)] = std::min(x0[size_t(l - 1)], x);
        x1[size_t(l - 1)] = std::max(x1[size_t(l - 1)], x);
        y0[size_t(l - 1)] = std::min(y0[size_t(l - 1)], y);
        y1[size_t(l - 1)] = std::max(y1[size_t(l - 1)], y);
      }

    auto kp_hits_component = [&](const DetectedKeypoint& kp, int comp) {
      const int sy = std::max({0, int(std::floor(kp.py)) - radius_px - 1, y0[size_t(comp)]});
      const int ey = std::min({h - 1, int(std::ceil(kp.py)) + radius_px + 1, y1[size_t(comp)]});
      const int sx = std::max({0, int(std::floor(kp.px)) - radius_px - 1, x0[size_t(comp)]});
      const int ex = std::min({w - 1, int(std::ceil(kp.px)) + radius_px + 1, x1[size_t(comp)]});
      for (int y = sy; y <= ey; ++y)
        for (int x = sx; x <= ex; ++x) {
          if (labels[size_t(y) * w + x] != comp + 1) continue;
          const double dx = kp.px - x, dy = kp.py - y;
          if (dx * dx + dy * dy <= r2) return true;
        }
      return false;
    };

    int frame_detecting = 0;
    std::vector<bool> comp_hit(size_t(n_comp), false);
    for (const auto& kp : kps) {
      bool hit = false;
      for (int c = 0; c < n_comp; ++c)
        if (kp_hits_component(kp, c)) {
          comp_hit[size_t(c)] = true;
          hit = true;
        }
      if (hit) ++frame_detecting;
    }
    const int frame_detected = int(std::count(comp_hit.begin(), comp_hit.end(), true));

    total_kp += long(kps.size());
    detecting_kp += frame_detecting;
    total_comp += n_comp;
    detected_comp += frame_detected;

    json fj = {{"frame", int(f)},
               {"keypoints", int(kps.size())},
               {"components", n_comp},
               {"detecting", frame_detecting},
               {"detected", frame_detected}};
    if (!kps.empty()) {
      sp_sum += double(frame_detecting) / double(kps.size());
      ++sp_frames;
      fj["sp"] = double(frame_detecting) / double(kps.size());
    }
    if (n_comp > 0) {
      sn_sum += double(frame_detected) / double(n_comp);
      ++sn_frames;
      fj["sn"] = double(frame_detected) / double(n_comp);
    }
    report.per_frame.push_back(fj);
  }

  report.sp = sp_frames ? sp_sum / sp_frames : 0.0;
  report.sn_defined = sn_frames > 0;
  report.sn = report.sn_defined ? sn_sum / sn_frames : 0.0;
  report.sp_pooled = total_kp ? double(detecting_kp) / double(total_kp) : 0.0;
  report.sn_pooled = total_comp ? double(detected_comp) / double(total_comp) : 0.0;
  return report;
}

json EvalReport::to_json() const {
  json j = {{"sp", sp},
            {"sn", sn_defined ? json(sn) : json(nullptr)},
            {"sp_pooled", sp_pooled},
            {"sn_pooled", sn_defined ? json(sn_pooled) : json(nullptr)},
            {"radius_px", radius_px},
            {"frames", per_frame}};
  return j;
}

EmbeddingRecord embed_frame(const Image& frame, transporter::TransporterModel<float>& model,
                            const fpm::FpmConfig& fpm_config) {
  const int S = model.config().image_size;
  if (fpm_config.image_size != S)
    throw data_error("embed_frame: rtfpm image_size differs from the model's");
  nn::NoGradGuard off_tape;
  auto map = fpm::compute(frame, fpm_config);
  auto t = nn::Tensor<float>::from({1, 10, S, S}, map.channels);
  auto features = model.features(t, false);
  auto pooled = nn::global_avg_pool(features);
  EmbeddingRecord rec;
  rec.vec.assign(pooled.value().begin(), pooled.value().end());
  return rec;
}

}  // namespace ust::eval
