#include "ust/synth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ust/core/pgm.hpp"
#include "ust/core/rng.hpp"

namespace ust::synth {

namespace {

constexpr double kBorderMargin = 16.0;

std::string kind_name(ElementKind k) {
  switch (k) {
    case ElementKind::horizontal_band: return "horizontal_band";
    case ElementKind::vertical_streak: return "vertical_streak";
    case ElementKind::static_overlay: return "static_overlay";
    case ElementKind::moving_blob: return "moving_blob";
  }
  return "horizontal_band";
}

ElementKind kind_from(const std::string& s) {
  if (s == "horizontal_band") return ElementKind::horizontal_band;
  if (s == "vertical_streak") return ElementKind::vertical_streak;
  if (s == "static_overlay") return ElementKind::static_overlay;
  if (s == "moving_blob") return ElementKind::moving_blob;
  throw data_error("scene: unknown element type \"" + s + "\"");
}

// coverage of pixel cell [p, p+1) by the interval [lo, hi]
inline double cell_coverage(int p, double lo, double hi) {
  return std::clamp(std::min(hi, double(p) + 1.0) - std::max(lo, double(p)), 0.0, 1.0);
}

double element_position(const Element& e, int frame) {
  if (e.amplitude == 0.0) return e.center;
  return e.center + e.amplitude * std::sin(2.0 * M_PI * double(frame) / e.period);
}

}  // namespace

json Element::to_json() const {
  json j{{"type", kind_name(kind)}, {"landmark", landmark}};
  switch (kind) {
    case ElementKind::horizontal_band:
    case ElementKind::vertical_streak:
      j["center"] = center;
      j["thickness"] = thickness;
      j["intensity"] = intensity;
      j["amplitude"] = amplitude;
      j["period"] = period;
      if (extent_lo >= 0) j["extent"] = {extent_lo, extent_hi};
      break;
    case ElementKind::static_overlay:
      j["x"] = x;
      j["y"] = y;
      j["w"] = w;
      j["h"] = h;
      j["intensity"] = intensity;
      j["checker"] = checker;
      break;
    case ElementKind::moving_blob:
      j["cx"] = cx;
      j["cy"] = cy;
      j["sigma"] = sigma;
      j["intensity"] = intensity;
      j["amplitude"] = amplitude;
      j["period"] = period;
      break;
  }
  return j;
}

Element Element::from_json(const json& j) {
  Element e;
  e.kind = kind_from(j.at("type").get<std::string>());
  switch (e.kind) {
    case ElementKind::horizontal_band:
    case ElementKind::vertical_streak:
      reject_unknown_keys(j, {"type", "landmark", "center", "thickness", "intensity",
                              "amplitude", "period", "extent"},
                          "scene element");
      e.center = j.at("center").get<double>();
      e.thickness = j.value("thickness", e.thickness);
      e.intensity = j.value("intensity", e.intensity);
      e.amplitude = j.value("amplitude", 0.0);
      e.period = j.value("period", e.period);
      if (j.contains("extent")) {
        e.extent_lo = j.at("extent").at(0).get<double>();
        e.extent_hi = j.at("extent").at(1).get<double>();
      }
      e.landmark = j.value("landmark", true);
      break;
    case ElementKind::static_overlay:
      reject_unknown_keys(j, {"type", "landmark", "x", "y", "w", "h", "intensity", "checker"},
                          "scene element");
      e.x = j.at("x").get<double>();
      e.y = j.at("y").get<double>();
      e.w = j.at("w").get<double>();
      e.h = j.at("h").get<double>();
      e.intensity = j.value("intensity", e.intensity);
      e.checker = j.value("checker", false);
      e.landmark = j.value("landmark", false);
      break;
    case ElementKind::moving_blob:
      reject_unknown_keys(j, {"type", "landmark", "cx", "cy", "sigma", "intensity", "amplitude",
                              "period"},
                          "scene element");
      e.cx = j.at("cx").get<double>();
      e.cy = j.at("cy").get<double>();
      e.sigma = j.value("sigma", e.sigma);
      e.intensity = j.value("intensity", e.intensity);
      e.amplitude = j.value("amplitude", 0.0);
      e.period = j.value("period", e.period);
      e.landmark = j.value("landmark", true);
      break;
  }
  return e;
}

json SceneSpec::to_json() const {
  json els = json::array();
  for (const auto& e : elements) els.push_back(e.to_json());
  return json{{"n_frames", n_frames}, {"size", size},       {"background", background},
              {"speckle", speckle},   {"seed", seed},       {"elements", els}};
}

SceneSpec SceneSpec::from_json(const json& j) {
  reject_unknown_keys(j, {"n_frames", "size", "background", "speckle", "seed", "elements"},
                      "scene spec");
  SceneSpec s;
  s.n_frames = j.value("n_frames", s.n_frames);
  s.size = j.value("size", s.size);
  s.background = j.value("background", s.background);
  s.speckle = j.value("speckle", s.speckle);
  s.seed = j.value("seed", s.seed);
  if (j.contains("elements"))
    for (const auto& ej : j.at("elements")) s.elements.push_back(Element::from_json(ej));
  s.validate();
  return s;
}

void SceneSpec::validate() const {
  if (n_frames < 1) throw data_error("scene: n_frames must be >= 1");
  if (size < 48) throw data_error("scene: size must be >= 48");
  if (background < 0 || background > 1) throw data_error("scene: background out of [0,1]");
  if (speckle < 0 || speckle >= 1) throw data_error("scene: speckle must lie in [0,1)");
  const double lo = kBorderMargin, hi = double(size) - kBorderMargin;
  for (const auto& e : elements) {
    if (e.intensity < 0 || e.intensity > 1)
      throw data_error("scene: element intensity out of [0,1]");
    switch (e.kind) {
      case ElementKind::horizontal_band:
      case ElementKind::vertical_streak: {
        const double reach = std::abs(e.amplitude) + e.thickness / 2.0;
        if (e.center - reach < lo || e.center + reach > hi)
          throw data_error("scene: " + kind_name(e.kind) +
                           " motion leaves the 16 px border margin");
        if (e.extent_lo >= 0 && (e.extent_lo < lo || e.extent_hi > hi || e.extent_lo >= e.extent_hi))
          throw data_error("scene: element extent violates the border margin");
        break;
      }
      case ElementKind::static_overlay:
        if (e.x < lo || e.y < lo || e.x + e.w > hi || e.y + e.h > hi)
          throw data_error("scene: overlay violates the border margin");
        break;
      case ElementKind::moving_blob: {
        const double reach = std::abs(e.amplitude) + 2.0 * e.sigma;
        if (e.cx - reach < lo || e.cx + reach > hi || e.cy - reach < lo || e.cy + reach > hi)
          throw data_error("scene: blob motion leaves the 16 px border margin");
        break;
      }
    }
  }
}

Generated generate(const SceneSpec& scene) {
  scene.validate();
  const int S = scene.size;
  Generated g;
  g.frames.reserve(size_t(scene.n_frames));
  g.masks.reserve(size_t(scene.n_frames));

  for (size_t ei = 0; ei < scene.elements.size(); ++ei)
    if (scene.elements[ei].landmark) {
      g.tracks.emplace_back();
      g.track_names.push_back(kind_name(scene.elements[ei].kind) + "_" + std::to_string(ei));
    }

  for (int f = 0; f < scene.n_frames; ++f) {
    Image frame(S, S, float(scene.background));
    Image mask(S, S, 0.0f);
    size_t track_idx = 0;

    for (const auto& e : scene.elements) {
      const double ex_lo = e.extent_lo >= 0 ? e.extent_lo : kBorderMargin;
      const double ex_hi = e.extent_hi >= 0 ? e.extent_hi : double(S) - kBorderMargin;
      double track_x = 0, track_y = 0;

      switch (e.kind) {
        case ElementKind::horizontal_band: {
          const double yc = element_position(e, f);
          const double y0 = yc - e.thickness / 2.0, y1 = yc + e.thickness / 2.0;
          for (int yy = int(y0); yy <= int(y1) && yy < S; ++yy) {
            if (yy < 0) continue;
            const double cy_cov = cell_coverage(yy, y0, y1);
            if (cy_cov <= 0) continue;
            for (int xx = int(ex_lo); xx < int(ex_hi); ++xx) {
              const float v = float(e.intensity * cy_cov);
              frame.at(yy, xx) = std::max(frame.at(yy, xx), v);
              if (e.landmark && cy_cov > 0.5) mask.at(yy, xx) = 1.0f;
            }
          }
          track_x = (ex_lo + ex_hi) / 2.0;
          track_y = yc;
          break;
        }
        case ElementKind::vertical_streak: {
          const double xc = element_position(e, f);
          const double x0 = xc - e.thickness / 2.0, x1 = xc + e.thickness / 2.0;
          for (int xx = int(x0); xx <= int(x1) && xx < S; ++xx) {
            if (xx < 0) continue;
            const double cx_cov = cell_coverage(xx, x0, x1);
            if (cx_cov <= 0) continue;
            for (int yy = int(ex_lo); yy < int(ex_hi); ++yy) {
              const float v = float(e.intensity * cx_cov);
              frame.at(yy, xx) = std::max(frame.at(yy, xx), v);
              if (e.landmark && cx_cov > 0.5) mask.at(yy, xx) = 1.0f;
            }
          }
          track_x = xc;
          track_y = (ex_lo + ex_hi) / 2.0;
          break;
        }
        case ElementKind::static_overlay: {
          for (int yy = int(e.y); yy < int(e.y + e.h); ++yy)
            for (int xx = int(e.x); xx < int(e.x + e.w); ++xx) {
              double v = e.intensity;
              if (e.checker && (((xx - int(e.x)) / 4 + (yy - int(e.y)) / 4) & 1)) v *= 0.55;
              frame.at(yy, xx) = std::max(frame.at(yy, xx), float(v));
              if (e.landmark) mask.at(yy, xx) = 1.0f;
            }
          track_x = e.x + e.w / 2.0;
          track_y = e.y + e.h / 2.0;
          break;
        }
        case ElementKind::moving_blob: {
          const double bx = e.cx + (e.amplitude ? e.amplitude * std::sin(2.0 * M_PI * f / e.period) : 0.0);
          const double by = e.cy + (e.amplitude ? e.amplitude * std::cos(2.0 * M_PI * f / e.period) : 0.0);
          const int r = int(3.0 * e.sigma) + 1;
          for (int yy = std::max(0, int(by) - r); yy <= std::min(S - 1, int(by) + r); ++yy)
            for (int xx = std::max(0, int(bx) - r); xx <= std::min(S - 1, int(bx) + r); ++xx) {
              const double d2 = (xx - bx) * (xx - bx) + (yy - by) * (yy - by);
              const float v = float(e.intensity * std::exp(-d2 / (2.0 * e.sigma * e.sigma)));
              frame.at(yy, xx) = std::max(frame.at(yy, xx), v);
              if (e.landmark && v > 0.5f * float(e.intensity)) mask.at(yy, xx) = 1.0f;
            }
          track_x = bx;
          track_y = by;
          break;
        }
      }
      if (e.landmark) g.tracks[track_idx++].emplace_back(track_x, track_y);
    }

    if (scene.speckle > 0) {
      Rng noise(derive_seed(scene.seed, "speckle", uint64_t(f)));
      for (float& v : frame.v)
        v = float(std::clamp(double(v) * (1.0 + scene.speckle * (2.0 * noise.uniform() - 1.0)),
                             0.0, 1.0));
    }
    g.frames.push_back(std::move(frame));
    g.masks.push_back(std::move(mask));
  }
  return g;
}

void write_dataset(const Generated& g, const SceneSpec& scene,
                   const std::filesystem::path& dir, const std::string& video_id,
                   const std::string& class_label) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "masks");
  for (size_t f = 0; f < g.frames.size(); ++f) {
    write_pgm(dir / frame_filename(int(f)), g.frames[f]);
    char mname[32];
    std::snprintf(mname, sizeof(mname), "mask_%06d.pgm", int(f));
    write_pgm(dir / "masks" / mname, g.masks[f]);
  }
  json tracks = json::array();
  for (size_t e = 0; e < g.tracks.size(); ++e) {
    json pts = json::array();
    for (const auto& [x, y] : g.tracks[e]) pts.push_back({x, y});
    tracks.push_back({{"name", g.track_names[e]}, {"points", pts}});
  }
  write_json_file(dir / "tracks.json", tracks);
  json meta = {{"source_id", video_id},
               {"n_frames", int(g.frames.size())},
               {"scene", scene.to_json()}};
  if (!class_label.empty()) meta["class"] = class_label;
  write_json_file(dir / "meta.json", meta);
}

double oracle_score(const std::vector<std::vector<std::pair<double, double>>>& tracks,
                    const std::vector<std::vector<std::pair<double, double>>>& keypoints_px) {
  if (tracks.empty()) return 0.0;
  double total = 0;
  size_t count = 0;
  for (const auto& track : tracks) {
    if (track.size() != keypoints_px.size())
      throw data_error("oracle_score: track and keypoint frame counts differ");
    for (size_t f = 0; f < track.size(); ++f) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [kx, ky] : keypoints_px[f])
        best = std::min(best, std::hypot(kx - track[f].first, ky - track[f].second));
      total += best;
      ++count;
    }
  }
  return total / double(count);
}

}  // namespace ust::synth
