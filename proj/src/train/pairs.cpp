#include "ust/train/pairs.hpp"

#include <algorithm>
#include <iostream>

#include "ust/core/pgm.hpp"
#include "ust/core/rng.hpp"

namespace ust::train {

namespace {

bool is_video_dir(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir / frame_filename(0));
}

VideoInfo read_video(const std::filesystem::path& dir) {
  VideoInfo v;
  v.dir = dir;
  v.id = dir.filename().string();
  v.n_frames = int(list_frames(dir).size());
  const auto meta_path = dir / "meta.json";
  if (std::filesystem::exists(meta_path)) {
    const json meta = read_json_file(meta_path);
    v.class_label = meta.value("class", std::string());
    if (meta.contains("source_id")) v.id = meta.at("source_id").get<std::string>();
  }
  return v;
}

}  // namespace

DatasetManifest DatasetManifest::scan(const std::filesystem::path& root) {
  DatasetManifest m;
  if (!std::filesystem::is_directory(root))
    throw data_error("dataset: not a directory: " + root.string());
  if (is_video_dir(root)) {
    m.videos.push_back(read_video(root));
    return m;
  }
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory() && is_video_dir(e.path())) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) m.videos.push_back(read_video(d));
  if (m.videos.empty())
    throw data_error("dataset: no video directories with frame_*.pgm under " + root.string());
  return m;
}

int DatasetManifest::video_index(const std::string& id) const {
  for (size_t i = 0; i < videos.size(); ++i)
    if (videos[i].id == id) return int(i);
  throw data_error("dataset: unknown video id \"" + id + "\"");
}

namespace {

struct SourcePool {
  std::vector<PairIndex> sources;  // t_plus_i unset; carries the range end
  std::vector<int> range_end;      // exclusive frame bound per source
};

// stride-10 sources inside [lo, hi) that still admit a gap_min offset;
// the stride grid is anchored at frame 0 regardless of the range start
void add_sources(SourcePool& pool, int video, int lo, int hi, int gap_min) {
  const int first = ((lo + 9) / 10) * 10;
  for (int t = first; t + gap_min < hi; t += 10) {
    pool.sources.push_back({video, t, -1});
    pool.range_end.push_back(hi);
  }
}

std::vector<PairIndex> draw(const SourcePool& pool, int n, Rng& rng, int gap_min, int gap_max,
                            const char* split_name) {
  std::vector<PairIndex> out;
  if (pool.sources.empty())
    throw data_error(std::string("sample_pairs: no eligible source frames for the ") +
                     split_name + " split");
  std::vector<size_t> order(pool.sources.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const bool with_replacement = size_t(n) > order.size();
  if (with_replacement)
    std::cerr << "warning: " << split_name << " pool has " << order.size()
              << " distinct sources for " << n << " requested pairs; sampling with replacement\n";
  for (int i = 0; i < n; ++i) {
    const size_t pick = with_replacement ? size_t(rng.uniform_int(0, int64_t(order.size()) - 1))
                                         : order[size_t(i)];
    PairIndex p = pool.sources[pick];
    const int hi = pool.range_end[pick];
    const int max_gap = std::min(gap_max, hi - 1 - p.t);
    p.t_plus_i = p.t + int(rng.uniform_int(gap_min, max_gap));
    out.push_back(p);
  }
  return out;
}

}  // namespace

PairSampling sample_pairs(const DatasetManifest& manifest, int n_train, int n_val,
                          uint64_t seed, int gap_min, int gap_max) {
  if (gap_min < 1 || gap_max < gap_min) throw data_error("sample_pairs: bad gap range");
  std::string too_short;
  for (const auto& v : manifest.videos)
    if (v.n_frames < 11) too_short += (too_short.empty() ? "" : ", ") + v.id;
  if (!too_short.empty())
    throw data_error("sample_pairs: videos with fewer than 11 frames: " + too_short);

  SourcePool train_pool, val_pool;
  Rng rng(derive_seed(seed, "pairs"));

  if (manifest.videos.size() >= 2) {
    std::vector<int> order(manifest.videos.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    rng.shuffle(order);
    // 2:1 split by video, clamped so both pools get at least one video
    const size_t n_train_videos =
        std::clamp<size_t>((order.size() * 2 + 2) / 3, 1, order.size() - 1);
    for (size_t i = 0; i < order.size(); ++i) {
      const int vi = order[i];
      const int n = manifest.videos[size_t(vi)].n_frames;
      add_sources(i < n_train_videos ? train_pool : val_pool, vi, 0, n, gap_min);
    }
  } else {
    const int n = manifest.videos[0].n_frames;
    const int split = (n * 2) / 3;
    add_sources(train_pool, 0, 0, split, gap_min);
    add_sources(val_pool, 0, split, n, gap_min);
  }

  PairSampling s;
  s.train_pairs = draw(train_pool, n_train, rng, gap_min, gap_max, "train");
  s.val_pairs = draw(val_pool, n_val, rng, gap_min, gap_max, "val");
  return s;
}

}  // namespace ust::train
