#include "ust/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <thread>

#include "ust/core/pgm.hpp"
#include "ust/core/rng.hpp"
#include "ust/nn/adam.hpp"
#include "ust/nn/tensor_io.hpp"
#include "ust/transporter/checkpoint.hpp"

namespace ust::train {

json TrainConfig::to_json() const {
  return json{{"epochs", epochs},
              {"batch_size", batch_size},
              {"lr", lr},
              {"lr_decay", lr_decay},
              {"lr_decay_every", lr_decay_every},
              {"pairs_train", pairs_train},
              {"pairs_val", pairs_val},
              {"frame_gap_min", frame_gap_min},
              {"frame_gap_max", frame_gap_max},
              {"seed", seed},
              {"model", model.to_json()},
              {"rtfpm", rtfpm.to_json()}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  reject_unknown_keys(j, {"epochs", "batch_size", "lr", "lr_decay", "lr_decay_every",
                          "pairs_train", "pairs_val", "frame_gap_min", "frame_gap_max", "seed",
                          "model", "rtfpm"},
                      "train config");
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.lr_decay_every = j.value("lr_decay_every", c.lr_decay_every);
  c.pairs_train = j.value("pairs_train", c.pairs_train);
  c.pairs_val = j.value("pairs_val", c.pairs_val);
  c.frame_gap_min = j.value("frame_gap_min", c.frame_gap_min);
  c.frame_gap_max = j.value("frame_gap_max", c.frame_gap_max);
  c.seed = j.value("seed", c.seed);
  if (j.contains("model")) c.model = transporter::ModelConfig::from_json(j.at("model"));
  if (j.contains("rtfpm")) c.rtfpm = fpm::FpmConfig::from_json(j.at("rtfpm"));
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 2 || pairs_train < 1 || pairs_val < 1)
    throw data_error("train config: epochs/pairs must be positive, batch_size >= 2");
  if (lr <= 0 || lr_decay <= 0 || lr_decay > 1 || lr_decay_every < 1)
    throw data_error("train config: lr must be positive and lr_decay in (0,1]");
  if (frame_gap_min < 1 || frame_gap_max < frame_gap_min)
    throw data_error("train config: bad frame gap range");
  if (model.image_size != rtfpm.image_size)
    throw data_error("train config: model.image_size != rtfpm.image_size");
  model.validate();
  rtfpm.validate();
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  return cfg.lr * std::pow(cfg.lr_decay, double(epoch / cfg.lr_decay_every));
}

FpmCache::FpmCache(std::filesystem::path root, fpm::FpmConfig config)
    : root_(std::move(root)), config_(std::move(config)) {
  config_.validate();
  dir_ = root_ / config_.hash();
}

std::filesystem::path FpmCache::frame_path(const std::string& video_id, int frame) const {
  std::string name = frame_filename(frame);
  name.replace(name.size() - 4, 4, ".t32");
  return dir_ / video_id / name;
}

int FpmCache::ensure(const DatasetManifest& manifest, int workers) const {
  namespace fs = std::filesystem;
  struct Job {
    const VideoInfo* video;
    int frame;
  };
  std::vector<Job> jobs;
  for (const auto& v : manifest.videos) {
    fs::create_directories(dir_ / v.id);
    for (int f = 0; f < v.n_frames; ++f)
      if (!fs::exists(frame_path(v.id, f))) jobs.push_back({&v, f});
  }
  if (!jobs.empty()) {
    const int S = config_.image_size;
    auto work = [&](size_t begin, size_t end) {
      for (size_t i = begin; i < end; ++i) {
        const Job& job = jobs[i];
        Image frame = read_pgm(job.video->dir / frame_filename(job.frame));
        auto map = fpm::compute(frame, config_);
        const auto path = frame_path(job.video->id, job.frame);
        const auto tmp = path.string() + ".tmp";
        nn::write_t32(tmp, {10, S, S}, map.channels);
        fs::rename(tmp, path);
      }
    };
    const int n_workers = std::max(1, std::min<int>(workers, int(jobs.size())));
    if (n_workers == 1) {
      work(0, jobs.size());
    } else {
      std::vector<std::thread> pool;
      const size_t chunk = (jobs.size() + n_workers - 1) / n_workers;
      for (int w = 0; w < n_workers; ++w) {
        const size_t b = size_t(w) * chunk;
        if (b >= jobs.size()) break;
        pool.emplace_back(work, b, std::min(jobs.size(), b + chunk));
      }
      for (auto& t : pool) t.join();
    }
  }
  json videos = json::object();
  for (const auto& v : manifest.videos) videos[v.id] = v.n_frames;
  write_json_file(dir_ / "manifest.json",
                  json{{"config", config_.to_json()}, {"hash", config_.hash()},
                       {"videos", videos}});
  return int(jobs.size());
}

std::vector<float> FpmCache::load(const VideoInfo& video, int frame) const {
  auto t = nn::read_t32(frame_path(video.id, frame));
  const int S = config_.image_size;
  if (t.shape != std::vector<int>{10, S, S})
    throw data_error("fpm cache: unexpected tensor shape in " +
                     frame_path(video.id, frame).string());
  return std::move(t.data);
}

namespace {

using Clock = std::chrono::steady_clock;

double wall_ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

nn::Tensor<float> assemble_batch(const FpmCache& cache, const DatasetManifest& manifest,
                                 const std::vector<PairIndex>& pairs, size_t begin, size_t end,
                                 bool target) {
  const int S = cache.config().image_size;
  const int B = int(end - begin);
  auto t = nn::Tensor<float>::zeros({B, 10, S, S});
  const size_t per = size_t(10) * S * S;
  for (size_t i = begin; i < end; ++i) {
    const PairIndex& p = pairs[i];
    const auto data =
        cache.load(manifest.videos[size_t(p.video)], target ? p.t_plus_i : p.t);
    std::copy(data.begin(), data.end(), t.raw_value().begin() + (i - begin) * per);
  }
  return t;
}

void log_line(std::ostream* log, int epoch, const char* split, double loss, double lr,
              double wall_ms) {
  if (!log) return;
  json line = {{"epoch", epoch}, {"split", split}, {"loss", loss}, {"lr", lr},
               {"wall_ms", wall_ms}};
  (*log) << line.dump() << "\n" << std::flush;
}

json dump_batch(const std::vector<PairIndex>& pairs, size_t begin, size_t end,
                const DatasetManifest& manifest) {
  json out = json::array();
  for (size_t i = begin; i < end; ++i)
    out.push_back({{"video", manifest.videos[size_t(pairs[i].video)].id},
                   {"t", pairs[i].t},
                   {"t_plus_i", pairs[i].t_plus_i}});
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest,
                  const std::filesystem::path& out_dir, const FpmCache& cache,
                  std::ostream* log, const std::optional<std::filesystem::path>& resume_from) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (cache.config().hash() != cfg.rtfpm.hash())
    throw data_error("train: cache was built for a different rtfpm config");
  fs::create_directories(out_dir);

  transporter::TransporterModel<float> model(cfg.model, cfg.seed);
  std::vector<nn::Tensor<float>> params = model.parameters();
  nn::AdamState<float> adam;
  adam.init(params);
  int start_epoch = 0;
  if (resume_from) {
    auto loaded = transporter::load_checkpoint(*resume_from);
    transporter::check_architecture(cfg.model, loaded.meta.model_config);
    if (!loaded.meta.has_adam)
      throw data_error("train: checkpoint has no optimizer state, cannot resume");
    model = std::move(loaded.model);
    params = model.parameters();
    adam = std::move(loaded.adam);
    start_epoch = loaded.meta.epoch;
  }

  const PairSampling pairs = sample_pairs(manifest, cfg.pairs_train, cfg.pairs_val, cfg.seed,
                                          cfg.frame_gap_min, cfg.frame_gap_max);

  TrainResult result;
  result.final_checkpoint = out_dir / "final.ustc";
  result.best_checkpoint = out_dir / "best.ustc";
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    adam.lr = float(lr);
    const auto t0 = Clock::now();

    std::vector<PairIndex> order = pairs.train_pairs;
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", uint64_t(epoch)));
    shuffle_rng.shuffle(order);

    double train_loss_sum = 0;
    size_t train_count = 0;
    for (size_t b = 0; b < order.size(); b += size_t(cfg.batch_size)) {
      const size_t e = std::min(order.size(), b + size_t(cfg.batch_size));
      if (e - b < 2) {
        std::cerr << "warning: dropping trailing batch of size " << (e - b)
                  << " (batchnorm needs >= 2)\n";
        break;
      }
      auto fpm_s = assemble_batch(cache, manifest, order, b, e, false);
      auto fpm_t = assemble_batch(cache, manifest, order, b, e, true);
      model.zero_grad();
      try {
        auto [loss, tr] = model.training_forward(fpm_s, fpm_t, true);
        loss.backward();
        train_loss_sum += double(loss.item()) * double(e - b);
        train_count += e - b;
      } catch (const Error& err) {
        if (err.kind() == ErrorKind::numeric) {
          write_json_file(out_dir / "nan_dump.json",
                          json{{"epoch", epoch},
                               {"batch", dump_batch(order, b, e, manifest)},
                               {"error", err.what()}});
          throw numeric_error(std::string(err.what()) + " (offending batch dumped to " +
                              (out_dir / "nan_dump.json").string() + ")");
        }
        throw;
      }
      nn::adam_step(params, adam);
    }
    const double train_loss = train_count ? train_loss_sum / double(train_count) : 0.0;
    log_line(log, epoch, "train", train_loss, lr, wall_ms_since(t0));

    // validation: eval-mode batchnorm, no tape, no parameter updates
    const auto tv = Clock::now();
    double val_loss_sum = 0;
    size_t val_count = 0;
    {
      nn::NoGradGuard off_tape;
      for (size_t b = 0; b < pairs.val_pairs.size(); b += size_t(cfg.batch_size)) {
        const size_t e = std::min(pairs.val_pairs.size(), b + size_t(cfg.batch_size));
        auto fpm_s = assemble_batch(cache, manifest, pairs.val_pairs, b, e, false);
        auto fpm_t = assemble_batch(cache, manifest, pairs.val_pairs, b, e, true);
        auto [loss, tr] = model.training_forward(fpm_s, fpm_t, false);
        val_loss_sum += double(loss.item()) * double(e - b);
        val_count += e - b;
      }
    }
    const double val_loss = val_count ? val_loss_sum / double(val_count) : 0.0;
    log_line(log, epoch, "val", val_loss, lr, wall_ms_since(tv));

    result.history.push_back({epoch, train_loss, val_loss, lr});
    if (val_loss < best_val) {
      best_val = val_loss;
      transporter::save_checkpoint(result.best_checkpoint, model, &adam, epoch + 1, cfg.seed,
                                   cfg.rtfpm.hash());
    }
  }

  transporter::save_checkpoint(result.final_checkpoint, model, &adam, cfg.epochs, cfg.seed,
                               cfg.rtfpm.hash());
  return result;
}

}  // namespace ust::train
