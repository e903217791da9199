#include "ust/transporter/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace ust::transporter {

namespace {

struct Entry {
  std::string name;
  size_t offset = 0;
  size_t count = 0;  // float count
};

void append_floats(std::vector<char>& payload, const float* data, size_t count) {
  const size_t bytes = count * sizeof(float);
  const size_t at = payload.size();
  payload.resize(at + bytes);
  std::memcpy(payload.data() + at, data, bytes);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, TransporterModel<float>& model,
                     const nn::AdamState<float>* adam, int epoch, uint64_t seed,
                     const std::string& rtfpm_hash) {
  std::vector<char> payload;
  json entries = json::array();
  auto add = [&](const std::string& name, const float* data, size_t count) {
    entries.push_back({{"name", name}, {"offset", payload.size()}, {"count", count}});
    append_floats(payload, data, count);
  };

  auto params = model.named_parameters();
  for (auto& [name, t] : params) add(name, t.value().data(), t.value().size());
  for (auto& [name, buf] : model.named_buffers()) add("buffer." + name, buf->data(), buf->size());
  if (adam) {
    for (size_t i = 0; i < params.size(); ++i) {
      add("adam.m." + params[i].first, adam->m[i].data(), adam->m[i].size());
      add("adam.v." + params[i].first, adam->v[i].data(), adam->v[i].size());
    }
  }

  json manifest = {{"format", "ustc-v1"},
                   {"model", model.config().to_json()},
                   {"epoch", epoch},
                   {"seed", seed},
                   {"rtfpm_hash", rtfpm_hash},
                   {"adam_step", adam ? json(adam->step) : json(nullptr)},
                   {"entries", entries}};
  const std::string ms = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("checkpoint: cannot write " + path.string());
  out.write("USTC", 4);
  const uint32_t len = uint32_t(ms.size());
  const unsigned char lenb[4] = {uint8_t(len), uint8_t(len >> 8), uint8_t(len >> 16),
                                 uint8_t(len >> 24)};
  out.write(reinterpret_cast<const char*>(lenb), 4);
  out.write(ms.data(), std::streamsize(ms.size()));
  out.write(payload.data(), std::streamsize(payload.size()));
  if (!out) throw data_error("checkpoint: short write to " + path.string());
}

namespace {

struct RawCheckpoint {
  json manifest;
  std::vector<char> payload;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("checkpoint: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "USTC")
    throw data_error("checkpoint: bad magic in " + path.string());
  unsigned char lenb[4];
  in.read(reinterpret_cast<char*>(lenb), 4);
  const uint32_t len = uint32_t(lenb[0]) | uint32_t(lenb[1]) << 8 | uint32_t(lenb[2]) << 16 |
                       uint32_t(lenb[3]) << 24;
  std::string ms(len, '\0');
  in.read(ms.data(), std::streamsize(len));
  if (in.gcount() != std::streamsize(len))
    throw data_error("checkpoint: truncated manifest in " + path.string());
  RawCheckpoint raw;
  try {
    raw.manifest = json::parse(ms);
  } catch (const json::parse_error& e) {
    throw data_error("checkpoint: bad manifest in " + path.string() + ": " + e.what());
  }
  raw.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return raw;
}

void copy_entry(const RawCheckpoint& raw, const json& entry, float* dst, size_t expect) {
  const size_t offset = entry.at("offset").get<size_t>();
  const size_t count = entry.at("count").get<size_t>();
  if (count != expect)
    throw data_error("checkpoint: entry \"" + entry.at("name").get<std::string>() +
                     "\" holds " + std::to_string(count) + " values, expected " +
                     std::to_string(expect));
  if (offset + count * sizeof(float) > raw.payload.size())
    throw data_error("checkpoint: entry out of payload bounds");
  std::memcpy(dst, raw.payload.data() + offset, count * sizeof(float));
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  RawCheckpoint raw = read_raw(path);
  CheckpointMeta meta;
  meta.model_config = ModelConfig::from_json(raw.manifest.at("model"));
  meta.epoch = raw.manifest.value("epoch", 0);
  meta.seed = raw.manifest.value("seed", uint64_t(0));
  meta.rtfpm_hash = raw.manifest.value("rtfpm_hash", std::string());
  meta.has_adam = !raw.manifest.at("adam_step").is_null();
  return meta;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  RawCheckpoint raw = read_raw(path);
  LoadedCheckpoint lc;
  lc.meta.model_config = ModelConfig::from_json(raw.manifest.at("model"));
  lc.meta.epoch = raw.manifest.value("epoch", 0);
  lc.meta.seed = raw.manifest.value("seed", uint64_t(0));
  lc.meta.rtfpm_hash = raw.manifest.value("rtfpm_hash", std::string());
  lc.meta.has_adam = !raw.manifest.at("adam_step").is_null();
  lc.model = TransporterModel<float>(lc.meta.model_config, lc.meta.seed);

  std::map<std::string, const json*> table;
  for (const auto& e : raw.manifest.at("entries")) table[e.at("name").get<std::string>()] = &e;
  auto fetch = [&](const std::string& name) -> const json& {
    auto it = table.find(name);
    if (it == table.end()) throw data_error("checkpoint: missing entry \"" + name + "\"");
    return *it->second;
  };

  auto params = lc.model.named_parameters();
  for (auto& [name, t] : params)
    copy_entry(raw, fetch(name), t.raw_value().data(), t.raw_value().size());
  for (auto& [name, buf] : lc.model.named_buffers())
    copy_entry(raw, fetch("buffer." + name), buf->data(), buf->size());

  if (lc.meta.has_adam) {
    std::vector<nn::Tensor<float>> plist;
    for (auto& [name, t] : params) plist.push_back(t);
    lc.adam.init(plist);
    lc.adam.step = raw.manifest.at("adam_step").get<long>();
    for (size_t i = 0; i < params.size(); ++i) {
      copy_entry(raw, fetch("adam.m." + params[i].first), lc.adam.m[i].data(),
                 lc.adam.m[i].size());
      copy_entry(raw, fetch("adam.v." + params[i].first), lc.adam.v[i].data(),
                 lc.adam.v[i].size());
    }
  }
  return lc;
}

void check_architecture(const ModelConfig& expected, const ModelConfig& loaded) {
  std::string diff;
  auto field = [&](const std::string& name, const std::string& a, const std::string& b) {
    if (a != b) diff += "  " + name + ": checkpoint " + b + " vs config " + a + "\n";
  };
  field("k", std::to_string(expected.k), std::to_string(loaded.k));
  field("image_size", std::to_string(expected.image_size), std::to_string(loaded.image_size));
  field("feature_channels", std::to_string(expected.feature_channels),
        std::to_string(loaded.feature_channels));
  field("attention_mode", attention_mode_name(expected.attention),
        attention_mode_name(loaded.attention));
  field("cbam", expected.cbam ? "true" : "false", loaded.cbam ? "true" : "false");
  field("cbam_reduction", std::to_string(expected.cbam_reduction),
        std::to_string(loaded.cbam_reduction));
  if (!diff.empty()) throw data_error("checkpoint architecture mismatch:\n" + diff);
}

}  // namespace ust::transporter
