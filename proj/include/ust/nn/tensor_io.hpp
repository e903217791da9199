#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "ust/core/error.hpp"

namespace ust::nn {

// ".t32" tensor file: 4-byte magic "UST1", u32 little-endian header length,
// UTF-8 JSON header {"dtype":"f32","shape":[...],"order":"C"}, then the raw
// little-endian float payload.

struct T32 {
  std::vector<int> shape;
  std::vector<float> data;
};

inline void write_t32(const std::filesystem::path& path, const std::vector<int>& shape,
                      const float* data, size_t count) {
  size_t n = 1;
  for (int d : shape) n *= size_t(d);
  if (n != count) throw data_error("t32: shape/product mismatch writing " + path.string());
  nlohmann::json header = {{"dtype", "f32"}, {"shape", shape}, {"order", "C"}};
  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("t32: cannot write " + path.string());
  out.write("UST1", 4);
  const uint32_t len = uint32_t(hs.size());
  unsigned char lenb[4] = {uint8_t(len), uint8_t(len >> 8), uint8_t(len >> 16), uint8_t(len >> 24)};
  out.write(reinterpret_cast<const char*>(lenb), 4);
  out.write(hs.data(), std::streamsize(hs.size()));
  out.write(reinterpret_cast<const char*>(data), std::streamsize(count * sizeof(float)));
  if (!out) throw data_error("t32: short write to " + path.string());
}

inline void write_t32(const std::filesystem::path& path, const std::vector<int>& shape,
                      const std::vector<float>& data) {
  write_t32(path, shape, data.data(), data.size());
}

inline T32 read_t32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("t32: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "UST1")
    throw data_error("t32: bad magic in " + path.string());
  unsigned char lenb[4];
  in.read(reinterpret_cast<char*>(lenb), 4);
  if (in.gcount() != 4) throw data_error("t32: truncated header length in " + path.string());
  const uint32_t len = uint32_t(lenb[0]) | uint32_t(lenb[1]) << 8 | uint32_t(lenb[2]) << 16 |
                       uint32_t(lenb[3]) << 24;
  std::string hs(len, '\0');
  in.read(hs.data(), std::streamsize(len));
  if (in.gcount() != std::streamsize(len))
    throw data_error("t32: truncated header in " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error("t32: bad JSON header in " + path.string() + ": " + e.what());
  }
  if (header.value("dtype", "") != "f32")
    throw data_error("t32: unsupported dtype in " + path.string());
  if (header.value("order", "") != "C")
    throw data_error("t32: unsupported order in " + path.string());
  T32 t;
  t.shape = header.at("shape").get<std::vector<int>>();
  size_t n = 1;
  for (int d : t.shape) {
    if (d <= 0) throw data_error("t32: non-positive extent in " + path.string());
    n *= size_t(d);
  }
  t.data.resize(n);
  in.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(n * sizeof(float)));
  if (in.gcount() != std::streamsize(n * sizeof(float)))
    throw data_error("t32: truncated payload in " + path.string());
  return t;
}

}  // namespace ust::nn
