#include "ust/core/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "ust/core/error.hpp"

namespace ust {

namespace {

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
  put_u32_be(out, uint32_t(payload.size()));
  size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uint32_t crc = crc32(0, out.data() + crc_start, uInt(out.size() - crc_start));
  put_u32_be(out, crc);
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, int h, int w,
                   const std::vector<uint8_t>& rgb) {
  if (rgb.size() != size_t(h) * w * 3) throw data_error("png: pixel buffer size mismatch");

  // raw scanlines with filter byte 0
  std::vector<uint8_t> raw;
  raw.reserve(size_t(h) * (size_t(w) * 3 + 1));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    const uint8_t* row = rgb.data() + size_t(y) * w * 3;
    raw.insert(raw.end(), row, row + size_t(w) * 3);
  }

  uLongf comp_len = compressBound(uLong(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()), 6) != Z_OK)
    throw data_error("png: zlib compression failed");
  comp.resize(comp_len);

  std::vector<uint8_t> file;
  const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  file.insert(file.end(), sig, sig + 8);

  std::vector<uint8_t> ihdr;
  put_u32_be(ihdr, uint32_t(w));
  put_u32_be(ihdr, uint32_t(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  append_chunk(file, "IHDR", ihdr);
  append_chunk(file, "IDAT", comp);
  append_chunk(file, "IEND", {});

  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("png: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(file.data()), std::streamsize(file.size()));
  if (!out) throw data_error("png: short write to " + path.string());
}

}  // namespace ust
