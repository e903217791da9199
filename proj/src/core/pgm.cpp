#include "ust/core/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

namespace ust {

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (std::isspace(c)) {
      c = in.get();
    } else if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF) throw data_error("pgm: truncated header in " + path);
  in.unget();
  int value = 0;
  if (!(in >> value)) throw data_error("pgm: bad header token in " + path);
  return value;
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("pgm: cannot open " + path.string());
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5') throw data_error("pgm: not a P5 file: " + path.string());
  int w = next_header_int(in, path.string());
  int h = next_header_int(in, path.string());
  int maxval = next_header_int(in, path.string());
  if (w <= 0 || h <= 0) throw data_error("pgm: bad dimensions in " + path.string());
  if (maxval <= 0 || maxval > 255)
    throw data_error("pgm: only 8-bit maxval supported in " + path.string());
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> raw(size_t(w) * h);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (in.gcount() != std::streamsize(raw.size()))
    throw data_error("pgm: truncated pixel data in " + path.string());
  Image img(h, w);
  const float inv = 1.0f / float(maxval);
  for (size_t i = 0; i < raw.size(); ++i) img.v[i] = float(raw[i]) * inv;
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("pgm: cannot write " + path.string());
  out << "P5\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    float x = std::clamp(img.v[i], 0.0f, 1.0f);
    raw[i] = static_cast<unsigned char>(std::lround(x * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) throw data_error("pgm: short write to " + path.string());
}

Image read_mask_pgm(const std::filesystem::path& path) {
  Image img = read_pgm(path);
  for (float& x : img.v) x = x > 0.5f ? 1.0f : 0.0f;
  return img;
}

std::string frame_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.pgm", index);
  return buf;
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir))
    throw data_error("not a directory: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && e.path().extension() == ".pgm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace ust
