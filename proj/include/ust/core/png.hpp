#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ust {

// Minimal PNG encoder (8-bit RGB, zlib-compressed). Enough for keypoint
// overlay output; not a general-purpose image library.
void write_png_rgb(const std::filesystem::path& path, int h, int w,
                   const std::vector<uint8_t>& rgb);

}  // namespace ust
