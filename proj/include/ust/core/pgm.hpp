#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ust/core/image.hpp"

namespace ust {

// Binary 8-bit PGM (P5). Values map linearly to [0,1].
Image read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image& img);

// Binary mask variant: nonzero pixels become 1.0.
Image read_mask_pgm(const std::filesystem::path& path);

std::string frame_filename(int index);

// Sorted list of frame_NNNNNN.pgm files in a directory.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

}  // namespace ust
