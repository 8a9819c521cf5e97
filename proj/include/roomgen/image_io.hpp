#pragma once

#include <filesystem>

#include "roomgen/image.hpp"

namespace roomgen {

// 8-bit RGB PNG; values clamped to [0, 1] and rounded.
void write_png(const ImageF& image, const std::filesystem::path& path);

// Single-channel portable float map ("Pf", little-endian, bottom-up rows).
void write_pfm(const ImageF& image, const std::filesystem::path& path);

}  // namespace roomgen
