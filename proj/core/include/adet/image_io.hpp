#pragma once

#include <filesystem>

#include "adet/synthesis.hpp"
#include "adet/tensor.hpp"

namespace adet {

// 8-bit RGB PNG <-> Image in [0, 1]. Writing quantizes with round-to-nearest.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);

// Single-channel 8- or 16-bit image normalized to [0, 1].
RainMap read_rain_map(const std::filesystem::path& path);
void write_rain_map(const std::filesystem::path& path, const RainMap& map);

// Images round-trip through 8-bit storage; this applies the same quantization in memory.
Image quantize_8bit(const Image& image);

}  // namespace adet
