#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "afrec/tensor.hpp"

namespace afrec {

// Reads an 8-bit PNG (any colour type) as an RGB image scaled to [0, 1].
// Throws DecodeError when the file is missing or not a valid PNG.
Image read_png(const std::filesystem::path& path);

// Writes an RGB image, quantising each value to round(255 * v).
void write_png(const std::filesystem::path& path, const Image& image);

// Writes interleaved 8-bit RGB pixels.
void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& rgb);

}  // namespace afrec
