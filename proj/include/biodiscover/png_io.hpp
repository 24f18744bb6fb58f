#pragma once

#include <filesystem>

#include "biodiscover/image.hpp"

namespace biodiscover {

// 8-bit PNG I/O. Reads gray/palette/RGBA inputs as RGB; writes RGB.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

// Masks as 8-bit grayscale PNG, 0 / 255.
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

}  // namespace biodiscover
