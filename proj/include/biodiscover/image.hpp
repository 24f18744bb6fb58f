#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace biodiscover {

// Interleaved 8-bit RGB, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // width * height * 3

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool empty() const { return rgb.empty(); }

  std::array<double, 3> channel_means() const {
    std::array<double, 3> sum{0.0, 0.0, 0.0};
    const std::size_t n = static_cast<std::size_t>(width) * height;
    for (std::size_t i = 0; i < n; ++i) {
      sum[0] += rgb[i * 3 + 0];
      sum[1] += rgb[i * 3 + 1];
      sum[2] += rgb[i * 3 + 2];
    }
    if (n > 0) {
      sum[0] /= static_cast<double>(n);
      sum[1] /= static_cast<double>(n);
      sum[2] /= static_cast<double>(n);
    }
    return sum;
  }
};

// Binary mask, one byte per pixel (0 or 1).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return bits.empty(); }
};

// Float image in [0, 1], interleaved RGB. Classifier input resolution.
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  FloatImage() = default;
  FloatImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.f) {}

  float& at(int x, int y, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

// Inclusive-exclusive pixel rectangle: x in [x0, x1), y in [y0, y1).
struct Bbox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

}  // namespace biodiscover
