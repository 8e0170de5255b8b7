#pragma once

#include <cstdint>

#include "zsfuse/bytes.hpp"

namespace zsfuse {

/// Decoded 8-bit RGB raster, row-major, tightly packed.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3

  std::uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

Image decode_image(const Bytes& encoded);  // throws ImageDecode
Bytes encode_png(const Image& image);
Image resize_bilinear(const Image& image, int width, int height);

// Fill [x0, x1) x [y0, y1), clipped to image bounds.
void fill_rect(Image& image, int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g,
               std::uint8_t b);

}  // namespace zsfuse
