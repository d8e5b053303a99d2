#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace murax {

// Decoded 8-bit raster, row-major, 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;

  uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t& at(int y, int x, int c = 0) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

ImageU8 make_image(int width, int height, int channels, uint8_t fill = 0);

// 16-bit PNGs are rejected with a diagnostic; palette/alpha are folded
// down to gray or RGB.
ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

// Collapse RGB to single-channel luminance (identity on gray input).
ImageU8 to_gray(const ImageU8& img);

// [0,1] float plane <-> gray image.
std::vector<float> to_plane(const ImageU8& gray);
ImageU8 from_plane(const std::vector<float>& plane, int width, int height);

}  // namespace murax
