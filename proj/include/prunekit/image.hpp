#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prunekit {

// Simple 8-bit raster, 1 (gray) or 3 (RGB) channels, row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;  // height * width * channels

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t byte_size() const { return pixels.size(); }
};

Image make_image(int width, int height, int channels, std::uint8_t fill = 0);

Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& image);

// Bilinear resample; 8-bit values rounded half away from zero. Identity when
// the output size equals the input size.
Image resize_bilinear(const Image& image, int out_width, int out_height);

// Rec. 601 luma; identity on single-channel input.
Image to_gray(const Image& image);

Image crop(const Image& image, int x, int y, int w, int h);

struct Region {
  int x, y, w, h;  // bounding box
  int area;        // pixel count of the component
};

// 4-connected components of the nonzero pixels of a mask (any channel
// nonzero counts), ordered by bounding-box (top, left).
std::vector<Region> connected_regions(const Image& mask, int min_area);

}  // namespace prunekit
