#include "prunekit/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <memory>
#include <stdexcept>

namespace prunekit {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image make_image(int width, int height, int channels, std::uint8_t fill) {
  if (width < 1 || height < 1 || (channels != 1 && channels != 3))
    throw std::invalid_argument("invalid image geometry");
  Image img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(width) * height * channels, fill);
  return img;
}

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open PNG: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows;
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize everything to 8-bit gray or RGB.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int color = png_get_color_type(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height *
                    img.channels);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = img.pixels.data() +
              static_cast<std::size_t>(y) * img.width * img.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3)
    throw std::invalid_argument("only gray or RGB images can be written");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot create PNG: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y)
    rows[y] = const_cast<png_bytep>(
        image.pixels.data() +
        static_cast<std::size_t>(y) * image.width * image.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image resize_bilinear(const Image& image, int out_width, int out_height) {
  if (out_width < 1 || out_height < 1)
    throw std::invalid_argument("invalid resize target");
  if (out_width == image.width && out_height == image.height) return image;

  Image out = make_image(out_width, out_height, image.channels);
  const double sx = static_cast<double>(image.width) / out_width;
  const double sy = static_cast<double>(image.height) / out_height;
  for (int oy = 0; oy < out_height; ++oy) {
    const double fy =
        std::clamp((oy + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double dy = fy - y0;
    for (int ox = 0; ox < out_width; ++ox) {
      const double fx =
          std::clamp((ox + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double dx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double v =
            (1 - dy) * ((1 - dx) * image.at(y0, x0, c) + dx * image.at(y0, x1, c)) +
            dy * ((1 - dx) * image.at(y1, x0, c) + dx * image.at(y1, x1, c));
        // round half away from zero (values are non-negative here)
        out.at(oy, ox, c) =
            static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

Image to_gray(const Image& image) {
  if (image.channels == 1) return image;
  Image out = make_image(image.width, image.height, 1);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double v = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) +
                       0.114 * image.at(y, x, 2);
      out.at(y, x, 0) =
          static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  return out;
}

Image crop(const Image& image, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > image.width ||
      y + h > image.height)
    throw std::invalid_argument("crop rectangle outside image");
  Image out = make_image(w, h, image.channels);
  for (int r = 0; r < h; ++r)
    for (int cc = 0; cc < w; ++cc)
      for (int c = 0; c < image.channels; ++c)
        out.at(r, cc, c) = image.at(y + r, x + cc, c);
  return out;
}

std::vector<Region> connected_regions(const Image& mask, int min_area) {
  const int w = mask.width, h = mask.height;
  const auto on = [&](int y, int x) {
    for (int c = 0; c < mask.channels; ++c)
      if (mask.at(y, x, c) != 0) return true;
    return false;
  };
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<Region> regions;

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!on(y, x) || label[static_cast<std::size_t>(y) * w + x] >= 0) continue;
      const int id = static_cast<int>(regions.size());
      Region reg{x, y, 1, 1, 0};
      int min_x = x, max_x = x, min_y = y, max_y = y;
      std::deque<std::pair<int, int>> queue{{y, x}};
      label[static_cast<std::size_t>(y) * w + x] = id;
      while (!queue.empty()) {
        const auto [cy, cx] = queue.front();
        queue.pop_front();
        ++reg.area;
        min_x = std::min(min_x, cx);
        max_x = std::max(max_x, cx);
        min_y = std::min(min_y, cy);
        max_y = std::max(max_y, cy);
        const int ny[4] = {cy - 1, cy + 1, cy, cy};
        const int nx[4] = {cx, cx, cx - 1, cx + 1};
        for (int k = 0; k < 4; ++k) {
          if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
          std::size_t idx = static_cast<std::size_t>(ny[k]) * w + nx[k];
          if (label[idx] < 0 && on(ny[k], nx[k])) {
            label[idx] = id;
            queue.emplace_back(ny[k], nx[k]);
          }
        }
      }
      reg.x = min_x;
      reg.y = min_y;
      reg.w = max_x - min_x + 1;
      reg.h = max_y - min_y + 1;
      regions.push_back(reg);
    }

  std::vector<Region> kept;
  for (const Region& r : regions)
    if (r.area >= min_area) kept.push_back(r);
  std::sort(kept.begin(), kept.end(), [](const Region& a, const Region& b) {
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  return kept;
}

}  // namespace prunekit
