#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "millie/errors.hpp"

namespace millie {

// Row-major 8-bit RGB.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // height*width*3

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h) {
    if (w <= 0 || h <= 0)
      throw DimensionError("image dimensions must be positive, got " + std::to_string(w) + "x" +
                           std::to_string(h));
    pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
  }

  std::uint8_t& at(int row, int col, int ch) {
    return pixels[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
  }
  std::uint8_t at(int row, int col, int ch) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
  }
};

// Planar float HSV: hue in [0,360), saturation and value in [0,1].
struct HsvImage {
  int width = 0;
  int height = 0;
  std::vector<float> hue, sat, val;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h) {
    data.assign(static_cast<std::size_t>(w) * h, 0);
  }
  std::uint8_t& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t at(int row, int col) const {
    return data[static_cast<std::size_t>(row) * width + col];
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
  }
};

inline constexpr int kPatchSide = 200;

// Fixed 200x200 crop around a blob centroid.
struct PatchImage {
  RgbImage image;
  std::string source_id;
  double centroid_row = 0.0;
  double centroid_col = 0.0;
};

// Standard hexcone conversion; S = 0 where the max channel is 0.
HsvImage rgb_to_hsv(const RgbImage& img);
void hsv_to_rgb_pixel(float h, float s, float v, std::uint8_t& r, std::uint8_t& g,
                      std::uint8_t& b);
RgbImage hsv_to_rgb(const HsvImage& img);

}  // namespace millie
