#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "millie/image.hpp"

namespace millie {

// 8-bit PNG (gray, gray+alpha, palette, RGB, RGBA; non-interlaced) and
// 24-bit uncompressed BMP. Everything is converted to RGB on load.
RgbImage decode_png(const std::vector<std::uint8_t>& bytes);
RgbImage decode_bmp(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const RgbImage& img);
std::vector<std::uint8_t> encode_bmp(const RgbImage& img);

// Sniffs the container from the leading magic bytes.
RgbImage load_image(const std::string& path);
void save_png(const RgbImage& img, const std::string& path);
void save_bmp(const RgbImage& img, const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace millie
