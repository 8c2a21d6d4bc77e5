#include "millie/image.hpp"

#include <algorithm>
#include <cmath>

namespace millie {

HsvImage rgb_to_hsv(const RgbImage& img) {
  HsvImage out;
  out.width = img.width;
  out.height = img.height;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  out.hue.resize(n);
  out.sat.resize(n);
  out.val.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float r = img.pixels[i * 3 + 0] / 255.0f;
    const float g = img.pixels[i * 3 + 1] / 255.0f;
    const float b = img.pixels[i * 3 + 2] / 255.0f;
    const float mx = std::max({r, g, b});
    const float mn = std::min({r, g, b});
    const float d = mx - mn;
    float h = 0.0f;
    if (d > 0.0f) {
      if (mx == r) {
        h = 60.0f * ((g - b) / d);
      } else if (mx == g) {
        h = 60.0f * ((b - r) / d + 2.0f);
      } else {
        h = 60.0f * ((r - g) / d + 4.0f);
      }
      if (h < 0.0f) h += 360.0f;
      if (h >= 360.0f) h -= 360.0f;
    }
    out.hue[i] = h;
    out.sat[i] = mx == 0.0f ? 0.0f : d / mx;
    out.val[i] = mx;
  }
  return out;
}

void hsv_to_rgb_pixel(float h, float s, float v, std::uint8_t& r, std::uint8_t& g,
                      std::uint8_t& b) {
  const float c = v * s;
  float hh = h / 60.0f;
  if (hh >= 6.0f) hh -= 6.0f;
  if (hh < 0.0f) hh += 6.0f;
  const float x = c * (1.0f - std::abs(std::fmod(hh, 2.0f) - 1.0f));
  float rf = 0, gf = 0, bf = 0;
  switch (static_cast<int>(hh)) {
    case 0: rf = c; gf = x; break;
    case 1: rf = x; gf = c; break;
    case 2: gf = c; bf = x; break;
    case 3: gf = x; bf = c; break;
    case 4: rf = x; bf = c; break;
    default: rf = c; bf = x; break;
  }
  const float m = v - c;
  auto to_byte = [](float f) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(f * 255.0f), 0L, 255L));
  };
  r = to_byte(rf + m);
  g = to_byte(gf + m);
  b = to_byte(bf + m);
}

RgbImage hsv_to_rgb(const HsvImage& img) {
  RgbImage out(img.width, img.height);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < n; ++i) {
    hsv_to_rgb_pixel(img.hue[i], img.sat[i], img.val[i], out.pixels[i * 3 + 0],
                     out.pixels[i * 3 + 1], out.pixels[i * 3 + 2]);
  }
  return out;
}

}  // namespace millie
