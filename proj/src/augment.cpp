#include "millie/augment.hpp"

#include <algorithm>
#include <cmath>

#include "millie/errors.hpp"

namespace millie {

void AugmentConfig::validate() const {
  if (hue_shift_max < 0.0f) throw ConfigError("hue_shift_max must be >= 0");
  if (noise_sigma_max < 0.0f) throw ConfigError("noise_sigma_max must be >= 0");
  if (!(gamma_lo > 0.0f && gamma_lo <= 1.0f && gamma_hi >= 1.0f))
    throw ConfigError("gamma_range must satisfy 0 < lo <= 1 <= hi, got [" +
                      std::to_string(gamma_lo) + ", " + std::to_string(gamma_hi) + "]");
}

bool AugmentConfig::any_spectral() const {
  return (enable_hue && hue_shift_max > 0.0f) ||
         (enable_gamma && (gamma_lo != 1.0f || gamma_hi != 1.0f)) ||
         (enable_noise && noise_sigma_max > 0.0f);
}

namespace {

// k counterclockwise quarter turns on a square image.
RgbImage rotate_quarter(const RgbImage& in, int k) {
  if (k == 0) return in;
  const int n = in.width;
  RgbImage out(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      int sy = y, sx = x;
      switch (k) {
        case 1: sy = x; sx = n - 1 - y; break;
        case 2: sy = n - 1 - y; sx = n - 1 - x; break;
        default: sy = n - 1 - x; sx = y; break;
      }
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = in.at(sy, sx, ch);
    }
  return out;
}

void flip_horizontal(RgbImage& img) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width / 2; ++x)
      for (int ch = 0; ch < 3; ++ch) std::swap(img.at(y, x, ch), img.at(y, img.width - 1 - x, ch));
}

void flip_vertical(RgbImage& img) {
  for (int y = 0; y < img.height / 2; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int ch = 0; ch < 3; ++ch) std::swap(img.at(y, x, ch), img.at(img.height - 1 - y, x, ch));
}

std::uint8_t clamp_byte(long v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0L, 255L));
}

}  // namespace

PatchImage random_geometric(const PatchImage& patch, Rng& rng) {
  if (patch.image.width != patch.image.height)
    throw DimensionError("quarter-turn rotation needs a square patch, got " +
                         std::to_string(patch.image.width) + "x" +
                         std::to_string(patch.image.height));
  const int k = static_cast<int>(rng.below(4));
  const bool hflip = rng.coin();
  const bool vflip = rng.coin();
  PatchImage out = patch;
  out.image = rotate_quarter(patch.image, k);
  if (hflip) flip_horizontal(out.image);
  if (vflip) flip_vertical(out.image);
  return out;
}

PatchImage random_spectral(const PatchImage& patch, const AugmentConfig& config, Rng& rng) {
  config.validate();
  const bool do_hue = config.enable_hue && config.hue_shift_max > 0.0f;
  const bool do_gamma = config.enable_gamma && (config.gamma_lo != 1.0f || config.gamma_hi != 1.0f);
  const bool do_noise = config.enable_noise && config.noise_sigma_max > 0.0f;

  float hue_shift = 0.0f;
  double gamma = 1.0;
  double sigma = 0.0;
  if (do_hue) hue_shift = static_cast<float>(rng.uniform(-config.hue_shift_max, config.hue_shift_max));
  if (do_gamma) gamma = rng.uniform(config.gamma_lo, config.gamma_hi);
  if (do_noise) sigma = rng.uniform(0.0, config.noise_sigma_max);

  PatchImage out = patch;
  if (do_hue || do_gamma) {
    // value channel is always one of 256 discrete levels, so gamma is a LUT
    float vlut[256];
    for (int i = 0; i < 256; ++i)
      vlut[i] = do_gamma ? static_cast<float>(std::pow(i / 255.0, gamma)) : i / 255.0f;
    const HsvImage hsv = rgb_to_hsv(out.image);
    const std::size_t n = hsv.hue.size();
    for (std::size_t i = 0; i < n; ++i) {
      float h = hsv.hue[i] + hue_shift;
      if (h < 0.0f) h += 360.0f;
      if (h >= 360.0f) h -= 360.0f;
      const int v_byte = static_cast<int>(std::lround(hsv.val[i] * 255.0f));
      hsv_to_rgb_pixel(h, hsv.sat[i], vlut[v_byte], out.image.pixels[i * 3 + 0],
                       out.image.pixels[i * 3 + 1], out.image.pixels[i * 3 + 2]);
    }
  }
  if (do_noise) {
    for (auto& px : out.image.pixels) {
      const double noisy = static_cast<double>(px) + rng.gaussian() * sigma;
      px = clamp_byte(std::lround(noisy));
    }
  }
  return out;
}

PatchImage augment(const PatchImage& patch, const AugmentConfig& config, Rng& rng) {
  config.validate();
  PatchImage out = config.enable_geometric ? random_geometric(patch, rng) : patch;
  if (config.any_spectral()) out = random_spectral(out, config, rng);
  return out;
}

}  // namespace millie
