#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "millie/dataio.hpp"
#include "millie/imageio.hpp"
#include "millie/rng.hpp"
#include "millie/segmentation.hpp"

namespace fs = std::filesystem;

namespace millie {

namespace {

// Cell-class geometry: normals stay small; both abnormal classes are large,
// split by hue and by chromatin speckle. Hue bands leave room for the
// +/-18 degree augmentation jitter between the two abnormal classes.
struct GlyphStyle {
  float hue_lo, hue_hi;
  float sat_lo, sat_hi;
  float val_lo, val_hi;
  double r_lo, r_hi;
  bool speckled;
};

const GlyphStyle kNormalStyle = {265.0f, 285.0f, 0.58f, 0.72f, 0.42f, 0.55f, 17.0, 20.0, false};
const GlyphStyle kClassAStyle = {215.0f, 235.0f, 0.50f, 0.62f, 0.52f, 0.66f, 23.0, 27.0, false};
const GlyphStyle kClassBStyle = {315.0f, 335.0f, 0.58f, 0.70f, 0.48f, 0.62f, 23.0, 27.0, true};

const GlyphStyle& style_for(const std::string& cell_label) {
  if (cell_label == "normal") return kNormalStyle;
  if (cell_label == "class-a") return kClassAStyle;
  return kClassBStyle;
}

constexpr double kMinCenterDist = 62.0;
constexpr double kBorderMargin = 36.0;
constexpr int kSpeckleCell = 6;  // px; coarse enough to survive downscaling

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

void render_background(RgbImage& img, double sigma, Rng& rng) {
  constexpr double base[3] = {247.0, 244.0, 241.0};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double noise = sigma > 0.0 ? rng.gaussian() * sigma : 0.0;
    img.pixels[i] = clamp_byte(base[i % 3] + noise);
  }
}

void render_glyph(RgbImage& img, double cy, double cx, const GlyphStyle& style, Rng& rng) {
  const double r = rng.uniform(style.r_lo, style.r_hi);
  const float hue = static_cast<float>(rng.uniform(style.hue_lo, style.hue_hi));
  const float sat = static_cast<float>(rng.uniform(style.sat_lo, style.sat_hi));
  const float val = static_cast<float>(rng.uniform(style.val_lo, style.val_hi));

  // coarse speckle lattice so the texture is still visible after the
  // 200 -> input_side box resample
  const int lat = static_cast<int>(2.0 * r / kSpeckleCell) + 3;
  std::vector<float> speckle(static_cast<std::size_t>(lat) * lat, 0.0f);
  if (style.speckled)
    for (auto& s : speckle) s = static_cast<float>(rng.uniform(-1.0, 1.0));

  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + r + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + r + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double d = std::hypot(y - cy, x - cx);
      const double alpha = std::clamp(r - d + 0.5, 0.0, 1.0);
      if (alpha <= 0.0) continue;
      float v = val * static_cast<float>(1.0 - 0.12 * (d / r) * (d / r));
      if (style.speckled) {
        const int gy = static_cast<int>((y - cy + r) / kSpeckleCell);
        const int gx = static_cast<int>((x - cx + r) / kSpeckleCell);
        if (gy >= 0 && gy < lat && gx >= 0 && gx < lat)
          v *= 1.0f + 0.30f * speckle[static_cast<std::size_t>(gy) * lat + gx];
      }
      std::uint8_t rr, gg, bb;
      hsv_to_rgb_pixel(hue, sat, std::clamp(v, 0.0f, 1.0f), rr, gg, bb);
      const double fg[3] = {static_cast<double>(rr), static_cast<double>(gg),
                            static_cast<double>(bb)};
      for (int ch = 0; ch < 3; ++ch) {
        std::uint8_t& px = img.at(y, x, ch);
        px = clamp_byte(alpha * fg[ch] + (1.0 - alpha) * px);
      }
    }
  }
}

std::vector<std::pair<double, double>> place_centers(int n, int side, Rng& rng) {
  std::vector<std::pair<double, double>> centers;
  const double lo = kBorderMargin;
  const double hi = side - kBorderMargin;
  if (hi <= lo) throw ConfigError("field_side too small for the border margin");
  int tries = 0;
  const int max_tries = 400 * n + 1000;
  while (static_cast<int>(centers.size()) < n) {
    if (++tries > max_tries)
      throw ConfigError("could not place " + std::to_string(n) + " glyphs " +
                        std::to_string(static_cast<int>(kMinCenterDist)) +
                        " px apart on a " + std::to_string(side) + " px field");
    const double cy = rng.uniform(lo, hi);
    const double cx = rng.uniform(lo, hi);
    bool ok = true;
    for (const auto& [py, px] : centers) {
      if (std::hypot(cy - py, cx - px) < kMinCenterDist) {
        ok = false;
        break;
      }
    }
    if (ok) centers.emplace_back(cy, cx);
  }
  return centers;
}

std::string zero_pad(int v, int width) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%0*d", width, v);
  return buf;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (samples_per_class < 1) throw ConfigError("samples_per_class must be at least 1");
  if (fields_per_sample < 1) throw ConfigError("fields_per_sample must be at least 1");
  if (glyphs_per_field < 1) throw ConfigError("glyphs_per_field must be at least 1");
  if (!(witness_fraction > 0.0) || witness_fraction > 1.0)
    throw ConfigError("witness_fraction must be in (0, 1], got " +
                      std::to_string(witness_fraction));
  if (noise_level < 0.0) throw ConfigError("noise_level must be non-negative");
  if (field_side < 300) throw ConfigError("field_side must be at least 300 px");
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config, const std::string& out_dir) {
  config.validate();
  const fs::path out = fs::path(out_dir).lexically_normal();
  fs::create_directories(out / "fields");
  fs::create_directories(out / "patches");

  SyntheticDataset ds;
  ds.manifest.classes = kSyntheticSampleClasses;
  ds.manifest.note = "synthetic glyph fields, seed " + std::to_string(config.seed);
  ds.cells.cell_classes = kSyntheticCellClasses;

  const int gpf = config.glyphs_per_field;
  const int total_glyphs = gpf * config.fields_per_sample;

  for (std::size_t ci = 0; ci < kSyntheticSampleClasses.size(); ++ci) {
    const std::string& sample_label = kSyntheticSampleClasses[ci];
    const std::string abnormal_label = sample_label == "healthy" ? "" : sample_label;
    for (int si = 0; si < config.samples_per_class; ++si) {
      const std::string sample_id = sample_label + "-" + zero_pad(si + 1, 3);
      Rng sample_rng = Rng::derive(config.seed, {fnv1a64("synth-sample"),
                                                 static_cast<std::uint64_t>(ci),
                                                 static_cast<std::uint64_t>(si)});

      // which glyph slots across the sample's fields carry the witness cells
      std::vector<std::uint8_t> abnormal(static_cast<std::size_t>(total_glyphs), 0);
      if (!abnormal_label.empty()) {
        const int n_abn = std::max<int>(
            1, static_cast<int>(std::lround(config.witness_fraction * total_glyphs)));
        for (int idx : sample_rng.sample_without_replacement(total_glyphs, n_abn))
          abnormal[static_cast<std::size_t>(idx)] = 1;
      }

      Sample sample;
      sample.sample_id = sample_id;
      sample.label = sample_label;
      int glyph_no = 0;

      for (int fi = 0; fi < config.fields_per_sample; ++fi) {
        Rng field_rng = Rng::derive(config.seed, {fnv1a64("synth-field"),
                                                  static_cast<std::uint64_t>(ci),
                                                  static_cast<std::uint64_t>(si),
                                                  static_cast<std::uint64_t>(fi)});
        RgbImage img(config.field_side, config.field_side);
        render_background(img, config.noise_level, field_rng);
        const auto centers = place_centers(gpf, config.field_side, field_rng);

        SyntheticField rec;
        rec.sample_id = sample_id;
        rec.sample_label = sample_label;
        rec.field_path =
            (out / "fields" / (sample_id + "_f" + std::to_string(fi) + ".png")).generic_string();

        for (int gi = 0; gi < gpf; ++gi) {
          const int slot = fi * gpf + gi;
          const std::string cell_label = abnormal[slot] ? abnormal_label : "normal";
          render_glyph(img, centers[gi].first, centers[gi].second, style_for(cell_label),
                       field_rng);
          rec.glyphs.push_back({centers[gi].first, centers[gi].second, cell_label});
        }

        save_png(img, rec.field_path);

        // ground-truth crops, taken after the whole field is rendered so
        // neighbouring cells show up in the patch like they would in a
        // segmented crop
        for (int gi = 0; gi < gpf; ++gi) {
          const std::string patch_name = sample_id + "_g" + zero_pad(glyph_no++, 3) + ".png";
          const std::string patch_path = (out / "patches" / patch_name).generic_string();
          const PatchImage patch =
              crop_patch(img, rec.glyphs[gi].row, rec.glyphs[gi].col, rec.field_path);
          save_png(patch.image, patch_path);
          sample.patch_paths.push_back(patch_path);
          ds.cells.items.push_back({patch_path, rec.glyphs[gi].cell_label, sample_id});
        }

        ds.fields.push_back(std::move(rec));
      }
      ds.manifest.samples.push_back(std::move(sample));
    }
  }

  write_manifest(ds.manifest, (out / "manifest.tsv").generic_string());
  write_cell_annotations(ds.cells, (out / "cells.tsv").generic_string());
  write_fields(ds.fields, (out / "fields.tsv").generic_string());
  return ds;
}

}  // namespace millie
