#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "millie/image.hpp"
#include "millie/imageio.hpp"
#include "millie/rng.hpp"
#include "millie/segmentation.hpp"

using namespace millie;

namespace {

RgbImage random_image(Rng& rng, int w, int h) {
  RgbImage img(w, h);
  for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

void draw_disk(RgbImage& img, int cy, int cx, int radius, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
  for (int y = std::max(0, cy - radius); y <= std::min(img.height - 1, cy + radius); ++y)
    for (int x = std::max(0, cx - radius); x <= std::min(img.width - 1, cx + radius); ++x) {
      const int dy = y - cy, dx = x - cx;
      if (dy * dy + dx * dx <= radius * radius) {
        img.at(y, x, 0) = r;
        img.at(y, x, 1) = g;
        img.at(y, x, 2) = b;
      }
    }
}

void draw_disk_mask(BinaryMask& mask, int cy, int cx, int radius) {
  for (int y = std::max(0, cy - radius); y <= std::min(mask.height - 1, cy + radius); ++y)
    for (int x = std::max(0, cx - radius); x <= std::min(mask.width - 1, cx + radius); ++x) {
      const int dy = y - cy, dx = x - cx;
      if (dy * dy + dx * dx <= radius * radius) mask.at(y, x) = 1;
    }
}

// slow exhaustive nearest-background search
std::int64_t brute_distance_sq(const BinaryMask& mask, int y, int x) {
  std::int64_t best = std::numeric_limits<std::int64_t>::max() / 4;
  for (int by = 0; by < mask.height; ++by)
    for (int bx = 0; bx < mask.width; ++bx) {
      if (mask.at(by, bx)) continue;
      const std::int64_t dy = y - by, dx = x - bx;
      best = std::min(best, dy * dy + dx * dx);
    }
  return best;
}

// independent long-double Otsu: exhaustive argmax of between-class variance
int brute_otsu_bin(const std::vector<float>& channel, int bins) {
  std::vector<long long> hist(static_cast<std::size_t>(bins), 0);
  for (float v : channel) {
    int b = static_cast<int>(static_cast<double>(v) * bins);
    if (b >= bins) b = bins - 1;
    ++hist[static_cast<std::size_t>(b)];
  }
  const long double total = static_cast<long double>(channel.size());
  long double grand = 0;
  for (int b = 0; b < bins; ++b) grand += static_cast<long double>(hist[static_cast<std::size_t>(b)]) * b;
  int best_bin = 0;
  long double best = -1;
  long double n0 = 0, s0 = 0;
  for (int b = 0; b + 1 < bins; ++b) {
    n0 += static_cast<long double>(hist[static_cast<std::size_t>(b)]);
    s0 += static_cast<long double>(hist[static_cast<std::size_t>(b)]) * b;
    const long double n1 = total - n0;
    if (n0 == 0 || n1 == 0) {
      if (best < 0) {
        best = 0;
        best_bin = b;
      }
      continue;
    }
    const long double mu0 = s0 / n0, mu1 = (grand - s0) / n1;
    const long double v = n0 * n1 * (mu0 - mu1) * (mu0 - mu1);
    if (v > best) {
      best = v;
      best_bin = b;
    }
  }
  return best_bin;
}

// reflection oracle written the modular way, independent of the library's
// iterative fold
int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  int m = ((i % period) + period) % period;
  return m < n ? m : period - m;
}

}  // namespace

TEST_CASE("rgb_to_hsv handles primaries and grays") {
  RgbImage img(3, 1);
  img.at(0, 0, 0) = 255;  // pure red
  img.at(0, 1, 0) = img.at(0, 1, 1) = img.at(0, 1, 2) = 128;  // gray
  img.at(0, 2, 1) = 255;  // pure green
  const HsvImage hsv = rgb_to_hsv(img);
  CHECK(hsv.hue[0] == doctest::Approx(0.0));
  CHECK(hsv.sat[0] == doctest::Approx(1.0));
  CHECK(hsv.val[0] == doctest::Approx(1.0));
  CHECK(hsv.sat[1] == doctest::Approx(0.0));
  CHECK(hsv.val[1] == doctest::Approx(128.0 / 255.0).epsilon(1e-6));
  CHECK(hsv.hue[2] == doctest::Approx(120.0));

  // black: S defined as 0
  RgbImage black(1, 1);
  const HsvImage hb = rgb_to_hsv(black);
  CHECK(hb.sat[0] == 0.0f);
  CHECK(hb.val[0] == 0.0f);
}

TEST_CASE("hsv round-trip reproduces bytes within 1/255") {
  Rng rng = Rng::derive(21, {0});
  RgbImage img = random_image(rng, 1000, 1);
  const HsvImage hsv = rgb_to_hsv(img);
  const RgbImage back = hsv_to_rgb(hsv);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const int diff = std::abs(static_cast<int>(img.pixels[i]) - static_cast<int>(back.pixels[i]));
    CHECK(diff <= 1);
  }
}

TEST_CASE("otsu picks the lowest tied bin on a two-level image") {
  std::vector<float> channel;
  for (int i = 0; i < 50; ++i) channel.push_back(0.0f);
  for (int i = 0; i < 50; ++i) channel.push_back(1.0f);
  const double thr = otsu_threshold(channel, 256);
  CHECK(thr == 1.0 / 256.0);
  const BinaryMask mask = threshold_above(channel, 100, 1, thr);
  for (int i = 0; i < 50; ++i) CHECK(mask.data[static_cast<std::size_t>(i)] == 0);
  for (int i = 50; i < 100; ++i) CHECK(mask.data[static_cast<std::size_t>(i)] == 1);
}

TEST_CASE("otsu equals the exhaustive brute-force maximizer") {
  Rng rng = Rng::derive(22, {0});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> channel;
    const int n = 200 + static_cast<int>(rng.below(800));
    const int mode = trial % 3;
    for (int i = 0; i < n; ++i) {
      double v;
      if (mode == 0) {
        v = rng.uniform();
      } else if (mode == 1) {  // bimodal
        v = rng.coin() ? 0.25 + 0.1 * rng.gaussian() : 0.75 + 0.1 * rng.gaussian();
      } else {  // coarse quantized, encourages ties
        v = static_cast<double>(rng.below(8)) / 8.0;
      }
      channel.push_back(static_cast<float>(std::clamp(v, 0.0, 1.0)));
    }
    const double thr = otsu_threshold(channel, 256);
    const int expect_bin = brute_otsu_bin(channel, 256);
    CHECK(thr == doctest::Approx((expect_bin + 1) / 256.0));
  }
}

TEST_CASE("otsu separates two well-separated clusters") {
  Rng rng = Rng::derive(23, {0});
  std::vector<float> channel;
  for (int i = 0; i < 500; ++i)
    channel.push_back(static_cast<float>(std::clamp(0.2 + 0.03 * rng.gaussian(), 0.0, 1.0)));
  for (int i = 0; i < 500; ++i)
    channel.push_back(static_cast<float>(std::clamp(0.8 + 0.03 * rng.gaussian(), 0.0, 1.0)));
  // exact tie-breaking lands the cut at the left edge of the empty gap
  const double thr = otsu_threshold(channel, 256);
  CHECK(thr > 0.25);
  CHECK(thr < 0.75);
  int above = 0;
  for (float v : channel)
    if (v > thr) ++above;
  CHECK(above == 500);  // the clusters separate exactly
}

TEST_CASE("otsu rejects degenerate input") {
  std::vector<float> constant(100, 0.5f);
  CHECK_THROWS_AS(otsu_threshold(constant, 256), DegenerateInputError);
  CHECK_THROWS_AS(otsu_threshold({}, 256), DegenerateInputError);
  CHECK_THROWS_AS(otsu_threshold({0.5f, 1.5f}, 256), DataError);
}

TEST_CASE("opening removes specks and preserves large solids") {
  BinaryMask speck(20, 20);
  speck.at(10, 10) = 1;
  const BinaryMask opened = binary_opening(speck, 2);
  CHECK(opened.count() == 0);

  BinaryMask square(100, 100);
  for (int y = 25; y < 75; ++y)
    for (int x = 25; x < 75; ++x) square.at(y, x) = 1;
  const BinaryMask kept = binary_opening(square, 2);
  CHECK(kept.data == square.data);
}

TEST_CASE("opening is idempotent and anti-extensive") {
  Rng rng = Rng::derive(24, {0});
  for (int trial = 0; trial < 100; ++trial) {
    BinaryMask mask(48, 48);
    for (auto& v : mask.data) v = rng.uniform() < 0.45 ? 1 : 0;
    const int radius = 1 + static_cast<int>(rng.below(3));
    const BinaryMask once = binary_opening(mask, radius);
    const BinaryMask twice = binary_opening(once, radius);
    CHECK(once.data == twice.data);
    for (std::size_t i = 0; i < mask.data.size(); ++i) CHECK(once.data[i] <= mask.data[i]);
  }
}

TEST_CASE("distance transform matches brute force") {
  Rng rng = Rng::derive(25, {0});
  for (int trial = 0; trial < 5; ++trial) {
    BinaryMask mask(24, 18);
    for (auto& v : mask.data) v = rng.uniform() < 0.7 ? 1 : 0;
    const auto dist = distance_transform_squared(mask);
    for (int y = 0; y < mask.height; ++y)
      for (int x = 0; x < mask.width; ++x) {
        const std::int64_t expect = mask.at(y, x) ? brute_distance_sq(mask, y, x) : 0;
        CHECK(dist[static_cast<std::size_t>(y) * mask.width + x] == expect);
      }
  }
}

TEST_CASE("watershed labels a single disk with one label") {
  BinaryMask mask(100, 100);
  draw_disk_mask(mask, 50, 50, 20);
  const auto labels = watershed_split(mask, 20);
  std::set<std::int32_t> seen;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mask.data[i]) {
      CHECK(labels[i] != 0);
      seen.insert(labels[i]);
    } else {
      CHECK(labels[i] == 0);
    }
  }
  CHECK(seen.size() == 1);
}

TEST_CASE("watershed splits two disks joined by a neck") {
  BinaryMask mask(100, 64);
  draw_disk_mask(mask, 32, 30, 15);
  draw_disk_mask(mask, 32, 70, 15);
  for (int y = 30; y < 34; ++y)  // 4-px-tall bridge
    for (int x = 30; x <= 70; ++x) mask.at(y, x) = 1;

  const auto labels = watershed_split(mask, 20);
  std::set<std::int32_t> seen;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (mask.data[i]) seen.insert(labels[i]);
  CHECK(seen.size() == 2);
  const std::int32_t left = labels[static_cast<std::size_t>(32) * 100 + 30];
  const std::int32_t right = labels[static_cast<std::size_t>(32) * 100 + 70];
  CHECK(left != 0);
  CHECK(right != 0);
  CHECK(left != right);
}

TEST_CASE("watershed on disjoint disks equals connected components") {
  BinaryMask mask(120, 80);
  draw_disk_mask(mask, 30, 30, 12);
  draw_disk_mask(mask, 50, 90, 12);
  const auto labels = watershed_split(mask, 20);
  // each disk uniformly one label, labels distinct, background zero
  std::set<std::int32_t> left_labels, right_labels;
  for (int y = 0; y < 80; ++y)
    for (int x = 0; x < 120; ++x) {
      const std::int32_t l = labels[static_cast<std::size_t>(y) * 120 + x];
      if (!mask.at(y, x)) {
        CHECK(l == 0);
        continue;
      }
      CHECK(l != 0);
      (x < 60 ? left_labels : right_labels).insert(l);
    }
  CHECK(left_labels.size() == 1);
  CHECK(right_labels.size() == 1);
  CHECK(*left_labels.begin() != *right_labels.begin());
}

TEST_CASE("watershed partitions arbitrary foregrounds") {
  Rng rng = Rng::derive(26, {0});
  BinaryMask mask(60, 60);
  for (int i = 0; i < 6; ++i)
    draw_disk_mask(mask, 8 + static_cast<int>(rng.below(44)), 8 + static_cast<int>(rng.below(44)),
                   4 + static_cast<int>(rng.below(8)));
  const auto labels = watershed_split(mask, 10);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mask.data[i]) {
      CHECK(labels[i] > 0);
    } else {
      CHECK(labels[i] == 0);
    }
  }

  BinaryMask empty(10, 10);
  const auto none = watershed_split(empty, 5);
  for (auto l : none) CHECK(l == 0);

  BinaryMask full(10, 10);
  for (auto& v : full.data) v = 1;
  const auto all = watershed_split(full, 5);
  for (auto l : all) CHECK(l == 1);
}

TEST_CASE("filter_blobs applies the area floor and sorts by centroid") {
  // labels: a 3x3 square (area 9) at rows 10-12, cols 20-22 and a 2x2
  // square (area 4) at rows 2-3, cols 2-3
  const int w = 30, h = 20;
  std::vector<std::int32_t> labels(static_cast<std::size_t>(w) * h, 0);
  for (int y = 10; y <= 12; ++y)
    for (int x = 20; x <= 22; ++x) labels[static_cast<std::size_t>(y) * w + x] = 1;
  for (int y = 2; y <= 3; ++y)
    for (int x = 2; x <= 3; ++x) labels[static_cast<std::size_t>(y) * w + x] = 2;

  auto blobs = filter_blobs(labels, w, h, 5);
  REQUIRE(blobs.size() == 1);  // area 4 is below the floor of 5
  CHECK(blobs[0].area == 9);
  CHECK(blobs[0].centroid_row == doctest::Approx(11.0));
  CHECK(blobs[0].centroid_col == doctest::Approx(21.0));

  auto both = filter_blobs(labels, w, h, 4);  // boundary inclusive
  REQUIRE(both.size() == 2);
  CHECK(both[0].centroid_row == doctest::Approx(2.5));  // sorted by centroid row
  CHECK(both[1].centroid_row == doctest::Approx(11.0));

  auto none = filter_blobs(labels, w, h, 10);
  CHECK(none.empty());
}

TEST_CASE("crop_patch takes interior crops verbatim") {
  Rng rng = Rng::derive(27, {0});
  RgbImage img = random_image(rng, 400, 400);
  const PatchImage patch = crop_patch(img, 200.0, 200.0, "f");
  CHECK(patch.image.width == 200);
  CHECK(patch.image.height == 200);
  for (int y = 0; y < 200; ++y)
    for (int x = 0; x < 200; ++x)
      for (int ch = 0; ch < 3; ++ch) CHECK(patch.image.at(y, x, ch) == img.at(100 + y, 100 + x, ch));
}

TEST_CASE("crop_patch reflects at borders per the index-mirror oracle") {
  RgbImage grad(150, 120);
  for (int y = 0; y < 120; ++y)
    for (int x = 0; x < 150; ++x) {
      grad.at(y, x, 0) = static_cast<std::uint8_t>((y + 2 * x) % 256);
      grad.at(y, x, 1) = static_cast<std::uint8_t>((3 * y + x) % 256);
      grad.at(y, x, 2) = static_cast<std::uint8_t>((y * x) % 256);
    }
  const PatchImage patch = crop_patch(grad, 0.0, 0.0, "f");
  CHECK(patch.image.width == 200);
  CHECK(patch.image.height == 200);
  for (int y = 0; y < 200; ++y)
    for (int x = 0; x < 200; ++x) {
      const int sy = mirror_index(y - 100, 120);
      const int sx = mirror_index(x - 100, 150);
      for (int ch = 0; ch < 3; ++ch) CHECK(patch.image.at(y, x, ch) == grad.at(sy, sx, ch));
    }

  // 1x1 image: everything reflects onto the single pixel
  RgbImage tiny(1, 1);
  tiny.at(0, 0, 1) = 77;
  const PatchImage tp = crop_patch(tiny, 0.0, 0.0, "t");
  for (int y = 0; y < 200; ++y)
    for (int x = 0; x < 200; ++x) CHECK(tp.image.at(y, x, 1) == 77);
}

TEST_CASE("segment_field returns empty on degenerate fields") {
  RgbImage white(64, 64);
  std::fill(white.pixels.begin(), white.pixels.end(), 255);
  SegmentationParams params;
  CHECK(segment_field(white, params, "w").empty());
}

TEST_CASE("segment_field finds well-separated stained disks") {
  RgbImage field(512, 512);
  std::fill(field.pixels.begin(), field.pixels.end(), 245);
  std::vector<std::pair<double, double>> centers;
  for (int i = 0; i < 10; ++i) {
    const int cy = 60 + 130 * (i / 4) + 15 * (i % 3);
    const int cx = 60 + 130 * (i % 4) + 10 * (i % 2);
    centers.push_back({cy, cx});
    draw_disk(field, cy, cx, 22, 140, 60, 170);  // stained purple
  }
  SegmentationParams params;
  const auto patches = segment_field(field, params, "f");
  REQUIRE(patches.size() == 10);
  for (const auto& p : patches) {
    CHECK(p.image.width == 200);
    CHECK(p.image.height == 200);
    double best = 1e18;
    for (const auto& [cy, cx] : centers) {
      const double d = std::hypot(p.centroid_row - cy, p.centroid_col - cx);
      best = std::min(best, d);
    }
    CHECK(best <= 3.0);
  }

  // determinism: byte-identical on a second run
  const auto again = segment_field(field, params, "f");
  REQUIRE(again.size() == patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i)
    CHECK(again[i].image.pixels == patches[i].image.pixels);
}

TEST_CASE("segment_field drops blobs below the area floor") {
  RgbImage field(256, 256);
  std::fill(field.pixels.begin(), field.pixels.end(), 245);
  draw_disk(field, 128, 128, 10, 140, 60, 170);  // area ~314 < 800
  SegmentationParams params;
  CHECK(segment_field(field, params, "f").empty());
}

TEST_CASE("segmentation_score reproduces the published counts") {
  std::vector<std::pair<double, double>> truth, predicted;
  for (int i = 0; i < 71; ++i) truth.push_back({100.0 * i, 50.0});
  for (int i = 0; i < 67; ++i) predicted.push_back({100.0 * i + 2.0, 51.0});  // near-hits
  for (int i = 0; i < 6; ++i) predicted.push_back({100.0 * i + 50.0, 500.0});  // false alarms
  const MatchScore score = segmentation_score(predicted, truth, 10.0);
  CHECK(score.true_positives == 67);
  CHECK(score.false_positives == 6);
  CHECK(score.false_negatives == 4);
  CHECK(std::round(score.precision * 100) / 100 == doctest::Approx(0.92));
  CHECK(std::round(score.recall * 100) / 100 == doctest::Approx(0.94));
}

TEST_CASE("segmentation_score conventions") {
  std::vector<std::pair<double, double>> pts = {{1, 1}, {5, 5}, {9, 2}};
  const MatchScore perfect = segmentation_score(pts, pts, 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);

  const MatchScore blank = segmentation_score({}, pts, 5.0);
  CHECK(blank.precision == 0.0);
  CHECK(blank.recall == 0.0);

  const MatchScore both_empty = segmentation_score({}, {}, 5.0);
  CHECK(both_empty.precision == 1.0);
  CHECK(both_empty.recall == 1.0);

  // greedy one-to-one: one prediction cannot claim two truths
  const MatchScore squeeze = segmentation_score({{0, 0}}, {{0, 1}, {0, 2}}, 5.0);
  CHECK(squeeze.true_positives == 1);
  CHECK(squeeze.false_negatives == 1);
}

TEST_CASE("png round-trip is lossless") {
  Rng rng = Rng::derive(28, {0});
  for (const auto [w, h] : {std::pair{1, 1}, {7, 3}, {64, 64}, {33, 17}}) {
    const RgbImage img = random_image(rng, w, h);
    const auto bytes = encode_png(img);
    const RgbImage back = decode_png(bytes);
    CHECK(back.width == w);
    CHECK(back.height == h);
    CHECK(back.pixels == img.pixels);
  }
}

TEST_CASE("png decoder handles gray and all filter types") {
  // hand-assembled 8-bit grayscale PNG, one row per filter type 0..4
  const int w = 6, h = 5;
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = static_cast<std::uint8_t>(17 * i + 3);

  std::vector<std::uint8_t> raw;
  for (int y = 0; y < h; ++y) {
    const std::uint8_t filter = static_cast<std::uint8_t>(y);
    raw.push_back(filter);
    for (int x = 0; x < w; ++x) {
      const int cur = gray[static_cast<std::size_t>(y) * w + x];
      const int a = x > 0 ? gray[static_cast<std::size_t>(y) * w + x - 1] : 0;
      const int b = y > 0 ? gray[static_cast<std::size_t>(y - 1) * w + x] : 0;
      const int c = (x > 0 && y > 0) ? gray[static_cast<std::size_t>(y - 1) * w + x - 1] : 0;
      int pred = 0;
      switch (filter) {
        case 0: pred = 0; break;
        case 1: pred = a; break;
        case 2: pred = b; break;
        case 3: pred = (a + b) / 2; break;
        default: {
          const int p = a + b - c;
          const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
        }
      }
      raw.push_back(static_cast<std::uint8_t>((cur - pred) & 0xff));
    }
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  REQUIRE(compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) ==
          Z_OK);
  compressed.resize(bound);

  std::vector<std::uint8_t> png = {137, 80, 78, 71, 13, 10, 26, 10};
  auto chunk = [&](const char* type, const std::vector<std::uint8_t>& payload) {
    const std::uint32_t len = static_cast<std::uint32_t>(payload.size());
    for (int s = 24; s >= 0; s -= 8) png.push_back(static_cast<std::uint8_t>(len >> s));
    const std::size_t start = png.size();
    png.insert(png.end(), type, type + 4);
    png.insert(png.end(), payload.begin(), payload.end());
    const uLong crc = crc32(0L, png.data() + start, static_cast<uInt>(png.size() - start));
    for (int s = 24; s >= 0; s -= 8) png.push_back(static_cast<std::uint8_t>(crc >> s));
  };
  std::vector<std::uint8_t> ihdr = {0, 0, 0, 6, 0, 0, 0, 5, 8, 0, 0, 0, 0};  // 6x5 gray
  chunk("IHDR", ihdr);
  chunk("IDAT", compressed);
  chunk("IEND", {});

  const RgbImage img = decode_png(png);
  CHECK(img.width == w);
  CHECK(img.height == h);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    CHECK(img.pixels[i * 3 + 0] == gray[i]);
    CHECK(img.pixels[i * 3 + 1] == gray[i]);
    CHECK(img.pixels[i * 3 + 2] == gray[i]);
  }
}

TEST_CASE("png decoder rejects corruption") {
  Rng rng = Rng::derive(29, {0});
  const RgbImage img = random_image(rng, 16, 16);
  auto bytes = encode_png(img);

  auto flipped = bytes;
  flipped[45] ^= 0xff;  // inside IDAT payload
  CHECK_THROWS_AS(decode_png(flipped), IntegrityError);

  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  CHECK_THROWS_AS(decode_png(truncated), DataError);

  std::vector<std::uint8_t> garbage = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK_THROWS_AS(decode_png(garbage), DataError);
}

TEST_CASE("bmp round-trip is lossless including odd widths") {
  Rng rng = Rng::derive(30, {0});
  for (const auto [w, h] : {std::pair{1, 1}, {3, 2}, {5, 7}, {32, 8}}) {
    const RgbImage img = random_image(rng, w, h);
    const auto bytes = encode_bmp(img);
    const RgbImage back = decode_bmp(bytes);
    CHECK(back.width == w);
    CHECK(back.height == h);
    CHECK(back.pixels == img.pixels);
  }
}

TEST_CASE("bmp decoder handles top-down rows") {
  RgbImage img(2, 2);
  img.at(0, 0, 0) = 10;
  img.at(0, 1, 0) = 20;
  img.at(1, 0, 0) = 30;
  img.at(1, 1, 0) = 40;
  auto bytes = encode_bmp(img);
  // flip the height sign and reorder rows to make a top-down file
  const std::int32_t neg = -2;
  std::memcpy(bytes.data() + 22, &neg, 4);
  std::vector<std::uint8_t> row0(bytes.begin() + 54, bytes.begin() + 54 + 8);
  std::vector<std::uint8_t> row1(bytes.begin() + 62, bytes.begin() + 70);
  std::copy(row1.begin(), row1.end(), bytes.begin() + 54);
  std::copy(row0.begin(), row0.end(), bytes.begin() + 62);
  const RgbImage back = decode_bmp(bytes);
  CHECK(back.at(0, 0, 0) == 10);
  CHECK(back.at(1, 1, 0) == 40);
}

TEST_CASE("load_image sniffs the container from magic bytes") {
  Rng rng = Rng::derive(31, {0});
  const RgbImage img = random_image(rng, 9, 4);
  const std::string dir = "/tmp/millie_imaging_test";
  std::filesystem::create_directories(dir);
  save_png(img, dir + "/a.bmp");  // deliberately misleading extension
  const RgbImage loaded = load_image(dir + "/a.bmp");
  CHECK(loaded.pixels == img.pixels);
  save_bmp(img, dir + "/b.png");
  CHECK(load_image(dir + "/b.png").pixels == img.pixels);
  CHECK_THROWS_AS(load_image(dir + "/missing.png"), IoError);
}
