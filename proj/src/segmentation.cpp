#include "millie/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

#include "millie/errors.hpp"

namespace millie {

namespace {

// Compares a/b vs c/d exactly without overflowing 128-bit intermediates,
// by descending through the continued-fraction expansion.
int cmp_frac(unsigned __int128 a, unsigned __int128 b, unsigned __int128 c, unsigned __int128 d) {
  if (b == 0 && d == 0) return 0;
  if (b == 0) return 1;  // treat x/0 as +inf
  if (d == 0) return -1;
  int sign = 1;
  while (true) {
    const unsigned __int128 qa = a / b;
    const unsigned __int128 qc = c / d;
    if (qa != qc) return qa < qc ? -sign : sign;
    const unsigned __int128 ra = a - qa * b;
    const unsigned __int128 rc = c - qc * d;
    if (ra == 0 && rc == 0) return 0;
    if (ra == 0) return -sign;
    if (rc == 0) return sign;
    // compare ra/b vs rc/d == inverse of b/ra vs d/rc
    a = b;
    b = ra;
    c = d;
    d = rc;
    sign = -sign;
  }
}

// Separable sliding min/max over a (2r+1) box.
void box_filter(const BinaryMask& in, BinaryMask& out, int radius, bool take_min) {
  const int w = in.width, h = in.height;
  BinaryMask tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t acc = take_min ? 1 : 0;
      const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
      if (take_min && (x - radius < 0 || x + radius >= w)) acc = 0;  // outside is background
      for (int i = x0; i <= x1; ++i) {
        const std::uint8_t v = in.at(y, i);
        acc = take_min ? std::min(acc, v) : std::max(acc, v);
      }
      tmp.at(y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t acc = take_min ? 1 : 0;
      const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
      if (take_min && (y - radius < 0 || y + radius >= h)) acc = 0;
      for (int i = y0; i <= y1; ++i) {
        const std::uint8_t v = tmp.at(i, x);
        acc = take_min ? std::min(acc, v) : std::max(acc, v);
      }
      out.at(y, x) = acc;
    }
  }
}

constexpr std::int64_t kFarAway = std::numeric_limits<std::int64_t>::max() / 4;

// 1-D squared distance transform (lower envelope of parabolas).
void edt_1d(const std::vector<std::int64_t>& f, std::vector<std::int64_t>& d, int n,
            std::vector<int>& v, std::vector<double>& z) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[k];
      s = (static_cast<double>(f[q] - f[p]) + static_cast<double>(q) * q -
           static_cast<double>(p) * p) /
          (2.0 * (q - p));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const std::int64_t dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
    if (d[q] > kFarAway) d[q] = kFarAway;
  }
}

struct FloodEntry {
  std::int64_t dist;
  int row, col;
  std::int32_t label;
};

struct FloodOrder {
  // max-heap on distance; ties pop the smallest (row, col) first
  bool operator()(const FloodEntry& a, const FloodEntry& b) const {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.row != b.row) return a.row > b.row;
    return a.col > b.col;
  }
};

}  // namespace

double otsu_threshold(const std::vector<float>& channel, int bins) {
  if (bins < 2) throw ConfigError("otsu needs at least 2 bins, got " + std::to_string(bins));
  if (channel.empty()) throw DegenerateInputError("otsu on an empty channel");

  float lo = channel[0], hi = channel[0];
  for (float v : channel) {
    if (v < 0.0f || v > 1.0f || !std::isfinite(v))
      throw DataError("otsu channel value " + std::to_string(v) + " outside [0,1]");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) throw DegenerateInputError("otsu on a constant channel");

  std::vector<std::int64_t> hist(static_cast<std::size_t>(bins), 0);
  for (float v : channel) {
    int b = static_cast<int>(static_cast<double>(v) * bins);
    if (b >= bins) b = bins - 1;
    ++hist[static_cast<std::size_t>(b)];
  }

  const std::int64_t n_total = static_cast<std::int64_t>(channel.size());
  std::int64_t weighted_total = 0;
  for (int b = 0; b < bins; ++b) weighted_total += hist[static_cast<std::size_t>(b)] * b;

  // Between-class variance for a cut after bin b is proportional to
  // (s0*N - S*n0)^2 / (n0*(N-n0)); compare cuts as exact fractions.
  int best_bin = 0;
  unsigned __int128 best_num = 0;
  unsigned __int128 best_den = 0;  // 0/0 compares as zero variance
  std::int64_t n0 = 0, s0 = 0;
  for (int b = 0; b + 1 < bins; ++b) {
    n0 += hist[static_cast<std::size_t>(b)];
    s0 += hist[static_cast<std::size_t>(b)] * b;
    const std::int64_t n1 = n_total - n0;
    const std::int64_t lever = s0 * n_total - weighted_total * n0;
    const unsigned __int128 mag =
        lever >= 0 ? static_cast<unsigned __int128>(lever)
                   : static_cast<unsigned __int128>(-lever);
    const unsigned __int128 num = mag * mag;
    const unsigned __int128 den =
        static_cast<unsigned __int128>(n0) * static_cast<unsigned __int128>(n1);
    const unsigned __int128 value_num = den == 0 ? 0 : num;
    const unsigned __int128 value_den = den == 0 ? 1 : den;
    if (b == 0) {
      best_num = value_num;
      best_den = value_den;
      continue;
    }
    if (cmp_frac(value_num, value_den, best_num, best_den) > 0) {
      best_num = value_num;
      best_den = value_den;
      best_bin = b;
    }
  }
  return static_cast<double>(best_bin + 1) / static_cast<double>(bins);
}

BinaryMask threshold_above(const std::vector<float>& channel, int width, int height,
                           double threshold) {
  BinaryMask mask(width, height);
  for (std::size_t i = 0; i < channel.size(); ++i)
    mask.data[i] = static_cast<double>(channel[i]) > threshold ? 1 : 0;
  return mask;
}

BinaryMask binary_opening(const BinaryMask& mask, int radius) {
  if (radius < 1) throw ConfigError("opening radius must be >= 1, got " + std::to_string(radius));
  BinaryMask eroded(mask.width, mask.height);
  box_filter(mask, eroded, radius, /*take_min=*/true);
  BinaryMask opened(mask.width, mask.height);
  box_filter(eroded, opened, radius, /*take_min=*/false);
  return opened;
}

std::vector<std::int64_t> distance_transform_squared(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  std::vector<std::int64_t> dist(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = mask.data[i] ? kFarAway : 0;

  const int n_max = std::max(w, h);
  std::vector<std::int64_t> f(static_cast<std::size_t>(n_max)), d(static_cast<std::size_t>(n_max));
  std::vector<int> v(static_cast<std::size_t>(n_max));
  std::vector<double> z(static_cast<std::size_t>(n_max) + 1);

  for (int x = 0; x < w; ++x) {  // columns
    for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = dist[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, h, v, z);
    for (int y = 0; y < h; ++y) dist[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
  }
  for (int y = 0; y < h; ++y) {  // rows
    for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = dist[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, w, v, z);
    for (int x = 0; x < w; ++x) dist[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(x)];
  }
  return dist;
}

std::vector<std::int32_t> watershed_split(const BinaryMask& mask, int min_marker_distance) {
  const int w = mask.width, h = mask.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<std::int32_t> labels(n, 0);
  if (mask.count() == 0) return labels;

  const std::vector<std::int64_t> dist = distance_transform_squared(mask);

  // connected components (8-connectivity), needed so marker suppression
  // cannot starve a separate blob of its only marker
  std::vector<std::int32_t> comp(n, 0);
  std::int32_t n_comp = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!mask.data[idx] || comp[idx] != 0) continue;
      ++n_comp;
      comp[idx] = n_comp;
      stack.push_back({y, x});
      while (!stack.empty()) {
        const auto [cy, cx] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
            if (mask.data[nidx] && comp[nidx] == 0) {
              comp[nidx] = n_comp;
              stack.push_back({ny, nx});
            }
          }
      }
    }
  }

  // regional maxima of the distance transform: a connected plateau counts
  // as one candidate, and only when no plateau pixel touches a strictly
  // greater value (a flat ridge flowing into a peak is not a maximum)
  std::vector<std::tuple<std::int64_t, int, int>> candidates;  // (dist, row, col)
  std::vector<std::uint8_t> visited(n, 0);
  std::vector<std::pair<int, int>> plateau;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!mask.data[idx] || visited[idx]) continue;
      const std::int64_t dv = dist[idx];
      plateau.clear();
      plateau.push_back({y, x});
      visited[idx] = 1;
      bool is_max = true;
      for (std::size_t head = 0; head < plateau.size(); ++head) {
        const auto [cy, cx] = plateau[head];
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
            if (!mask.data[nidx]) continue;
            const std::int64_t nv = dist[nidx];
            if (nv > dv) {
              is_max = false;
            } else if (nv == dv && !visited[nidx]) {
              visited[nidx] = 1;
              plateau.push_back({ny, nx});
            }
          }
      }
      if (is_max) candidates.push_back({dv, y, x});  // (y,x) is the plateau's first pixel
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });

  // greedy suppression within each component
  const std::int64_t min_sep_sq =
      static_cast<std::int64_t>(min_marker_distance) * min_marker_distance;
  std::vector<std::pair<int, int>> markers;
  std::vector<std::vector<std::pair<int, int>>> kept_per_comp(static_cast<std::size_t>(n_comp) + 1);
  for (const auto& [dv, y, x] : candidates) {
    const std::int32_t c = comp[static_cast<std::size_t>(y) * w + x];
    bool ok = true;
    for (const auto& [my, mx] : kept_per_comp[static_cast<std::size_t>(c)]) {
      const std::int64_t dy = y - my, dx = x - mx;
      if (dy * dy + dx * dx < min_sep_sq) {
        ok = false;
        break;
      }
    }
    if (ok) {
      kept_per_comp[static_cast<std::size_t>(c)].push_back({y, x});
      markers.push_back({y, x});
    }
  }
  std::sort(markers.begin(), markers.end());

  // priority flood over negated distance: deepest pixels claimed first
  std::priority_queue<FloodEntry, std::vector<FloodEntry>, FloodOrder> queue;
  std::vector<std::uint8_t> queued(n, 0);
  for (std::size_t m = 0; m < markers.size(); ++m) {
    const auto [y, x] = markers[m];
    const std::size_t idx = static_cast<std::size_t>(y) * w + x;
    queue.push({dist[idx], y, x, static_cast<std::int32_t>(m + 1)});
    queued[idx] = 1;
  }
  while (!queue.empty()) {
    const FloodEntry e = queue.top();
    queue.pop();
    const std::size_t idx = static_cast<std::size_t>(e.row) * w + e.col;
    if (labels[idx] != 0) continue;
    labels[idx] = e.label;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dy == 0 && dx == 0) continue;
        const int ny = e.row + dy, nx = e.col + dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
        if (!mask.data[nidx] || labels[nidx] != 0 || queued[nidx]) continue;
        queue.push({dist[nidx], ny, nx, e.label});
        queued[nidx] = 1;
      }
  }
  return labels;
}

std::vector<Blob> filter_blobs(const std::vector<std::int32_t>& labels, int width, int height,
                               int min_area) {
  if (min_area < 1) throw ConfigError("min_area must be >= 1, got " + std::to_string(min_area));
  std::int32_t max_label = 0;
  for (std::int32_t l : labels) max_label = std::max(max_label, l);
  std::vector<Blob> blobs(static_cast<std::size_t>(max_label) + 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::int32_t l = labels[static_cast<std::size_t>(y) * width + x];
      if (l == 0) continue;
      Blob& b = blobs[static_cast<std::size_t>(l)];
      b.label = l;
      b.pixels.push_back({y, x});
    }
  }
  std::vector<Blob> kept;
  for (auto& b : blobs) {
    if (b.pixels.empty() || static_cast<int>(b.pixels.size()) < min_area) continue;
    b.area = static_cast<int>(b.pixels.size());
    double sr = 0.0, sc = 0.0;
    for (const auto& [r, c] : b.pixels) {
      sr += r;
      sc += c;
    }
    b.centroid_row = sr / b.area;
    b.centroid_col = sc / b.area;
    kept.push_back(std::move(b));
  }
  std::sort(kept.begin(), kept.end(), [](const Blob& a, const Blob& b) {
    if (a.centroid_row != b.centroid_row) return a.centroid_row < b.centroid_row;
    return a.centroid_col < b.centroid_col;
  });
  return kept;
}

int reflect_index(int idx, int extent) {
  if (extent == 1) return 0;
  while (idx < 0 || idx >= extent) {
    if (idx < 0) idx = -idx;
    if (idx >= extent) idx = 2 * extent - 2 - idx;
  }
  return idx;
}

PatchImage crop_patch(const RgbImage& img, double centroid_row, double centroid_col,
                      const std::string& source_id) {
  const int cr = static_cast<int>(std::llround(centroid_row));
  const int cc = static_cast<int>(std::llround(centroid_col));
  PatchImage patch;
  patch.image = RgbImage(kPatchSide, kPatchSide);
  patch.source_id = source_id;
  patch.centroid_row = centroid_row;
  patch.centroid_col = centroid_col;
  const int half = kPatchSide / 2;
  for (int y = 0; y < kPatchSide; ++y) {
    const int sy = reflect_index(cr - half + y, img.height);
    for (int x = 0; x < kPatchSide; ++x) {
      const int sx = reflect_index(cc - half + x, img.width);
      for (int ch = 0; ch < 3; ++ch) patch.image.at(y, x, ch) = img.at(sy, sx, ch);
    }
  }
  return patch;
}

std::vector<PatchImage> segment_field(const RgbImage& img, const SegmentationParams& params,
                                      const std::string& source_id) {
  const HsvImage hsv = rgb_to_hsv(img);
  double threshold;
  try {
    threshold = otsu_threshold(hsv.sat, params.bins);
  } catch (const DegenerateInputError&) {
    return {};  // constant saturation: nothing to segment
  }
  BinaryMask mask = threshold_above(hsv.sat, img.width, img.height, threshold);
  mask = binary_opening(mask, params.opening_radius);
  const auto labels = watershed_split(mask, params.min_marker_distance);
  const auto blobs = filter_blobs(labels, img.width, img.height, params.min_area);
  std::vector<PatchImage> patches;
  patches.reserve(blobs.size());
  for (const Blob& b : blobs)
    patches.push_back(crop_patch(img, b.centroid_row, b.centroid_col, source_id));
  return patches;
}

MatchScore segmentation_score(const std::vector<std::pair<double, double>>& predicted,
                              const std::vector<std::pair<double, double>>& truth,
                              double match_radius) {
  if (match_radius <= 0.0) throw ConfigError("match_radius must be positive");
  struct Pair {
    double dist_sq;
    int pred, truth;
  };
  std::vector<Pair> pairs;
  const double r_sq = match_radius * match_radius;
  for (int p = 0; p < static_cast<int>(predicted.size()); ++p) {
    for (int t = 0; t < static_cast<int>(truth.size()); ++t) {
      const double dr = predicted[static_cast<std::size_t>(p)].first - truth[static_cast<std::size_t>(t)].first;
      const double dc = predicted[static_cast<std::size_t>(p)].second - truth[static_cast<std::size_t>(t)].second;
      const double d = dr * dr + dc * dc;
      if (d <= r_sq) pairs.push_back({d, p, t});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dist_sq != b.dist_sq) return a.dist_sq < b.dist_sq;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.truth < b.truth;
  });
  std::vector<std::uint8_t> pred_used(predicted.size(), 0), truth_used(truth.size(), 0);
  MatchScore score;
  for (const Pair& pr : pairs) {
    if (pred_used[static_cast<std::size_t>(pr.pred)] || truth_used[static_cast<std::size_t>(pr.truth)]) continue;
    pred_used[static_cast<std::size_t>(pr.pred)] = 1;
    truth_used[static_cast<std::size_t>(pr.truth)] = 1;
    ++score.true_positives;
  }
  score.false_positives = static_cast<int>(predicted.size()) - score.true_positives;
  score.false_negatives = static_cast<int>(truth.size()) - score.true_positives;
  score.precision = predicted.empty()
                        ? (truth.empty() ? 1.0 : 0.0)
                        : static_cast<double>(score.true_positives) / static_cast<double>(predicted.size());
  score.recall = truth.empty()
                     ? (predicted.empty() ? 1.0 : 0.0)
                     : static_cast<double>(score.true_positives) / static_cast<double>(truth.size());
  return score;
}

}  // namespace millie
