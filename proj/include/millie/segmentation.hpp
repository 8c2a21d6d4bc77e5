#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "millie/image.hpp"

namespace millie {

struct SegmentationParams {
  int opening_radius = 5;
  int min_marker_distance = 20;
  int min_area = 800;
  int bins = 256;
};

struct Blob {
  int label = 0;
  int area = 0;
  double centroid_row = 0.0;
  double centroid_col = 0.0;
  std::vector<std::pair<int, int>> pixels;  // (row, col), row-major order
};

// Threshold maximizing between-class variance over a binned histogram,
// computed with exact integer arithmetic. Ties go to the lowest qualifying
// bin; the returned threshold is that bin's upper boundary (bin+1)/bins.
// Foreground is everything strictly above the threshold.
double otsu_threshold(const std::vector<float>& channel, int bins = 256);

BinaryMask threshold_above(const std::vector<float>& channel, int width, int height,
                           double threshold);

// Erosion then dilation with a box structuring element of half-width
// `radius` (a disk in the Chebyshev metric).
BinaryMask binary_opening(const BinaryMask& mask, int radius);

// Exact squared Euclidean distance to the nearest background pixel within
// the array. Foreground pixels of an all-foreground mask get a sentinel
// larger than any in-image distance.
std::vector<std::int64_t> distance_transform_squared(const BinaryMask& mask);

// Marker-controlled watershed over the negated distance transform.
// Markers are regional maxima of the distance transform (one candidate per
// plateau), greedily suppressed per connected component so that surviving
// markers are >= min_marker_distance apart; every component keeps at least
// one marker. Background stays 0.
std::vector<std::int32_t> watershed_split(const BinaryMask& mask, int min_marker_distance);

std::vector<Blob> filter_blobs(const std::vector<std::int32_t>& labels, int width, int height,
                               int min_area);

// Mirror an out-of-range index back into [0, extent) by reflecting about
// the border pixels (no edge duplication).
int reflect_index(int idx, int extent);

PatchImage crop_patch(const RgbImage& img, double centroid_row, double centroid_col,
                      const std::string& source_id);

// Full pipeline: HSV -> Otsu on saturation -> opening -> watershed ->
// blob filter -> 200x200 crops. A constant-saturation field yields an
// empty list instead of an error.
std::vector<PatchImage> segment_field(const RgbImage& img, const SegmentationParams& params,
                                      const std::string& source_id);

struct MatchScore {
  double precision = 0.0;
  double recall = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
};

// Greedy one-to-one matching by ascending distance within match_radius.
MatchScore segmentation_score(const std::vector<std::pair<double, double>>& predicted,
                              const std::vector<std::pair<double, double>>& truth,
                              double match_radius);

}  // namespace millie
