#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "millie/errors.hpp"

namespace millie {

struct RocPoint {
  double threshold;  // classify positive when score >= threshold
  double fpr;
  double tpr;
};

// auc_num / auc_den is the exact Mann-Whitney statistic as a rational:
// auc_den = 2 * n_pos * n_neg, auc_num = 2 * #(s+ > s-) + #(s+ == s-).
// `auc` is that fraction rounded once to double.
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
  std::int64_t auc_num = 0;
  std::int64_t auc_den = 0;
};

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::int64_t> counts;  // row = truth, col = prediction

  std::int64_t at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * classes.size() +
                  static_cast<std::size_t>(pred)];
  }
  std::int64_t total() const;
  double accuracy() const;  // trace / total; empty matrix -> UndefinedMetricError
};

ConfusionMatrix confusion(const std::vector<std::string>& preds,
                          const std::vector<std::string>& truth,
                          const std::vector<std::string>& classes);

struct CvSplit {
  int k = 0;
  std::vector<int> fold;  // parallel to the input sample order
};

// Stratified: seeded shuffle within each class, then round-robin over folds.
CvSplit kfold(const std::vector<std::string>& labels, int k, std::uint64_t seed);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

Aggregate aggregate_cv(const std::vector<double>& per_fold);
std::string format_aggregate(const Aggregate& a);  // "0.99 +/- 0.0082"

struct PcaProjection {
  std::vector<double> mean;                 // [D]
  std::vector<std::vector<double>> axes;    // dims rows, each [D], orthonormal
  std::vector<std::vector<double>> coords;  // [N][dims]
  std::vector<double> explained;            // variance ratios, nonincreasing
};

// Iterated power method with deflation on the sample covariance. Sign rule:
// the first nonzero component of every axis is positive.
PcaProjection pca_project(const std::vector<std::vector<double>>& vectors, int dims = 2);

// Mean silhouette over all points (squared-distance-free, plain Euclidean).
double silhouette(const std::vector<std::vector<double>>& points,
                  const std::vector<int>& labels);

void write_roc_csv(const RocCurve& roc, const std::string& path);
void write_pca_csv(const PcaProjection& pca, const std::vector<std::string>& ids,
                   const std::vector<std::string>& labels, const std::string& path);
void write_pca_svg(const PcaProjection& pca, const std::vector<std::string>& labels,
                   const std::string& path);

}  // namespace millie
