#include "millie/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "millie/rng.hpp"

namespace millie {

namespace {

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out.flush()) throw IoError("write failed for '" + path + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DimensionError("roc_auc got " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(labels.size()) + " labels");
  std::int64_t n_pos = 0, n_neg = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("roc_auc labels must be 0 or 1, got " + std::to_string(l));
    (l ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0)
    throw UndefinedMetricError("roc_auc needs both classes, got " + std::to_string(n_pos) +
                               " positives and " + std::to_string(n_neg) + " negatives");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  // walk unique scores descending; each group moves the staircase one step
  // and contributes its tie credit to the exact pair count
  std::int64_t tp = 0, fp = 0;
  std::int64_t num2 = 0;  // 2*#(s+ > s-) + #(s+ == s-)
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::int64_t pos_at = 0, neg_at = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos_at : neg_at) += 1;
      ++j;
    }
    // negatives strictly below this score: all not yet consumed
    const std::int64_t neg_below = n_neg - fp - neg_at;
    num2 += pos_at * (2 * neg_below + neg_at);
    tp += pos_at;
    fp += neg_at;
    roc.points.push_back({scores[order[i]], static_cast<double>(fp) / static_cast<double>(n_neg),
                          static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }
  roc.auc_num = num2;
  roc.auc_den = 2 * n_pos * n_neg;
  roc.auc = static_cast<double>(roc.auc_num) / static_cast<double>(roc.auc_den);
  return roc;
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

double ConfusionMatrix::accuracy() const {
  const std::int64_t n = total();
  if (n == 0) throw UndefinedMetricError("accuracy of an empty confusion matrix");
  std::int64_t diag = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) diag += at(static_cast<int>(c), static_cast<int>(c));
  return static_cast<double>(diag) / static_cast<double>(n);
}

ConfusionMatrix confusion(const std::vector<std::string>& preds,
                          const std::vector<std::string>& truth,
                          const std::vector<std::string>& classes) {
  if (preds.size() != truth.size())
    throw DimensionError("confusion got " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(truth.size()) + " truths");
  if (classes.empty()) throw ConfigError("confusion needs a nonempty class list");
  std::unordered_map<std::string, int> index;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (!index.emplace(classes[c], static_cast<int>(c)).second)
      throw ConfigError("duplicate class name '" + classes[c] + "'");
  }
  ConfusionMatrix m;
  m.classes = classes;
  m.counts.assign(classes.size() * classes.size(), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto t = index.find(truth[i]);
    if (t == index.end()) throw DataError("unknown truth label '" + truth[i] + "'");
    const auto p = index.find(preds[i]);
    if (p == index.end()) throw DataError("unknown predicted label '" + preds[i] + "'");
    m.counts[static_cast<std::size_t>(t->second) * classes.size() +
             static_cast<std::size_t>(p->second)] += 1;
  }
  return m;
}

CvSplit kfold(const std::vector<std::string>& labels, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold needs k >= 2, got " + std::to_string(k));
  if (labels.empty()) throw ConfigError("kfold on an empty sample list");

  // classes keyed by first appearance so the split is order-stable
  std::vector<std::string> class_order;
  std::unordered_map<std::string, std::vector<int>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, fresh] = members.try_emplace(labels[i]);
    if (fresh) class_order.push_back(labels[i]);
    it->second.push_back(static_cast<int>(i));
  }

  CvSplit split;
  split.k = k;
  split.fold.assign(labels.size(), -1);
  for (std::size_t c = 0; c < class_order.size(); ++c) {
    std::vector<int>& idx = members[class_order[c]];
    if (static_cast<int>(idx.size()) < k)
      throw ConfigError("class '" + class_order[c] + "' has " + std::to_string(idx.size()) +
                        " samples, fewer than k=" + std::to_string(k));
    Rng rng = Rng::derive(seed, {fnv1a64("kfold"), static_cast<std::uint64_t>(c)});
    rng.shuffle(idx);
    for (std::size_t p = 0; p < idx.size(); ++p)
      split.fold[static_cast<std::size_t>(idx[p])] = static_cast<int>(p % static_cast<std::size_t>(k));
  }
  return split;
}

Aggregate aggregate_cv(const std::vector<double>& per_fold) {
  if (per_fold.size() < 2)
    throw ConfigError("aggregate_cv needs >= 2 folds, got " + std::to_string(per_fold.size()));
  Aggregate a;
  for (double v : per_fold) a.mean += v;
  a.mean /= static_cast<double>(per_fold.size());
  double ss = 0.0;
  for (double v : per_fold) ss += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(ss / static_cast<double>(per_fold.size()));
  return a;
}

std::string format_aggregate(const Aggregate& a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f +/- %.2g", a.mean, a.stddev);
  return buf;
}

PcaProjection pca_project(const std::vector<std::vector<double>>& vectors, int dims) {
  const std::size_t n = vectors.size();
  if (dims < 1) throw ConfigError("pca dims must be >= 1, got " + std::to_string(dims));
  if (n < static_cast<std::size_t>(dims) + 1)
    throw ConfigError("pca needs at least dims+1 vectors, got " + std::to_string(n));
  const std::size_t d = vectors[0].size();
  if (static_cast<std::size_t>(dims) > d)
    throw ConfigError("pca dims " + std::to_string(dims) + " exceeds vector length " +
                      std::to_string(d));
  for (const auto& v : vectors)
    if (v.size() != d)
      throw DimensionError("pca vectors must share a length, got " + std::to_string(v.size()) +
                           " and " + std::to_string(d));

  PcaProjection out;
  out.mean.assign(d, 0.0);
  for (const auto& v : vectors)
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += v[j];
  for (double& m : out.mean) m /= static_cast<double>(n);

  // population covariance, deflated in place as axes are extracted
  std::vector<double> cov(d * d, 0.0);
  for (const auto& v : vectors)
    for (std::size_t r = 0; r < d; ++r) {
      const double xr = v[r] - out.mean[r];
      for (std::size_t c = r; c < d; ++c) cov[r * d + c] += xr * (v[c] - out.mean[c]);
    }
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = r; c < d; ++c) {
      cov[r * d + c] /= static_cast<double>(n);
      cov[c * d + r] = cov[r * d + c];
    }

  double total_var = 0.0;
  for (std::size_t j = 0; j < d; ++j) total_var += cov[j * d + j];
  if (!(total_var > 0.0)) throw DegenerateInputError("pca on zero-variance data");

  auto orthogonalize = [&](std::vector<double>& v) {
    for (const auto& axis : out.axes) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += v[j] * axis[j];
      for (std::size_t j = 0; j < d; ++j) v[j] -= dot * axis[j];
    }
  };
  auto norm = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };

  for (int a = 0; a < dims; ++a) {
    double remaining = 0.0;
    for (std::size_t j = 0; j < d; ++j) remaining += cov[j * d + j];

    std::vector<double> v(d, 0.0);
    double lambda = 0.0;
    if (remaining > total_var * 1e-14) {
      // start at the dominant diagonal entry, orthogonal to found axes
      std::size_t j0 = 0;
      for (std::size_t j = 1; j < d; ++j)
        if (cov[j * d + j] > cov[j0 * d + j0]) j0 = j;
      v[j0] = 1.0;
      orthogonalize(v);
      if (norm(v) < 1e-9) std::fill(v.begin(), v.end(), 1.0);
      double vn = norm(v);
      for (double& x : v) x /= vn;

      std::vector<double> next(d);
      for (int it = 0; it < 20000; ++it) {
        for (std::size_t r = 0; r < d; ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) s += cov[r * d + c] * v[c];
          next[r] = s;
        }
        orthogonalize(next);
        const double nn = norm(next);
        if (nn < total_var * 1e-16) break;  // spectrum exhausted
        for (double& x : next) x /= nn;
        double delta = 0.0;
        for (std::size_t j = 0; j < d; ++j) delta = std::max(delta, std::abs(next[j] - v[j]));
        v.swap(next);
        if (delta < 1e-14) break;
      }
      for (std::size_t r = 0; r < d; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += cov[r * d + c] * v[c];
        lambda += v[r] * s;
      }
      lambda = std::max(lambda, 0.0);
    } else {
      // flat remainder: deterministic orthogonal completion, zero variance
      for (std::size_t j = 0; j < d && norm(v) < 0.5; ++j) {
        std::fill(v.begin(), v.end(), 0.0);
        v[j] = 1.0;
        orthogonalize(v);
        const double vn = norm(v);
        if (vn > 1e-6)
          for (double& x : v) x /= vn;
        else
          std::fill(v.begin(), v.end(), 0.0);
      }
    }

    // sign rule: first nonzero component positive
    for (std::size_t j = 0; j < d; ++j) {
      if (std::abs(v[j]) > 1e-12) {
        if (v[j] < 0.0)
          for (double& x : v) x = -x;
        break;
      }
    }
    out.axes.push_back(v);
    out.explained.push_back(lambda / total_var);

    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) cov[r * d + c] -= lambda * v[r] * v[c];
  }

  out.coords.assign(n, std::vector<double>(static_cast<std::size_t>(dims), 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < dims; ++a) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        s += (vectors[i][j] - out.mean[j]) * out.axes[static_cast<std::size_t>(a)][j];
      out.coords[i][static_cast<std::size_t>(a)] = s;
    }
  return out;
}

double silhouette(const std::vector<std::vector<double>>& points, const std::vector<int>& labels) {
  if (points.size() != labels.size())
    throw DimensionError("silhouette got " + std::to_string(points.size()) + " points for " +
                         std::to_string(labels.size()) + " labels");
  std::vector<int> classes;
  for (int l : labels)
    if (std::find(classes.begin(), classes.end(), l) == classes.end()) classes.push_back(l);
  if (classes.size() < 2) throw UndefinedMetricError("silhouette needs >= 2 clusters");

  const std::size_t n = points.size();
  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t j = 0; j < points[a].size(); ++j) {
      const double dd = points[a][j] - points[b][j];
      s += dd * dd;
    }
    return std::sqrt(s);
  };

  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double own_sum = 0.0;
    std::size_t own_count = 0;
    double best_other = std::numeric_limits<double>::infinity();
    for (int c : classes) {
      if (c == labels[i]) continue;
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (labels[j] == c) {
          sum += dist(i, j);
          ++count;
        }
      if (count > 0) best_other = std::min(best_other, sum / static_cast<double>(count));
    }
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) {
        own_sum += dist(i, j);
        ++own_count;
      }
    if (own_count == 0) continue;  // singleton clusters contribute 0
    const double a = own_sum / static_cast<double>(own_count);
    const double b = best_other;
    const double m = std::max(a, b);
    if (m > 0.0) acc += (b - a) / m;
  }
  return acc / static_cast<double>(n);
}

void write_roc_csv(const RocCurve& roc, const std::string& path) {
  std::string text = "threshold,fpr,tpr\n";
  for (const auto& p : roc.points) {
    text += std::isinf(p.threshold) ? "inf" : fmt(p.threshold);
    text += "," + fmt(p.fpr) + "," + fmt(p.tpr) + "\n";
  }
  write_text_file(path, text);
}

void write_pca_csv(const PcaProjection& pca, const std::vector<std::string>& ids,
                   const std::vector<std::string>& labels, const std::string& path) {
  if (ids.size() != pca.coords.size() || labels.size() != pca.coords.size())
    throw DimensionError("pca csv needs one id and label per projected point");
  std::string text = "id";
  for (std::size_t a = 0; a < pca.axes.size(); ++a) text += ",pc" + std::to_string(a + 1);
  text += ",label\n";
  for (std::size_t i = 0; i < pca.coords.size(); ++i) {
    text += ids[i];
    for (double c : pca.coords[i]) text += "," + fmt(c);
    text += "," + labels[i] + "\n";
  }
  write_text_file(path, text);
}

void write_pca_svg(const PcaProjection& pca, const std::vector<std::string>& labels,
                   const std::string& path) {
  if (labels.size() != pca.coords.size())
    throw DimensionError("pca svg needs one label per projected point");
  if (pca.axes.size() < 2) throw ConfigError("pca svg needs a 2-D projection");

  static const char* kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44",
                                   "#66ccee", "#aa3377", "#bbbbbb", "#222222"};
  std::vector<std::string> classes;
  for (const auto& l : labels)
    if (std::find(classes.begin(), classes.end(), l) == classes.end()) classes.push_back(l);

  double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
  for (std::size_t i = 0; i < pca.coords.size(); ++i) {
    lo_x = std::min(lo_x, pca.coords[i][0]);
    hi_x = std::max(hi_x, pca.coords[i][0]);
    lo_y = std::min(lo_y, pca.coords[i][1]);
    hi_y = std::max(hi_y, pca.coords[i][1]);
  }
  const double span_x = std::max(hi_x - lo_x, 1e-9);
  const double span_y = std::max(hi_y - lo_y, 1e-9);
  const double W = 640, H = 480, margin = 40;

  char buf[256];
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
                    "viewBox=\"0 0 640 480\">\n<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < pca.coords.size(); ++i) {
    const double px = margin + (pca.coords[i][0] - lo_x) / span_x * (W - 2 * margin);
    const double py = H - margin - (pca.coords[i][1] - lo_y) / span_y * (H - 2 * margin);
    const std::size_t c =
        static_cast<std::size_t>(std::find(classes.begin(), classes.end(), labels[i]) -
                                 classes.begin());
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                  px, py, kPalette[c % 8]);
    svg += buf;
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.0f\" cy=\"%.0f\" r=\"4\" fill=\"%s\"/>"
                  "<text x=\"%.0f\" y=\"%.0f\" font-size=\"12\" font-family=\"sans-serif\">%s</text>\n",
                  W - 150.0, 20.0 + 16.0 * static_cast<double>(c), kPalette[c % 8], W - 140.0,
                  24.0 + 16.0 * static_cast<double>(c), classes[c].c_str());
    svg += buf;
  }
  svg += "</svg>\n";
  write_text_file(path, svg);
}

}  // namespace millie
