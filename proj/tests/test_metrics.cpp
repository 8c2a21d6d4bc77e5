#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include "millie/metrics.hpp"
#include "millie/rng.hpp"

using namespace millie;

namespace {

// O(n^2) pair-counting oracle: twice the Mann-Whitney numerator, exact
std::int64_t pair_count_num2(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::int64_t num2 = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) num2 += 2;
      else if (scores[i] == scores[j]) num2 += 1;
    }
  }
  return num2;
}

double trapezoid_area(const RocCurve& roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.points.size(); ++i)
    area += (roc.points[i].fpr - roc.points[i - 1].fpr) *
            (roc.points[i].tpr + roc.points[i - 1].tpr) * 0.5;
  return area;
}

// cyclic Jacobi eigensolver on a symmetric matrix, the brute-force oracle
void jacobi_eigen(std::vector<double> a, std::size_t d, std::vector<double>& values,
                  std::vector<std::vector<double>>& vectors) {
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) {
        if (std::abs(a[p * d + q]) < 1e-300) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * a[p * d + q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + p], vkq = v[k * d + q];
          v[k * d + p] = c * vkp - s * vkq;
          v[k * d + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a[x * d + x] > a[y * d + y]; });
  values.clear();
  vectors.clear();
  for (std::size_t Rank = 0; Rank < d; ++Rank) {
    const std::size_t col = order[Rank];
    values.push_back(a[col * d + col]);
    std::vector<double> axis(d);
    for (std::size_t k = 0; k < d; ++k) axis[k] = v[k * d + col];
    vectors.push_back(axis);
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("roc_auc endpoints and separability") {
  const RocCurve perfect = roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  CHECK(perfect.auc == 1.0);
  CHECK(perfect.points.front().fpr == 0.0);
  CHECK(perfect.points.front().tpr == 0.0);
  CHECK(perfect.points.back().fpr == 1.0);
  CHECK(perfect.points.back().tpr == 1.0);

  const RocCurve inverted = roc_auc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0});
  CHECK(inverted.auc == 0.0);

  const RocCurve flat = roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
  CHECK(flat.auc == 0.5);
}

TEST_CASE("roc_auc equals exhaustive pair counting on 100 random sets") {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng = Rng::derive(60, {static_cast<std::uint64_t>(trial)});
    const int n = 20 + static_cast<int>(rng.below(181));
    std::vector<double> scores;
    std::vector<int> labels;
    bool saw_pos = false, saw_neg = false;
    for (int i = 0; i < n; ++i) {
      // coarse levels force plenty of ties
      scores.push_back(static_cast<double>(rng.below(12)) / 11.0);
      const int l = rng.coin() ? 1 : 0;
      labels.push_back(l);
      (l ? saw_pos : saw_neg) = true;
    }
    if (!saw_pos) labels[0] = 1;
    if (!saw_neg) labels[1] = 0;

    const RocCurve roc = roc_auc(scores, labels);
    const std::int64_t expect = pair_count_num2(scores, labels);
    CHECK(roc.auc_num == expect);  // integer-exact
    CHECK(roc.auc ==
          doctest::Approx(static_cast<double>(expect) / static_cast<double>(roc.auc_den))
              .epsilon(1e-15));
    CHECK(std::abs(trapezoid_area(roc) - roc.auc) <= 1e-12);

    // label reversal: exact at the rational level
    std::vector<int> flipped;
    for (int l : labels) flipped.push_back(1 - l);
    const RocCurve rev = roc_auc(scores, flipped);
    CHECK(rev.auc_den == roc.auc_den);
    CHECK(rev.auc_num == roc.auc_den - roc.auc_num);
    CHECK(std::abs(roc.auc + rev.auc - 1.0) <= 1e-15);

    // staircase monotonicity
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
      CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
      CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
    }
  }
}

TEST_CASE("roc_auc is invariant under strictly monotone transforms") {
  Rng rng = Rng::derive(61, {0});
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) {
    scores.push_back(static_cast<double>(rng.below(15)));
    labels.push_back(i % 2);
  }
  const RocCurve base = roc_auc(scores, labels);
  std::vector<double> mapped;
  for (double s : scores) mapped.push_back(s * 7.0 + 3.0);  // exact on small integers
  const RocCurve moved = roc_auc(mapped, labels);
  CHECK(base.auc_num == moved.auc_num);
  CHECK(base.auc_den == moved.auc_den);
}

TEST_CASE("roc_auc input validation") {
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), UndefinedMetricError);
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {0, 0}), UndefinedMetricError);
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {0, 2}), DataError);
  CHECK_THROWS_AS(roc_auc({0.1}, {0, 1}), DimensionError);
}

TEST_CASE("confusion counts rows by truth") {
  const std::vector<std::string> classes = {"neg", "pos"};
  ConfusionMatrix same = confusion({"neg", "pos", "pos"}, {"neg", "pos", "pos"}, classes);
  CHECK(same.at(0, 0) == 1);
  CHECK(same.at(1, 1) == 2);
  CHECK(same.at(0, 1) == 0);
  CHECK(same.accuracy() == 1.0);

  // 78 of 100 positives called positive: truth-row share 0.22 off diagonal
  std::vector<std::string> preds, truth;
  for (int i = 0; i < 100; ++i) {
    truth.push_back("pos");
    preds.push_back(i < 78 ? "pos" : "neg");
  }
  for (int i = 0; i < 40; ++i) {
    truth.push_back("neg");
    preds.push_back("neg");
  }
  ConfusionMatrix m = confusion(preds, truth, classes);
  CHECK(m.at(1, 1) == 78);
  CHECK(m.at(1, 0) == 22);
  CHECK(m.at(0, 0) == 40);
  CHECK(m.total() == 140);
  const double pos_recall =
      static_cast<double>(m.at(1, 1)) / static_cast<double>(m.at(1, 0) + m.at(1, 1));
  CHECK(pos_recall == doctest::Approx(0.78));

  ConfusionMatrix empty = confusion({}, {}, classes);
  CHECK(empty.total() == 0);
  CHECK_THROWS_AS(empty.accuracy(), UndefinedMetricError);

  CHECK_THROWS_AS(confusion({"bogus"}, {"pos"}, classes), DataError);
  CHECK_THROWS_AS(confusion({"pos"}, {"bogus"}, classes), DataError);
  CHECK_THROWS_AS(confusion({"pos"}, {"pos", "neg"}, classes), DimensionError);
  CHECK_THROWS_AS(confusion({}, {}, {"a", "a"}), ConfigError);
}

TEST_CASE("kfold stratifies and partitions") {
  std::vector<std::string> labels;
  for (int i = 0; i < 3; ++i) {
    labels.push_back("a");
    labels.push_back("b");
    labels.push_back("c");
  }
  const CvSplit split = kfold(labels, 3, 77);
  REQUIRE(split.fold.size() == 9);
  // each fold holds exactly one sample of each class
  for (int f = 0; f < 3; ++f)
    for (const std::string& cls : {"a", "b", "c"}) {
      int count = 0;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (split.fold[i] == f && labels[i] == cls) ++count;
      CHECK(count == 1);
    }

  // larger ragged case: per-class fold counts differ by <= 1
  Rng rng = Rng::derive(62, {0});
  std::vector<std::string> big;
  for (int i = 0; i < 157; ++i) big.push_back(std::string(1, static_cast<char>('a' + rng.below(4))));
  for (const char c : {'a', 'b', 'c', 'd'})  // top up so every class has >= 5
    for (int i = 0; i < 5; ++i) big.push_back(std::string(1, c));
  const CvSplit s5 = kfold(big, 5, 123);
  for (const char c : {'a', 'b', 'c', 'd'}) {
    std::vector<int> per_fold(5, 0);
    for (std::size_t i = 0; i < big.size(); ++i)
      if (big[i][0] == c) ++per_fold[static_cast<std::size_t>(s5.fold[i])];
    const auto [lo, hi] = std::minmax_element(per_fold.begin(), per_fold.end());
    CHECK(*hi - *lo <= 1);
  }
  for (int f : s5.fold) {
    CHECK(f >= 0);
    CHECK(f < 5);
  }

  const CvSplit again = kfold(big, 5, 123);
  CHECK(again.fold == s5.fold);
  const CvSplit other = kfold(big, 5, 124);
  CHECK(other.fold != s5.fold);

  CHECK_THROWS_AS(kfold({"a", "a", "b"}, 2, 1), ConfigError);  // class b smaller than k
  CHECK_THROWS_AS(kfold(labels, 1, 1), ConfigError);
  CHECK_THROWS_AS(kfold({}, 2, 1), ConfigError);
}

TEST_CASE("aggregate_cv mean and population std") {
  const Aggregate a = aggregate_cv({0.98, 0.99, 1.00});
  CHECK(a.mean == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(a.stddev == doctest::Approx(0.008164965809).epsilon(1e-9));
  CHECK(format_aggregate(a) == "0.99 +/- 0.0082");

  const Aggregate flat = aggregate_cv({0.5, 0.5, 0.5, 0.5});
  CHECK(flat.stddev == 0.0);

  Rng rng = Rng::derive(63, {0});
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> vals;
    const int n = 2 + static_cast<int>(rng.below(9));
    for (int i = 0; i < n; ++i) vals.push_back(rng.uniform());
    const Aggregate agg = aggregate_cv(vals);
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    CHECK(agg.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(agg.stddev == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(aggregate_cv({0.5}), ConfigError);
}

TEST_CASE("pca recovers a collinear direction exactly") {
  std::vector<std::vector<double>> pts;
  for (double t : {-2.0, -1.0, 0.0, 1.0, 2.0}) pts.push_back({3.0 + t, -1.0 + t});
  const PcaProjection p = pca_project(pts, 2);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(p.axes[0][0] == doctest::Approx(r).epsilon(1e-9));
  CHECK(p.axes[0][1] == doctest::Approx(r).epsilon(1e-9));
  CHECK(p.explained[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p.explained[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(p.mean[0] == doctest::Approx(3.0));
  CHECK(p.mean[1] == doctest::Approx(-1.0));

  // rank-1 reconstruction is lossless
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int j = 0; j < 2; ++j) {
      const double rebuilt = p.mean[static_cast<std::size_t>(j)] +
                             p.coords[i][0] * p.axes[0][static_cast<std::size_t>(j)];
      CHECK(rebuilt == doctest::Approx(pts[i][static_cast<std::size_t>(j)]).epsilon(1e-6));
    }
  }
}

TEST_CASE("pca matches the Jacobi oracle on 50 random 5-D datasets") {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng = Rng::derive(64, {static_cast<std::uint64_t>(trial)});
    const std::size_t d = 5, n = 40;
    std::vector<std::vector<double>> pts;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> v(d);
      // per-dimension scales keep the spectrum comfortably separated
      for (std::size_t j = 0; j < d; ++j)
        v[j] = rng.gaussian() * (1.0 + 2.0 * static_cast<double>(j)) + 0.3 * rng.gaussian();
      pts.push_back(v);
    }
    const PcaProjection p = pca_project(pts, 2);

    // oracle: Jacobi on the same population covariance
    std::vector<double> mean(d, 0.0);
    for (const auto& v : pts)
      for (std::size_t j = 0; j < d; ++j) mean[j] += v[j];
    for (double& m : mean) m /= static_cast<double>(n);
    std::vector<double> cov(d * d, 0.0);
    for (const auto& v : pts)
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) cov[r * d + c] += (v[r] - mean[r]) * (v[c] - mean[c]);
    for (double& x : cov) x /= static_cast<double>(n);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) total += cov[j * d + j];

    std::vector<double> evals;
    std::vector<std::vector<double>> evecs;
    jacobi_eigen(cov, d, evals, evecs);

    for (int a = 0; a < 2; ++a) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        dot += p.axes[static_cast<std::size_t>(a)][j] * evecs[static_cast<std::size_t>(a)][j];
      CHECK(std::abs(std::abs(dot) - 1.0) < 1e-6);  // same axis up to sign
      CHECK(p.explained[static_cast<std::size_t>(a)] ==
            doctest::Approx(evals[static_cast<std::size_t>(a)] / total).epsilon(1e-6));
    }

    // orthonormal axes, nonincreasing explained variance
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b <= a; ++b) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j)
          dot += p.axes[static_cast<std::size_t>(a)][j] * p.axes[static_cast<std::size_t>(b)][j];
        CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-9);
      }
    CHECK(p.explained[0] >= p.explained[1]);
    CHECK(p.explained[0] + p.explained[1] <= 1.0 + 1e-6);

    // sign rule: first nonzero component positive
    for (const auto& axis : p.axes)
      for (double x : axis) {
        if (std::abs(x) > 1e-12) {
          CHECK(x > 0.0);
          break;
        }
      }
  }
}

TEST_CASE("pca input validation") {
  std::vector<std::vector<double>> same(5, {1.0, 2.0, 3.0});
  CHECK_THROWS_AS(pca_project(same, 2), DegenerateInputError);
  CHECK_THROWS_AS(pca_project({{1.0, 2.0}, {2.0, 1.0}}, 2), ConfigError);  // need dims+1
  CHECK_THROWS_AS(pca_project({{1.0}, {2.0}, {3.0}}, 2), ConfigError);     // dims > length
  CHECK_THROWS_AS(pca_project({{1.0, 2.0}, {2.0, 1.0}, {1.0}}, 1), DimensionError);
}

TEST_CASE("silhouette separates tight distant clusters") {
  Rng rng = Rng::derive(65, {0});
  std::vector<std::vector<double>> pts;
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) {
    pts.push_back({rng.gaussian() * 0.05, rng.gaussian() * 0.05});
    labels.push_back(0);
    pts.push_back({10.0 + rng.gaussian() * 0.05, rng.gaussian() * 0.05});
    labels.push_back(1);
  }
  CHECK(silhouette(pts, labels) > 0.9);

  // same two blobs with labels scrambled: structure gone
  std::vector<int> scrambled = labels;
  Rng mix = Rng::derive(65, {1});
  mix.shuffle(scrambled);
  CHECK(silhouette(pts, scrambled) < 0.2);

  CHECK_THROWS_AS(silhouette(pts, std::vector<int>(pts.size(), 0)), UndefinedMetricError);
}

TEST_CASE("csv and svg writers are deterministic and complete") {
  const RocCurve roc = roc_auc({0.9, 0.7, 0.7, 0.3, 0.2}, {1, 1, 0, 0, 1});
  const std::string dir = "/tmp/millie_metrics_test";
  std::system(("mkdir -p " + dir).c_str());

  write_roc_csv(roc, dir + "/roc.csv");
  const std::string roc_text = slurp(dir + "/roc.csv");
  CHECK(roc_text.rfind("threshold,fpr,tpr\n", 0) == 0);
  CHECK(std::count(roc_text.begin(), roc_text.end(), '\n') == 1 + static_cast<long>(roc.points.size()));
  CHECK(roc_text.find("inf,0,0") != std::string::npos);
  write_roc_csv(roc, dir + "/roc2.csv");
  CHECK(slurp(dir + "/roc2.csv") == roc_text);

  std::vector<std::vector<double>> pts;
  Rng rng = Rng::derive(66, {0});
  std::vector<std::string> ids, labels;
  for (int i = 0; i < 12; ++i) {
    pts.push_back({rng.gaussian() * 3.0, rng.gaussian(), rng.gaussian() * 0.2});
    ids.push_back("p" + std::to_string(i));
    labels.push_back(i % 2 ? "odd" : "even");
  }
  const PcaProjection p = pca_project(pts, 2);
  write_pca_csv(p, ids, labels, dir + "/pca.csv");
  const std::string pca_text = slurp(dir + "/pca.csv");
  CHECK(pca_text.rfind("id,pc1,pc2,label\n", 0) == 0);
  CHECK(std::count(pca_text.begin(), pca_text.end(), '\n') == 13);

  write_pca_svg(p, labels, dir + "/pca.svg");
  const std::string svg = slurp(dir + "/pca.svg");
  CHECK(svg.find("<svg") == 0);
  // 12 data circles + 2 legend circles
  std::size_t circles = 0, at = 0;
  while ((at = svg.find("<circle", at)) != std::string::npos) {
    ++circles;
    at += 7;
  }
  CHECK(circles == 14);
  CHECK(svg.find(">odd</text>") != std::string::npos);
  CHECK(svg.find(">even</text>") != std::string::npos);
  write_pca_svg(p, labels, dir + "/pca2.svg");
  CHECK(slurp(dir + "/pca2.svg") == svg);

  CHECK_THROWS_AS(write_roc_csv(roc, "/nonexistent_dir_zz/x.csv"), IoError);
}
