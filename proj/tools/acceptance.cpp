// Acceptance gate. Each criterion prints one verdict line on stdout:
//   [criterion N] PASS: ... | [criterion N] FAIL: ...
// and the process exits 0 only when every requested criterion passes.
// Progress for the long-running criteria goes to stderr.
//
// Usage: millie_acceptance <criterion 1..10 | all> [seeds...]
// The optional seed list applies to criterion 7 only (default 1 2 3 4 5).
//
// Runtime bars for the end-to-end criteria assume a 4-core desktop; on
// hosts with fewer cores the bar is scaled by 4/workers and the formula is
// printed alongside the measurement.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "millie/checkpoint.hpp"
#include "millie/commands.hpp"
#include "millie/dataio.hpp"
#include "millie/gradcheck.hpp"
#include "millie/image.hpp"
#include "millie/metrics.hpp"
#include "millie/model.hpp"
#include "millie/rng.hpp"
#include "millie/runconfig.hpp"
#include "millie/segmentation.hpp"
#include "millie/tape.hpp"
#include "millie/tensor.hpp"
#include "millie/training.hpp"

namespace fs = std::filesystem;
using namespace millie;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int worker_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return std::max(1, std::min(4, hw == 0 ? 1 : static_cast<int>(hw)));
}

double scaled_budget(double four_core_seconds) {
  return four_core_seconds * 4.0 / worker_count();
}

std::string budget_note(double four_core_seconds) {
  std::ostringstream os;
  os << four_core_seconds << "s x 4/" << worker_count() << " workers = "
     << scaled_budget(four_core_seconds) << "s";
  return os.str();
}

void verdict(int n, bool ok, const std::string& detail) {
  std::cout << "[criterion " << n << "] " << (ok ? "PASS" : "FAIL") << ": " << detail << std::endl;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path("/tmp/millie_acceptance") / name;
  std::error_code ec;
  fs::remove_all(p, ec);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------- criterion 1

bool criterion1() {
  const auto t0 = Clock::now();
  std::vector<std::pair<double, double>> truth, predicted;
  for (int i = 0; i < 71; ++i)
    truth.push_back({50.0 + 50.0 * (i / 10), 50.0 + 50.0 * (i % 10)});
  for (int i = 0; i < 67; ++i) predicted.push_back(truth[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 6; ++i) predicted.push_back({2000.0 + 40.0 * i, 2000.0});

  const MatchScore s = segmentation_score(predicted, truth, 10.0);
  const long recall2 = std::lround(s.recall * 100.0);
  const long precision2 = std::lround(s.precision * 100.0);
  const double el = seconds_since(t0);

  const bool ok = s.true_positives == 67 && s.false_negatives == 4 && s.false_positives == 6 &&
                  recall2 == 94 && precision2 == 92 && el < 1.0;
  std::ostringstream os;
  os << "tp=" << s.true_positives << " fn=" << s.false_negatives << " fp=" << s.false_positives
     << " -> recall " << std::fixed << std::setprecision(2) << (recall2 / 100.0) << " precision "
     << (precision2 / 100.0) << " (" << std::setprecision(3) << el << "s, bar 1s)";
  verdict(1, ok, os.str());
  return ok;
}

// ---------------------------------------------------------------- criterion 2

// O(bins^2) reference: recompute the class statistics from scratch for every
// cut and compare the exact variance fractions by cross-multiplication.
double brute_otsu(const std::vector<float>& channel, int bins) {
  std::vector<std::int64_t> hist(static_cast<std::size_t>(bins), 0);
  for (float v : channel) {
    int b = static_cast<int>(static_cast<double>(v) * bins);
    if (b >= bins) b = bins - 1;
    ++hist[static_cast<std::size_t>(b)];
  }
  const std::int64_t n_total = static_cast<std::int64_t>(channel.size());
  std::int64_t weighted_total = 0;
  for (int b = 0; b < bins; ++b) weighted_total += hist[static_cast<std::size_t>(b)] * b;

  int best_bin = 0;
  unsigned __int128 best_num = 0, best_den = 1;
  bool first = true;
  for (int t = 0; t + 1 < bins; ++t) {
    std::int64_t n0 = 0, s0 = 0;
    for (int b = 0; b <= t; ++b) {
      n0 += hist[static_cast<std::size_t>(b)];
      s0 += hist[static_cast<std::size_t>(b)] * b;
    }
    const std::int64_t n1 = n_total - n0;
    unsigned __int128 num = 0, den = 1;
    if (n0 > 0 && n1 > 0) {
      const std::int64_t lever = s0 * n_total - weighted_total * n0;
      const unsigned __int128 mag =
          lever >= 0 ? static_cast<unsigned __int128>(lever) : static_cast<unsigned __int128>(-lever);
      num = mag * mag;
      den = static_cast<unsigned __int128>(n0) * static_cast<unsigned __int128>(n1);
    }
    if (first || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best_bin = t;
      first = false;
    }
  }
  return static_cast<double>(best_bin + 1) / static_cast<double>(bins);
}

bool criterion2() {
  const auto t0 = Clock::now();
  int mismatches = 0;
  std::string first_bad;

  for (int i = 0; i < 500; ++i) {
    Rng rng(20000 + static_cast<std::uint64_t>(i));
    const int bins = (i % 3 == 0) ? 64 : (i % 3 == 1 ? 128 : 256);
    const int n = 2 + static_cast<int>(rng.below(4999));
    std::vector<float> values(static_cast<std::size_t>(n));
    const int mode = i % 5;
    for (auto& v : values) {
      double x = 0.0;
      switch (mode) {
        case 0: x = rng.uniform(); break;
        case 1:  // bimodal
          x = rng.coin() ? 0.25 + 0.08 * rng.gaussian() : 0.72 + 0.06 * rng.gaussian();
          break;
        case 2:  // quantized spikes, forces exact ties
          x = (0.5 + static_cast<double>(rng.below(6)) * 31.0) / 200.0;
          break;
        case 3:  // two symmetric point masses
          x = rng.coin() ? 0.1 : 0.9;
          break;
        default:  // skewed
          x = std::pow(rng.uniform(), 3.0);
          break;
      }
      v = static_cast<float>(std::clamp(x, 0.0, 0.999999));
    }
    if (*std::min_element(values.begin(), values.end()) ==
        *std::max_element(values.begin(), values.end()))
      values[0] = values[0] < 0.5f ? values[0] + 0.25f : values[0] - 0.25f;
    const double got = otsu_threshold(values, bins);
    const double want = brute_otsu(values, bins);
    if (got != want) {
      ++mismatches;
      if (first_bad.empty())
        first_bad = " first mismatch hist " + std::to_string(i) + " got " + std::to_string(got) +
                    " want " + std::to_string(want);
    }
  }

  for (int i = 0; i < 20; ++i) {
    Rng rng(21000 + static_cast<std::uint64_t>(i));
    RgbImage img(300, 300);
    const std::uint8_t bg_r = static_cast<std::uint8_t>(235 + rng.below(18));
    const std::uint8_t bg_g = static_cast<std::uint8_t>(230 + rng.below(20));
    const std::uint8_t bg_b = static_cast<std::uint8_t>(228 + rng.below(22));
    for (int r = 0; r < 300; ++r)
      for (int c = 0; c < 300; ++c) {
        img.at(r, c, 0) = bg_r;
        img.at(r, c, 1) = bg_g;
        img.at(r, c, 2) = bg_b;
      }
    const int disks = 5 + static_cast<int>(rng.below(8));
    for (int d = 0; d < disks; ++d) {
      const double cr = rng.uniform(25.0, 275.0), cc = rng.uniform(25.0, 275.0);
      const double rad = rng.uniform(9.0, 24.0);
      std::uint8_t pr, pg, pb;
      hsv_to_rgb_pixel(static_cast<float>(rng.uniform(200.0, 330.0)),
                       static_cast<float>(rng.uniform(0.45, 0.8)),
                       static_cast<float>(rng.uniform(0.35, 0.7)), pr, pg, pb);
      for (int r = 0; r < 300; ++r)
        for (int c = 0; c < 300; ++c)
          if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= rad * rad) {
            img.at(r, c, 0) = pr;
            img.at(r, c, 1) = pg;
            img.at(r, c, 2) = pb;
          }
    }
    const HsvImage hsv = rgb_to_hsv(img);
    const double got = otsu_threshold(hsv.sat, 256);
    const double want = brute_otsu(hsv.sat, 256);
    if (got != want) {
      ++mismatches;
      if (first_bad.empty()) first_bad = " first mismatch image " + std::to_string(i);
    }
  }

  const double el = seconds_since(t0);
  const bool ok = mismatches == 0 && el < 5.0;
  std::ostringstream os;
  os << "500 histograms + 20 images, " << mismatches << " mismatches vs O(bins^2) brute force"
     << first_bad << " (" << std::fixed << std::setprecision(2) << el << "s, bar 5s)";
  verdict(2, ok, os.str());
  return ok;
}

// ---------------------------------------------------------------- criterion 3

// Leaves are drawn in double and cast down for the 32-bit pass so both runs
// evaluate the same points. Margins keep the probes away from relu kinks and
// max-reduction ties.
struct OpCase {
  std::string name;
  std::function<std::vector<TensorT<double>>(Rng&)> leaves;
  // Wires the op; the extra tensor is the fixed projection used to reduce a
  // non-scalar output. Templated via two monomorphic wrappers below.
  std::function<int(TapeT<double>&, const std::vector<int>&, const TensorT<double>&)> build64;
  std::function<int(TapeT<float>&, const std::vector<int>&, const TensorT<float>&)> build32;
  int out_numel = 1;  // projection length
};

template <typename T>
TensorT<T> cast_tensor(const TensorT<double>& src) {
  return src.template cast<T>();
}

template <>
TensorT<double> cast_tensor<double>(const TensorT<double>& src) {
  return src;
}

TensorT<double> draw(Rng& rng, const std::vector<int>& shape, double lo = -1.0, double hi = 1.0) {
  TensorT<double> t = TensorT<double>::zeros(shape);
  for (auto& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

// Enforce |x| >= margin elementwise (relu probes).
void push_from_zero(TensorT<double>& t, double margin) {
  for (auto& x : t.data)
    if (std::abs(x) < margin) x = x < 0 ? x - margin : x + margin;
}

// Enforce a top-2 gap within each group of `group` consecutive-in-window
// elements; used via a full redraw loop instead of surgical edits.
bool groups_have_gap(const std::vector<double>& v, std::size_t group, double gap) {
  for (std::size_t base = 0; base + group <= v.size(); base += group) {
    double top = -1e30, second = -1e30;
    for (std::size_t j = 0; j < group; ++j) {
      const double x = v[base + j];
      if (x > top) {
        second = top;
        top = x;
      } else if (x > second) {
        second = x;
      }
    }
    if (top - second < gap) return false;
  }
  return true;
}

bool criterion3() {
  const auto t0 = Clock::now();
  std::vector<OpCase> cases;

  auto proj_last = [](auto& tape, int id, const auto& w) { return tape.weighted_sum(id, w); };

  {
    OpCase c;
    c.name = "conv2d";
    c.leaves = [](Rng& rng) {
      return std::vector<TensorT<double>>{draw(rng, {2, 5, 5}), draw(rng, {3, 2, 3, 3}),
                                          draw(rng, {3})};
    };
    c.out_numel = 3 * 5 * 5;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.conv2d(ids[0], ids[1], ids[2], 1, 1), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.conv2d(ids[0], ids[1], ids[2], 1, 1), w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "conv2d_s2";
    c.leaves = [](Rng& rng) {
      return std::vector<TensorT<double>>{draw(rng, {2, 6, 6}), draw(rng, {3, 2, 3, 3}),
                                          draw(rng, {3})};
    };
    c.out_numel = 3 * 2 * 2;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.conv2d(ids[0], ids[1], ids[2], 2, 0), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.conv2d(ids[0], ids[1], ids[2], 2, 0), w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "relu";
    c.leaves = [](Rng& rng) {
      TensorT<double> x = draw(rng, {12});
      push_from_zero(x, 0.05);
      return std::vector<TensorT<double>>{x};
    };
    c.out_numel = 12;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.relu(ids[0]), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.relu(ids[0]), w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "maxpool2";
    c.leaves = [](Rng& rng) {
      for (;;) {
        TensorT<double> x = draw(rng, {2, 4, 4});
        // windows are 2x2 blocks; check gaps per window
        bool ok = true;
        for (int ch = 0; ch < 2 && ok; ++ch)
          for (int r = 0; r < 4 && ok; r += 2)
            for (int cc = 0; cc < 4 && ok; cc += 2) {
              std::vector<double> g = {x.at3(ch, r, cc), x.at3(ch, r, cc + 1),
                                       x.at3(ch, r + 1, cc), x.at3(ch, r + 1, cc + 1)};
              ok = groups_have_gap(g, 4, 0.05);
            }
        if (ok) return std::vector<TensorT<double>>{x};
      }
    };
    c.out_numel = 2 * 2 * 2;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.maxpool2(ids[0]), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.maxpool2(ids[0]), w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "global_spatial_max";
    c.leaves = [](Rng& rng) {
      for (;;) {
        TensorT<double> x = draw(rng, {3, 4, 4});
        bool ok = true;
        for (int ch = 0; ch < 3 && ok; ++ch) {
          std::vector<double> g;
          for (int r = 0; r < 4; ++r)
            for (int cc = 0; cc < 4; ++cc) g.push_back(x.at3(ch, r, cc));
          ok = groups_have_gap(g, 16, 0.05);
        }
        if (ok) return std::vector<TensorT<double>>{x};
      }
    };
    c.out_numel = 3;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.global_spatial_max(ids[0]), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.global_spatial_max(ids[0]), w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "affine";
    c.leaves = [](Rng& rng) {
      return std::vector<TensorT<double>>{draw(rng, {5}), draw(rng, {5, 3}), draw(rng, {3})};
    };
    c.out_numel = 3;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.affine(ids[0], ids[1], ids[2]), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.affine(ids[0], ids[1], ids[2]), w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "softmax";
    c.leaves = [](Rng& rng) { return std::vector<TensorT<double>>{draw(rng, {5}, -2.0, 2.0)}; };
    c.out_numel = 5;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.softmax(ids[0]), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.softmax(ids[0]), w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "cross_entropy";
    c.leaves = [](Rng& rng) { return std::vector<TensorT<double>>{draw(rng, {4}, -2.0, 2.0)}; };
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>&) {
      return t.cross_entropy(t.softmax(ids[0]), 2);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>&) {
      return t.cross_entropy(t.softmax(ids[0]), 2);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "stack_rows";
    c.leaves = [](Rng& rng) {
      return std::vector<TensorT<double>>{draw(rng, {4}), draw(rng, {4}), draw(rng, {4})};
    };
    c.out_numel = 12;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.stack_rows({ids[0], ids[1], ids[2]}), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.stack_rows({ids[0], ids[1], ids[2]}), w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "max_rows";
    c.leaves = [](Rng& rng) {
      for (;;) {
        TensorT<double> x = draw(rng, {5, 4});
        bool ok = true;
        for (int col = 0; col < 4 && ok; ++col) {
          std::vector<double> g;
          for (int row = 0; row < 5; ++row) g.push_back(x.at2(row, col));
          ok = groups_have_gap(g, 5, 0.05);
        }
        if (ok) return std::vector<TensorT<double>>{x};
      }
    };
    c.out_numel = 4;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.max_rows(ids[0]), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.max_rows(ids[0]), w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "weighted_sum";
    c.leaves = [](Rng& rng) { return std::vector<TensorT<double>>{draw(rng, {7})}; };
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>&) {
      TensorT<double> w = TensorT<double>::zeros({7});
      for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] = 0.3 + 0.1 * static_cast<double>(i);
      return t.weighted_sum(ids[0], w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>&) {
      TensorT<float> w = TensorT<float>::zeros({7});
      for (std::size_t i = 0; i < w.data.size(); ++i)
        w.data[i] = 0.3f + 0.1f * static_cast<float>(i);
      return t.weighted_sum(ids[0], w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "add";
    c.leaves = [](Rng& rng) {
      return std::vector<TensorT<double>>{draw(rng, {6}), draw(rng, {6})};
    };
    c.out_numel = 6;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.add(ids[0], ids[1]), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.add(ids[0], ids[1]), w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "mul";
    c.leaves = [](Rng& rng) {
      return std::vector<TensorT<double>>{draw(rng, {6}), draw(rng, {6})};
    };
    c.out_numel = 6;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.mul(ids[0], ids[1]), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.mul(ids[0], ids[1]), w);
    };
    cases.push_back(c);
  }
  {
    OpCase c;
    c.name = "scale";
    c.leaves = [](Rng& rng) { return std::vector<TensorT<double>>{draw(rng, {6})}; };
    c.out_numel = 6;
    c.build64 = [&](TapeT<double>& t, const std::vector<int>& ids, const TensorT<double>& w) {
      return proj_last(t, t.scale(ids[0], 0.7), w);
    };
    c.build32 = [&](TapeT<float>& t, const std::vector<int>& ids, const TensorT<float>& w) {
      return proj_last(t, t.scale(ids[0], 0.7f), w);
    };
    cases.push_back(c);
  }

  bool ok = true;
  std::ostringstream detail;
  double worst64 = 0.0, worst32 = 0.0;
  std::string worst64_op, worst32_op;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const OpCase& c = cases[ci];
    for (int point = 0; point < 10; ++point) {
      Rng rng(30000 + 100 * static_cast<std::uint64_t>(ci) + static_cast<std::uint64_t>(point));
      const std::vector<TensorT<double>> leaves64 = c.leaves(rng);
      TensorT<double> w64 = draw(rng, {c.out_numel}, 0.25, 1.0);

      const auto res64 = finite_diff_check<double>(
          leaves64,
          [&](TapeT<double>& t, const std::vector<int>& ids) { return c.build64(t, ids, w64); },
          1e-5);

      std::vector<TensorT<float>> leaves32;
      leaves32.reserve(leaves64.size());
      for (const auto& l : leaves64) leaves32.push_back(cast_tensor<float>(l));
      const TensorT<float> w32 = cast_tensor<float>(w64);
      const auto res32 = finite_diff_check<float>(
          leaves32,
          [&](TapeT<float>& t, const std::vector<int>& ids) { return c.build32(t, ids, w32); },
          1e-2);

      if (res64.max_rel_error > worst64) {
        worst64 = res64.max_rel_error;
        worst64_op = c.name;
      }
      if (res32.max_rel_error > worst32) {
        worst32 = res32.max_rel_error;
        worst32_op = c.name;
      }
      if (res64.max_rel_error > 1e-6 || res32.max_rel_error > 1e-3) {
        ok = false;
        detail << " " << c.name << " point " << point << " rel64 " << res64.max_rel_error
               << " rel32 " << res32.max_rel_error;
      }
    }
  }

  const double el = seconds_since(t0);
  ok = ok && el < 30.0;
  std::ostringstream os;
  os << cases.size() << " ops x 10 points, worst rel err 64-bit " << std::scientific
     << std::setprecision(2) << worst64 << " (" << worst64_op << ", tol 1e-6), 32-bit " << worst32
     << " (" << worst32_op << ", tol 1e-3)" << detail.str() << std::fixed << " ("
     << std::setprecision(2) << el << "s, bar 30s)";
  verdict(3, ok, os.str());
  return ok;
}

// ---------------------------------------------------------------- criterion 4

PatchImage random_patch(Rng& rng, const std::string& id) {
  PatchImage p;
  p.source_id = id;
  p.image = RgbImage(kPatchSide, kPatchSide);
  for (auto& b : p.image.pixels) b = static_cast<std::uint8_t>(rng.below(256));
  return p;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

bool criterion4() {
  const auto t0 = Clock::now();
  BackboneConfig backbone{16, {4, 8}};
  ModelParams params =
      ModelParams::init(backbone, {"healthy", "class-a", "class-b"}, 404, 32, 16);

  int perm_bad = 0, dup_bad = 0, grad_bad = 0;
  for (int bag_i = 0; bag_i < 200; ++bag_i) {
    Rng rng = Rng::derive(4000, {static_cast<std::uint64_t>(bag_i)});
    const int n = 2 + static_cast<int>(rng.below(7));
    std::vector<PatchImage> patches;
    for (int j = 0; j < n; ++j)
      patches.push_back(random_patch(rng, "bag" + std::to_string(bag_i)));

    const BagPrediction base = predict_bag(patches, params);

    std::vector<PatchImage> shuffled = patches;
    rng.shuffle(shuffled);
    if (!tensors_equal(base.probabilities, predict_bag(shuffled, params).probabilities))
      ++perm_bad;

    std::vector<PatchImage> dup = patches;
    dup.push_back(patches[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)))]);
    if (!tensors_equal(base.probabilities, predict_bag(dup, params).probabilities)) ++dup_bad;

    // gradient flow: backprop one training-style loss and require exactly the
    // non-winning instances to get all-zero input gradients
    Tape tape;
    TapedParams ids = register_params(tape, params);
    std::vector<int> x_ids, feats;
    for (const auto& p : patches) {
      const int x = tape.input(preprocess_patch(p, backbone.input_side), true);
      x_ids.push_back(x);
      feats.push_back(embed_patch_taped(tape, ids, x, backbone));
    }
    std::vector<int> argmax;
    const int fused = tape.max_rows(tape.stack_rows(feats), &argmax);
    const int probs = head_forward_taped(tape, ids, fused);
    const int loss = tape.cross_entropy(probs, bag_i % 3);
    tape.backward(loss);

    std::vector<bool> winner(static_cast<std::size_t>(n), false);
    for (int w : argmax) winner[static_cast<std::size_t>(w)] = true;
    for (int j = 0; j < n; ++j) {
      const Tensor& g = tape.grad(x_ids[static_cast<std::size_t>(j)]);
      bool all_zero = true;
      for (float v : g.data)
        if (v != 0.0f) {
          all_zero = false;
          break;
        }
      if (!winner[static_cast<std::size_t>(j)] && !all_zero) ++grad_bad;
    }
  }

  const double el = seconds_since(t0);
  const bool ok = perm_bad == 0 && dup_bad == 0 && grad_bad == 0 && el < 30.0;
  std::ostringstream os;
  os << "200 bags: permutation mismatches " << perm_bad << ", duplication mismatches " << dup_bad
     << ", non-argmax instances with nonzero grad " << grad_bad << " (" << std::fixed
     << std::setprecision(2) << el << "s, bar 30s)";
  verdict(4, ok, os.str());
  return ok;
}

// ---------------------------------------------------------------- criterion 5

bool criterion5() {
  const auto t0 = Clock::now();
  int bad = 0;
  std::string first_bad;
  double worst_gap = 0.0;

  for (int i = 0; i < 100; ++i) {
    Rng rng(50000 + static_cast<std::uint64_t>(i));
    const int n = 2 + static_cast<int>(rng.below(1999));
    std::vector<double> scores(static_cast<std::size_t>(n));
    std::vector<int> labels(static_cast<std::size_t>(n));
    const int mode = i % 4;
    for (int j = 0; j < n; ++j) {
      switch (mode) {
        case 0: scores[static_cast<std::size_t>(j)] = rng.uniform(); break;
        case 1:  // coarse quantization, many ties
          scores[static_cast<std::size_t>(j)] =
              static_cast<double>(rng.below(1 + rng.below(9))) * 0.125;
          break;
        case 2: scores[static_cast<std::size_t>(j)] = rng.gaussian(); break;
        default: scores[static_cast<std::size_t>(j)] = 0.5; break;  // all tied
      }
      labels[static_cast<std::size_t>(j)] = static_cast<int>(rng.below(2));
    }
    labels[0] = 1;
    labels[static_cast<std::size_t>(n - 1)] = 0;

    const RocCurve roc = roc_auc(scores, labels);

    std::int64_t n_pos = 0, n_neg = 0, num2 = 0;
    for (int a = 0; a < n; ++a) {
      if (labels[static_cast<std::size_t>(a)] == 0) continue;
      ++n_pos;
      for (int b = 0; b < n; ++b) {
        if (labels[static_cast<std::size_t>(b)] == 1) continue;
        const double sp = scores[static_cast<std::size_t>(a)];
        const double sn = scores[static_cast<std::size_t>(b)];
        if (sp > sn)
          num2 += 2;
        else if (sp == sn)
          num2 += 1;
      }
    }
    n_neg = n - n_pos;
    const std::int64_t den = 2 * n_pos * n_neg;
    const double ref = static_cast<double>(num2) / static_cast<double>(den);
    const double gap = std::abs(roc.auc - ref);
    worst_gap = std::max(worst_gap, gap);

    const std::vector<int> flipped = [&] {
      std::vector<int> f(labels.size());
      for (std::size_t j = 0; j < labels.size(); ++j) f[j] = 1 - labels[j];
      return f;
    }();
    const RocCurve rev = roc_auc(scores, flipped);

    const bool case_ok = roc.auc_num == num2 && roc.auc_den == den && gap <= 1e-12 &&
                         rev.auc_den == roc.auc_den && rev.auc_num == roc.auc_den - roc.auc_num &&
                         std::abs(roc.auc + rev.auc - 1.0) <= 1e-15;
    if (!case_ok) {
      ++bad;
      if (first_bad.empty())
        first_bad = " first bad set " + std::to_string(i) + " auc " + std::to_string(roc.auc) +
                    " ref " + std::to_string(ref);
    }
  }

  const double el = seconds_since(t0);
  const bool ok = bad == 0 && el < 10.0;
  std::ostringstream os;
  os << "100 score sets vs O(n^2) pair counting, worst |gap| " << std::scientific
     << std::setprecision(2) << worst_gap << " (tol 1e-12), reversal exact as rationals"
     << first_bad << std::fixed << " (" << std::setprecision(2) << el << "s, bar 10s)";
  verdict(5, ok, os.str());
  return ok;
}

// ---------------------------------------------------------------- criterion 6

// Cyclic Jacobi with explicit rotations; plenty for symmetric 5x5.
void jacobi_eigen(std::vector<double> a, int d, std::vector<double>& eigvals,
                  std::vector<std::vector<double>>& eigvecs) {
  std::vector<double> v(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i) * d + i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += std::abs(a[static_cast<std::size_t>(p) * d + q]);
    if (off < 1e-13) break;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) {
        const double apq = a[static_cast<std::size_t>(p) * d + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[static_cast<std::size_t>(p) * d + p];
        const double aqq = a[static_cast<std::size_t>(q) * d + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < d; ++k) {
          const double akp = a[static_cast<std::size_t>(k) * d + p];
          const double akq = a[static_cast<std::size_t>(k) * d + q];
          a[static_cast<std::size_t>(k) * d + p] = c * akp - s * akq;
          a[static_cast<std::size_t>(k) * d + q] = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          const double apk = a[static_cast<std::size_t>(p) * d + k];
          const double aqk = a[static_cast<std::size_t>(q) * d + k];
          a[static_cast<std::size_t>(p) * d + k] = c * apk - s * aqk;
          a[static_cast<std::size_t>(q) * d + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < d; ++k) {
          const double vkp = v[static_cast<std::size_t>(k) * d + p];
          const double vkq = v[static_cast<std::size_t>(k) * d + q];
          v[static_cast<std::size_t>(k) * d + p] = c * vkp - s * vkq;
          v[static_cast<std::size_t>(k) * d + q] = s * vkp + c * vkq;
        }
      }
  }

  std::vector<int> order(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return a[static_cast<std::size_t>(x) * d + x] > a[static_cast<std::size_t>(y) * d + y];
  });
  eigvals.clear();
  eigvecs.clear();
  for (int oi : order) {
    eigvals.push_back(a[static_cast<std::size_t>(oi) * d + oi]);
    std::vector<double> col(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) col[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(k) * d + oi];
    eigvecs.push_back(col);
  }
}

bool criterion6() {
  const auto t0 = Clock::now();
  const int d = 5;
  int bad = 0;
  std::string first_bad;
  double worst_axis = 0.0;

  for (int i = 0; i < 50; ++i) {
    Rng rng(60000 + static_cast<std::uint64_t>(i));
    // random rotation via Gram-Schmidt on a gaussian matrix
    std::vector<std::vector<double>> rot(d, std::vector<double>(d));
    for (auto& row : rot)
      for (auto& x : row) x = rng.gaussian();
    for (int r = 0; r < d; ++r) {
      for (int p = 0; p < r; ++p) {
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += rot[r][j] * rot[p][j];
        for (int j = 0; j < d; ++j) rot[r][j] -= dot * rot[p][j];
      }
      double nn = 0.0;
      for (int j = 0; j < d; ++j) nn += rot[r][j] * rot[r][j];
      nn = std::sqrt(nn);
      for (int j = 0; j < d; ++j) rot[r][j] /= nn;
    }
    const double scales[5] = {2.8 + rng.uniform(0.0, 0.3), 2.0, 1.3, 0.8, 0.45};
    const int n = 30 + static_cast<int>(rng.below(91));

    std::vector<std::vector<double>> data(static_cast<std::size_t>(n), std::vector<double>(d));
    for (auto& row : data) {
      double g[5];
      for (int j = 0; j < d; ++j) g[j] = rng.gaussian() * scales[j];
      for (int j = 0; j < d; ++j) {
        double s = 0.7 * j;  // fixed offset, removed by centering
        for (int k = 0; k < d; ++k) s += rot[k][j] * g[k];
        row[static_cast<std::size_t>(j)] = s;
      }
    }

    const PcaProjection pca = pca_project(data, 2);

    // population covariance, same centering
    std::vector<double> mean(d, 0.0);
    for (const auto& row : data)
      for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j)];
    for (auto& m : mean) m /= n;
    std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
    for (const auto& row : data)
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
          cov[static_cast<std::size_t>(r) * d + c] +=
              (row[static_cast<std::size_t>(r)] - mean[static_cast<std::size_t>(r)]) *
              (row[static_cast<std::size_t>(c)] - mean[static_cast<std::size_t>(c)]);
    for (auto& x : cov) x /= n;
    double total_var = 0.0;
    for (int j = 0; j < d; ++j) total_var += cov[static_cast<std::size_t>(j) * d + j];

    std::vector<double> eigvals;
    std::vector<std::vector<double>> eigvecs;
    jacobi_eigen(cov, d, eigvals, eigvecs);

    bool case_ok = pca.axes.size() == 2 && pca.explained.size() == 2;
    for (int k = 0; k < 2 && case_ok; ++k) {
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += pca.axes[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] * eigvecs[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
      const double sign = dot >= 0 ? 1.0 : -1.0;
      for (int j = 0; j < d; ++j) {
        const double gap = std::abs(pca.axes[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] -
                                    sign * eigvecs[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]);
        worst_axis = std::max(worst_axis, gap);
        if (gap > 1e-6) case_ok = false;
      }
      const double ratio_ref = eigvals[static_cast<std::size_t>(k)] / total_var;
      if (std::abs(pca.explained[static_cast<std::size_t>(k)] - ratio_ref) > 1e-6) case_ok = false;
    }
    // orthonormality and ordering
    if (case_ok) {
      double n0 = 0.0, n1 = 0.0, dot01 = 0.0;
      for (int j = 0; j < d; ++j) {
        n0 += pca.axes[0][static_cast<std::size_t>(j)] * pca.axes[0][static_cast<std::size_t>(j)];
        n1 += pca.axes[1][static_cast<std::size_t>(j)] * pca.axes[1][static_cast<std::size_t>(j)];
        dot01 += pca.axes[0][static_cast<std::size_t>(j)] * pca.axes[1][static_cast<std::size_t>(j)];
      }
      case_ok = std::abs(n0 - 1.0) <= 1e-9 && std::abs(n1 - 1.0) <= 1e-9 &&
                std::abs(dot01) <= 1e-9 && pca.explained[0] >= pca.explained[1];
    }
    if (!case_ok) {
      ++bad;
      if (first_bad.empty()) first_bad = " first bad dataset " + std::to_string(i);
    }
  }

  const double el = seconds_since(t0);
  const bool ok = bad == 0 && el < 10.0;
  std::ostringstream os;
  os << "50 random 5-D datasets vs Jacobi, worst axis gap " << std::scientific
     << std::setprecision(2) << worst_axis << " (tol 1e-6), axes orthonormal, explained nonincreasing"
     << first_bad << std::fixed << " (" << std::setprecision(2) << el << "s, bar 10s)";
  verdict(6, ok, os.str());
  return ok;
}

// ---------------------------------------------------------------- criterion 7

struct PipelineResult {
  double mean_accuracy = 0.0;
  std::map<std::string, double> cell_auc;
  double seconds = 0.0;
};

// synth -> segment -> 3-fold crossval with the pinned recipe, all through the
// same command layer the CLI calls.
PipelineResult run_pipeline(const fs::path& root, std::uint64_t seed, std::ostream& log) {
  const auto t0 = Clock::now();
  RunConfig config;
  config.train.seed = seed;
  config.synth.seed = seed;

  const fs::path data = root / "data";
  const fs::path seg = root / "seg";
  const fs::path cv = root / "cv";

  cmd_synth({data.string()}, config, log);
  cmd_segment({(data / "fields.tsv").string(), seg.string()}, config, log);

  CrossvalArgs cv_args;
  cv_args.manifest_path = (seg / "manifest.tsv").string();
  cv_args.cells_path = (data / "cells.tsv").string();
  cv_args.out_dir = cv.string();
  cv_args.k = 3;
  cv_args.jobs = std::min(3, worker_count());
  const Json report = cmd_crossval(cv_args, config, log);

  PipelineResult res;
  res.mean_accuracy = report.at("mean_sample_accuracy").get<double>();
  for (const auto& cls : kSyntheticCellClasses) {
    const Json& auc = report.at("cell_auc").at(cls);
    res.cell_auc[cls] = auc.is_null() ? 0.0 : auc.get<double>();
  }
  res.seconds = seconds_since(t0);
  return res;
}

bool criterion7(const std::vector<std::uint64_t>& seeds) {
  const double budget = scaled_budget(1200.0);
  // full family: 4 of 5 must pass; explicit seed subsets (manual runs) must
  // pass outright
  const int need = seeds.size() == 5 ? 4 : static_cast<int>(seeds.size());
  int passed = 0, failed = 0;
  std::ostringstream detail;

  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const std::uint64_t seed = seeds[i];
    std::cerr << "[criterion 7] seed " << seed << " starting (" << (i + 1) << "/" << seeds.size()
              << ")" << std::endl;
    const fs::path root = fresh_dir("c7_seed" + std::to_string(seed));
    std::ofstream log(root / "pipeline.log");
    const PipelineResult r = run_pipeline(root, seed, log);

    bool auc_ok = true;
    std::ostringstream aucs;
    for (const auto& cls : kSyntheticCellClasses) {
      const double a = r.cell_auc.at(cls);
      auc_ok = auc_ok && a >= 0.85;
      aucs << (cls == kSyntheticCellClasses.front() ? "" : "/") << std::fixed
           << std::setprecision(3) << a;
    }
    const bool in_budget = r.seconds <= budget;
    const bool seed_ok = r.mean_accuracy >= 0.90 && auc_ok && in_budget;
    (seed_ok ? passed : failed) += 1;

    detail << " seed " << seed << ": acc " << std::fixed << std::setprecision(3)
           << r.mean_accuracy << " aucs " << aucs.str() << " " << std::setprecision(0)
           << r.seconds << "s " << (seed_ok ? "ok" : "FAIL") << ";";
    std::cerr << "[criterion 7] seed " << seed << (seed_ok ? " ok" : " FAIL") << " acc "
              << r.mean_accuracy << " aucs " << aucs.str() << " " << r.seconds << "s" << std::endl;

    // verdict is decided as soon as no remaining outcome can change it
    if (passed >= need || failed > static_cast<int>(seeds.size()) - need) break;
  }

  const bool ok = passed >= need;
  std::ostringstream os;
  os << passed << "/" << seeds.size() << " seeds passed (need " << need
     << "): bars acc>=0.90, every cell AUC>=0.85, runtime<=" << budget_note(1200.0) << ";"
     << detail.str();
  verdict(7, ok, os.str());
  return ok;
}

// ---------------------------------------------------------------- criterion 8

bool criterion8() {
  const auto t0 = Clock::now();
  const fs::path root = fresh_dir("c8");
  RunConfig config;
  config.synth.seed = 11;
  config.synth.samples_per_class = 10;  // 30 fields, ~1200 glyphs

  std::ofstream log(root / "pipeline.log");
  cmd_synth({(root / "data").string()}, config, log);
  const Json report =
      cmd_segment({(root / "data" / "fields.tsv").string(), (root / "seg").string()}, config, log);

  const Json& m = report.at("matching");
  const double recall = m.at("recall").get<double>();
  const double precision = m.at("precision").get<double>();
  const int tp = m.at("true_positives").get<int>();
  const int fn = m.at("false_negatives").get<int>();

  const double el = seconds_since(t0);
  const double budget = scaled_budget(60.0);
  const bool ok = recall >= 0.95 && precision >= 0.95 && el <= budget;
  std::ostringstream os;
  os << tp << "/" << (tp + fn) << " glyph centers within 10px: recall " << std::fixed
     << std::setprecision(4) << recall << " (bar 0.95), precision " << precision
     << " (bar 0.95) (" << std::setprecision(1) << el << "s, bar " << budget_note(60.0) << ")";
  verdict(8, ok, os.str());
  return ok;
}

// ---------------------------------------------------------------- criterion 9

bool criterion9() {
  const auto t0 = Clock::now();
  const fs::path base = fresh_dir("c9");
  const std::uint64_t seed = 1;
  const fs::path cwd = fs::current_path();

  // run with relative paths from inside each run dir so every artifact,
  // reports included, is byte-comparable across runs
  for (const char* run : {"run_a", "run_b"}) {
    const fs::path root = base / run;
    fs::create_directories(root);
    fs::current_path(root);
    std::ofstream log("pipeline.log");
    RunConfig config;
    config.train.seed = seed;
    config.synth.seed = seed;
    cmd_synth({"data"}, config, log);
    cmd_segment({"data/fields.tsv", "seg"}, config, log);
    CrossvalArgs cv_args;
    cv_args.manifest_path = "seg/manifest.tsv";
    cv_args.cells_path = "data/cells.tsv";
    cv_args.out_dir = "cv";
    cv_args.k = 3;
    cv_args.jobs = std::min(3, worker_count());
    cmd_crossval(cv_args, config, log);
    fs::current_path(cwd);
    std::cerr << "[criterion 9] " << run << " done at " << seconds_since(t0) << "s" << std::endl;
  }

  auto collect = [](const fs::path& root) {
    std::vector<std::string> rel;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), root).generic_string());
    std::sort(rel.begin(), rel.end());
    return rel;
  };
  const auto files_a = collect(base / "run_a");
  const auto files_b = collect(base / "run_b");

  bool ok = files_a == files_b && !files_a.empty();
  int compared = 0, differing = 0;
  std::string first_diff;
  if (ok)
    for (const auto& rel : files_a) {
      ++compared;
      if (slurp(base / "run_a" / rel) != slurp(base / "run_b" / rel)) {
        ++differing;
        if (first_diff.empty()) first_diff = rel;
      }
    }
  ok = ok && differing == 0;

  const double el = seconds_since(t0);
  const double budget = 2.0 * scaled_budget(1200.0);
  ok = ok && el <= budget;
  std::ostringstream os;
  if (files_a != files_b)
    os << "file sets differ between runs (" << files_a.size() << " vs " << files_b.size() << ")";
  else
    os << compared << " files byte-identical across two seeded runs (reports, checkpoints, logs, "
       << "patches)" << (differing ? " EXCEPT " + std::to_string(differing) + " first: " + first_diff : "");
  os << " (" << std::fixed << std::setprecision(0) << el << "s, bar 2x " << budget_note(1200.0) << ")";
  verdict(9, ok, os.str());
  return ok;
}

// --------------------------------------------------------------- criterion 10

bool criterion10() {
  const auto t0 = Clock::now();
  const fs::path root = fresh_dir("c10");
  BackboneConfig backbone{16, {4, 8}};
  ModelParams params =
      ModelParams::init(backbone, {"healthy", "class-a", "class-b"}, 909, 32, 16);

  CheckpointMeta meta;
  meta.seed = 909;
  meta.train.seed = 909;
  meta.backbone = backbone;
  meta.class_names = params.class_names;
  meta.stopping_reason = "max_epochs";

  const fs::path ck = root / "model.mlck";
  save_checkpoint(params, meta, ck.string());

  CheckpointMeta meta2;
  ModelParams loaded = load_checkpoint(ck.string(), &meta2);
  bool round_trip = meta2.class_names == meta.class_names && meta2.seed == meta.seed;
  {
    auto pa = params.parameters();
    auto pb = loaded.parameters();
    round_trip = round_trip && pa.size() == pb.size();
    for (std::size_t i = 0; round_trip && i < pa.size(); ++i)
      round_trip = tensors_equal(pa[i]->value, pb[i]->value);
  }
  const fs::path ck2 = root / "model2.mlck";
  save_checkpoint(loaded, meta2, ck2.string());
  round_trip = round_trip && slurp(ck) == slurp(ck2);

  // single-byte corruption anywhere in the CRC-covered body must refuse to load
  const std::string bytes = slurp(ck);
  const std::size_t body_start = 12 + [&] {
    std::uint32_t hl;
    std::memcpy(&hl, bytes.data() + 8, 4);
    return hl;
  }();
  int detected = 0, undetected = 0;
  Rng crng(70000);
  const fs::path bad = root / "corrupt.mlck";
  for (int i = 0; i < 25; ++i) {
    std::string mutated = bytes;
    const std::size_t off =
        body_start + static_cast<std::size_t>(crng.below(bytes.size() - body_start));
    mutated[off] = static_cast<char>(mutated[off] ^ (1 + static_cast<int>(crng.below(255))));
    std::ofstream(bad, std::ios::binary).write(mutated.data(), static_cast<std::streamsize>(mutated.size()));
    try {
      load_checkpoint(bad.string());
      ++undetected;
    } catch (const Error&) {
      ++detected;
    }
  }
  // and a pure-payload flip specifically reports a checksum failure
  bool crc_typed = false;
  {
    std::string mutated = bytes;
    mutated[mutated.size() - 5] = static_cast<char>(mutated[mutated.size() - 5] ^ 0x40);
    std::ofstream(bad, std::ios::binary).write(mutated.data(), static_cast<std::streamsize>(mutated.size()));
    try {
      load_checkpoint(bad.string());
    } catch (const IntegrityError&) {
      crc_typed = true;
    } catch (const Error&) {
    }
  }

  // re-evaluation from the loaded copy reproduces metrics exactly
  std::vector<std::vector<PatchImage>> bags;
  std::vector<int> truth_pos;
  Rng brng(71000);
  for (int b = 0; b < 9; ++b) {
    std::vector<PatchImage> bag;
    const int n = 3 + static_cast<int>(brng.below(4));
    for (int j = 0; j < n; ++j) bag.push_back(random_patch(brng, "c10"));
    bags.push_back(bag);
    truth_pos.push_back(b % 2);
  }
  auto evaluate = [&](ModelParams& p) {
    std::vector<double> scores;
    std::string probs_blob;
    for (auto& bag : bags) {
      const BagPrediction pred = predict_bag(bag, p);
      scores.push_back(static_cast<double>(pred.probabilities.data[1]));
      probs_blob.append(reinterpret_cast<const char*>(pred.probabilities.data.data()),
                        pred.probabilities.data.size() * sizeof(float));
    }
    const RocCurve roc = roc_auc(scores, truth_pos);
    return std::make_pair(roc.auc, probs_blob);
  };
  const auto before = evaluate(params);
  const auto after = evaluate(loaded);
  const bool metrics_exact = before.first == after.first && before.second == after.second;

  const double el = seconds_since(t0);
  const bool ok = round_trip && detected == 25 && undetected == 0 && crc_typed && metrics_exact &&
                  el < 10.0;
  std::ostringstream os;
  os << "round trip bit-exact " << (round_trip ? "yes" : "NO") << ", " << detected
     << "/25 corruptions rejected, payload flip -> IntegrityError " << (crc_typed ? "yes" : "NO")
     << ", reloaded eval metrics identical " << (metrics_exact ? "yes" : "NO") << " (" << std::fixed
     << std::setprecision(2) << el << "s, bar 10s)";
  verdict(10, ok, os.str());
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: millie_acceptance <criterion 1..10 | all> [seeds for criterion 7]\n";
    return 2;
  }
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  if (argc > 2) {
    seeds.clear();
    for (int i = 2; i < argc; ++i) seeds.push_back(std::strtoull(argv[i], nullptr, 10));
  }

  const std::string which = argv[1];
  const std::vector<std::pair<int, std::function<bool()>>> table = {
      {1, criterion1},
      {2, criterion2},
      {3, criterion3},
      {4, criterion4},
      {5, criterion5},
      {6, criterion6},
      {7, [&] { return criterion7(seeds); }},
      {8, criterion8},
      {9, criterion9},
      {10, criterion10},
  };

  try {
    if (which == "all") {
      bool all_ok = true;
      for (const auto& [n, fn] : table) all_ok = fn() && all_ok;
      return all_ok ? 0 : 1;
    }
    const int n = std::atoi(which.c_str());
    for (const auto& [num, fn] : table)
      if (num == n) return fn() ? 0 : 1;
    std::cerr << "unknown criterion " << which << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cout << "[criterion " << which << "] FAIL: unexpected error: " << e.what() << std::endl;
    return 1;
  }
}
