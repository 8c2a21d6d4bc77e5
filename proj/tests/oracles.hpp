#pragma once

// Independent reference implementations used only by tests. Everything here
// is written the slow obvious way, on purpose, so a bug in the library and a
// bug in the oracle are unlikely to coincide.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "millie/tensor.hpp"

namespace oracles {

// Direct six-loop cross-correlation.
template <typename T>
millie::TensorT<T> conv2d_naive(const millie::TensorT<T>& x, const millie::TensorT<T>& k,
                                const millie::TensorT<T>& bias, int stride, int pad) {
  const int c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int c_out = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  millie::TensorT<T> y = millie::TensorT<T>::zeros({c_out, ho, wo});
  for (int co = 0; co < c_out; ++co)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        T acc = bias.data[static_cast<std::size_t>(co)];
        for (int ci = 0; ci < c_in; ++ci)
          for (int di = 0; di < kh; ++di)
            for (int dj = 0; dj < kw; ++dj) {
              const int iy = oy * stride + di - pad;
              const int ix = ox * stride + dj - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += x.at3(ci, iy, ix) * k.data[((static_cast<std::size_t>(co) * c_in + ci) * kh + di) * kw + dj];
            }
        y.at3(co, oy, ox) = acc;
      }
  return y;
}

template <typename T>
double max_abs_diff(const millie::TensorT<T>& a, const millie::TensorT<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

template <typename T>
double max_rel_diff(const millie::TensorT<T>& a, const millie::TensorT<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double av = static_cast<double>(a.data[i]);
    const double bv = static_cast<double>(b.data[i]);
    const double denom = std::max({std::abs(av), std::abs(bv), 1e-8});
    m = std::max(m, std::abs(av - bv) / denom);
  }
  return m;
}

// Streaming two-pass mean/variance, used by the augmentation noise tests.
struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  // population variance
};

inline MeanVar mean_var(const std::vector<double>& xs) {
  MeanVar r;
  if (xs.empty()) return r;
  double s = 0.0;
  for (double v : xs) s += v;
  r.mean = s / static_cast<double>(xs.size());
  double q = 0.0;
  for (double v : xs) q += (v - r.mean) * (v - r.mean);
  r.var = q / static_cast<double>(xs.size());
  return r;
}

}  // namespace oracles
