#pragma once

// Dense kernels shared by the taped (training) and plain (inference) paths.
// Everything is templated on the scalar type: float for real work, double
// for the gradient-check shadow used by the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "millie/errors.hpp"
#include "millie/tensor.hpp"

namespace millie::ops {

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * K;
    T* crow = c + static_cast<std::size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const T av = arow[k];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<std::size_t>(k) * N;
      for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_acc_nt(const T* a, const T* b, T* c, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * K;
    T* crow = c + static_cast<std::size_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const T* brow = b + static_cast<std::size_t>(j) * K;
      T acc = T(0);
      for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
      crow[j] += acc;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_acc_tn(const T* a, const T* b, T* c, int M, int K, int N) {
  for (int k = 0; k < K; ++k) {
    const T* arow = a + static_cast<std::size_t>(k) * M;
    const T* brow = b + static_cast<std::size_t>(k) * N;
    for (int i = 0; i < M; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + static_cast<std::size_t>(i) * N;
      for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
}

struct Conv2dDims {
  int c_in, h, w;
  int c_out, kh, kw;
  int stride, pad;
  int h_out, w_out;
};

template <typename T>
Conv2dDims conv2d_dims(const TensorT<T>& x, const TensorT<T>& kernels, const TensorT<T>& bias,
                       int stride, int padding) {
  if (x.rank() != 3)
    throw DimensionError("conv2d input must be [C,H,W], got rank " + std::to_string(x.rank()));
  if (kernels.rank() != 4)
    throw DimensionError("conv2d kernels must be [C_out,C_in,kH,kW], got rank " +
                         std::to_string(kernels.rank()));
  if (bias.rank() != 1)
    throw DimensionError("conv2d bias must be rank 1, got rank " + std::to_string(bias.rank()));
  Conv2dDims d;
  d.c_in = x.dim(0);
  d.h = x.dim(1);
  d.w = x.dim(2);
  d.c_out = kernels.dim(0);
  d.kh = kernels.dim(2);
  d.kw = kernels.dim(3);
  d.stride = stride;
  d.pad = padding;
  if (kernels.dim(1) != d.c_in)
    throw DimensionError("conv2d channel axis mismatch: input C_in=" + std::to_string(d.c_in) +
                         " vs kernel C_in=" + std::to_string(kernels.dim(1)));
  if (bias.dim(0) != d.c_out)
    throw DimensionError("conv2d bias axis mismatch: C_out=" + std::to_string(d.c_out) +
                         " vs bias length " + std::to_string(bias.dim(0)));
  if (stride < 1) throw DimensionError("conv2d stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0)
    throw DimensionError("conv2d padding must be >= 0, got " + std::to_string(padding));
  if (d.kh > d.h + 2 * padding)
    throw DimensionError("conv2d kernel height " + std::to_string(d.kh) +
                         " exceeds padded input height " + std::to_string(d.h + 2 * padding));
  if (d.kw > d.w + 2 * padding)
    throw DimensionError("conv2d kernel width " + std::to_string(d.kw) +
                         " exceeds padded input width " + std::to_string(d.w + 2 * padding));
  d.h_out = (d.h + 2 * padding - d.kh) / stride + 1;
  d.w_out = (d.w + 2 * padding - d.kw) / stride + 1;
  return d;
}

template <typename T>
void im2col(const T* x, const Conv2dDims& d, T* cols) {
  // cols: [C_in*kh*kw, h_out*w_out]
  const int plane = d.h * d.w;
  const int ncols = d.h_out * d.w_out;
  std::size_t r = 0;
  for (int c = 0; c < d.c_in; ++c) {
    for (int di = 0; di < d.kh; ++di) {
      for (int dj = 0; dj < d.kw; ++dj, ++r) {
        T* out = cols + r * ncols;
        const T* src = x + static_cast<std::size_t>(c) * plane;
        for (int oy = 0; oy < d.h_out; ++oy) {
          const int iy = oy * d.stride + di - d.pad;
          T* orow = out + static_cast<std::size_t>(oy) * d.w_out;
          if (iy < 0 || iy >= d.h) {
            std::fill(orow, orow + d.w_out, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * d.w;
          for (int ox = 0; ox < d.w_out; ++ox) {
            const int ix = ox * d.stride + dj - d.pad;
            orow[ox] = (ix >= 0 && ix < d.w) ? srow[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const T* cols, const Conv2dDims& d, T* x) {
  const int plane = d.h * d.w;
  const int ncols = d.h_out * d.w_out;
  std::size_t r = 0;
  for (int c = 0; c < d.c_in; ++c) {
    for (int di = 0; di < d.kh; ++di) {
      for (int dj = 0; dj < d.kw; ++dj, ++r) {
        const T* in = cols + r * ncols;
        T* dst = x + static_cast<std::size_t>(c) * plane;
        for (int oy = 0; oy < d.h_out; ++oy) {
          const int iy = oy * d.stride + di - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          const T* irow = in + static_cast<std::size_t>(oy) * d.w_out;
          T* drow = dst + static_cast<std::size_t>(iy) * d.w;
          for (int ox = 0; ox < d.w_out; ++ox) {
            const int ix = ox * d.stride + dj - d.pad;
            if (ix >= 0 && ix < d.w) drow[ix] += irow[ox];
          }
        }
      }
    }
  }
}

// Cross-correlation (no kernel flip), im2col + GEMM path.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& kernels, const TensorT<T>& bias,
                          int stride, int padding) {
  const Conv2dDims d = conv2d_dims(x, kernels, bias, stride, padding);
  const int K = d.c_in * d.kh * d.kw;
  const int N = d.h_out * d.w_out;
  std::vector<T> cols(static_cast<std::size_t>(K) * N);
  im2col(x.data.data(), d, cols.data());
  TensorT<T> y = TensorT<T>::zeros({d.c_out, d.h_out, d.w_out});
  gemm_acc(kernels.data.data(), cols.data(), y.data.data(), d.c_out, K, N);
  for (int co = 0; co < d.c_out; ++co) {
    const T b = bias.data[static_cast<std::size_t>(co)];
    T* row = y.data.data() + static_cast<std::size_t>(co) * N;
    for (int j = 0; j < N; ++j) row[j] += b;
  }
  return y;
}

// Gradients for input (optional), kernels and bias. Accumulates into the
// provided buffers.
template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& kernels, const TensorT<T>& dy,
                     int stride, int padding, TensorT<T>* dx, TensorT<T>& dkernels,
                     TensorT<T>& dbias) {
  TensorT<T> bias_dummy = TensorT<T>::zeros({kernels.dim(0)});
  const Conv2dDims d = conv2d_dims(x, kernels, bias_dummy, stride, padding);
  const int K = d.c_in * d.kh * d.kw;
  const int N = d.h_out * d.w_out;

  for (int co = 0; co < d.c_out; ++co) {
    const T* row = dy.data.data() + static_cast<std::size_t>(co) * N;
    T acc = T(0);
    for (int j = 0; j < N; ++j) acc += row[j];
    dbias.data[static_cast<std::size_t>(co)] += acc;
  }

  std::vector<T> cols(static_cast<std::size_t>(K) * N);
  im2col(x.data.data(), d, cols.data());
  // dK[c_out, K] += dY[c_out, N] * cols[K, N]^T
  gemm_acc_nt(dy.data.data(), cols.data(), dkernels.data.data(), d.c_out, N, K);

  if (dx != nullptr) {
    std::vector<T> dcols(static_cast<std::size_t>(K) * N, T(0));
    // dcols[K, N] += kernels[c_out, K]^T * dY[c_out, N]
    gemm_acc_tn(kernels.data.data(), dy.data.data(), dcols.data(), K, d.c_out, N);
    col2im_acc(dcols.data(), d, dx->data.data());
  }
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> y = x;
  for (auto& v : y.data) v = std::max(v, T(0));
  return y;
}

// Gradient passes where x > 0; the subgradient at exactly 0 is taken as 0.
template <typename T>
void relu_backward(const TensorT<T>& x, const TensorT<T>& dy, TensorT<T>& dx) {
  for (std::size_t i = 0; i < x.data.size(); ++i)
    if (x.data[i] > T(0)) dx.data[i] += dy.data[i];
}

// y = x * W + b for a single input vector.
template <typename T>
TensorT<T> affine_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  if (x.rank() != 1 || w.rank() != 2 || b.rank() != 1)
    throw DimensionError("affine expects x[n], W[n,m], b[m]");
  const int n = x.dim(0), m = w.dim(1);
  if (w.dim(0) != n)
    throw DimensionError("affine inner axis mismatch: x has " + std::to_string(n) +
                         ", W rows are " + std::to_string(w.dim(0)));
  if (b.dim(0) != m)
    throw DimensionError("affine bias axis mismatch: W cols are " + std::to_string(m) +
                         ", b length is " + std::to_string(b.dim(0)));
  TensorT<T> y = b;
  gemm_acc(x.data.data(), w.data.data(), y.data.data(), 1, n, m);
  return y;
}

template <typename T>
void affine_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy,
                     TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db) {
  const int n = x.dim(0), m = w.dim(1);
  if (dx != nullptr) {
    // dx[i] += sum_j dy[j] * W[i,j]
    gemm_acc_nt(dy.data.data(), w.data.data(), dx->data.data(), 1, m, n);
  }
  if (dw != nullptr) {
    for (int i = 0; i < n; ++i) {
      const T xv = x.data[static_cast<std::size_t>(i)];
      if (xv == T(0)) continue;
      T* row = dw->data.data() + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) row[j] += xv * dy.data[static_cast<std::size_t>(j)];
    }
  }
  if (db != nullptr)
    for (int j = 0; j < m; ++j) db->data[static_cast<std::size_t>(j)] += dy.data[static_cast<std::size_t>(j)];
}

// Numerically stabilized: the max logit is subtracted before exponentiation.
template <typename T>
TensorT<T> softmax_forward(const TensorT<T>& logits) {
  if (logits.rank() != 1 || logits.dim(0) < 2)
    throw DimensionError("softmax expects a vector of at least 2 logits, got shape " +
                         shape_str(logits.shape()));
  TensorT<T> y = logits;
  const T m = *std::max_element(y.data.begin(), y.data.end());
  T sum = T(0);
  for (auto& v : y.data) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : y.data) v /= sum;
  return y;
}

template <typename T>
void softmax_backward(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>& dx) {
  T dot = T(0);
  for (std::size_t i = 0; i < y.data.size(); ++i) dot += dy.data[i] * y.data[i];
  for (std::size_t i = 0; i < y.data.size(); ++i) dx.data[i] += y.data[i] * (dy.data[i] - dot);
}

inline constexpr double kCrossEntropyEps = 1e-12;

template <typename T>
T cross_entropy_forward(const TensorT<T>& probs, int target_class) {
  if (target_class < 0 || target_class >= probs.dim(0))
    throw IndexError("cross_entropy target class " + std::to_string(target_class) +
                     " out of range [0," + std::to_string(probs.dim(0)) + ")");
  const T p = std::max(probs.data[static_cast<std::size_t>(target_class)], T(kCrossEntropyEps));
  return -std::log(p);
}

template <typename T>
void cross_entropy_backward(const TensorT<T>& probs, int target_class, T dloss, TensorT<T>& dprobs) {
  const T p = std::max(probs.data[static_cast<std::size_t>(target_class)], T(kCrossEntropyEps));
  if (probs.data[static_cast<std::size_t>(target_class)] > T(kCrossEntropyEps))
    dprobs.data[static_cast<std::size_t>(target_class)] += -dloss / p;
  // below the clamp the loss is locally constant in the target probability
}

// Elementwise max over instance rows. Ties go to the lowest instance index.
template <typename T>
TensorT<T> max_reduce_rows_forward(const TensorT<T>& f, std::vector<int>& argmax) {
  if (f.rank() != 2) throw DimensionError("max_reduce expects [N, n_f], got " + shape_str(f.shape()));
  const int n = f.dim(0), nf = f.dim(1);
  if (n < 1) throw EmptyBagError("max_reduce over an empty bag");
  TensorT<T> fused = TensorT<T>::zeros({nf});
  argmax.assign(static_cast<std::size_t>(nf), 0);
  for (int l = 0; l < nf; ++l) fused.data[static_cast<std::size_t>(l)] = f.at2(0, l);
  for (int i = 1; i < n; ++i) {
    for (int l = 0; l < nf; ++l) {
      const T v = f.at2(i, l);
      if (v > fused.data[static_cast<std::size_t>(l)]) {
        fused.data[static_cast<std::size_t>(l)] = v;
        argmax[static_cast<std::size_t>(l)] = i;
      }
    }
  }
  return fused;
}

template <typename T>
void max_reduce_rows_backward(const std::vector<int>& argmax, const TensorT<T>& dy, TensorT<T>& df) {
  const int nf = dy.dim(0);
  for (int l = 0; l < nf; ++l)
    df.at2(argmax[static_cast<std::size_t>(l)], l) += dy.data[static_cast<std::size_t>(l)];
}

// 2x2 max pooling, stride 2. Both spatial dims must be even.
template <typename T>
TensorT<T> maxpool2_forward(const TensorT<T>& x, std::vector<std::int64_t>& argmax) {
  if (x.rank() != 3) throw DimensionError("maxpool2 expects [C,H,W], got " + shape_str(x.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw DimensionError("maxpool2 requires even spatial dims, got " + shape_str(x.shape()));
  const int ho = h / 2, wo = w / 2;
  TensorT<T> y = TensorT<T>::zeros({c, ho, wo});
  argmax.assign(y.data.size(), 0);
  std::size_t o = 0;
  for (int ch = 0; ch < c; ++ch) {
    const std::size_t base = static_cast<std::size_t>(ch) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++o) {
        std::int64_t best_idx = static_cast<std::int64_t>(base + static_cast<std::size_t>(2 * oy) * w + 2 * ox);
        T best = x.data[static_cast<std::size_t>(best_idx)];
        const int iy0 = 2 * oy, ix0 = 2 * ox;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::int64_t idx =
                static_cast<std::int64_t>(base + static_cast<std::size_t>(iy0 + dy) * w + (ix0 + dx));
            const T v = x.data[static_cast<std::size_t>(idx)];
            if (v > best) {
              best = v;
              best_idx = idx;
            }
          }
        y.data[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  return y;
}

template <typename T>
void maxpool2_backward(const std::vector<std::int64_t>& argmax, const TensorT<T>& dy, TensorT<T>& dx) {
  for (std::size_t o = 0; o < dy.data.size(); ++o)
    dx.data[static_cast<std::size_t>(argmax[o])] += dy.data[o];
}

// Max over the spatial plane of each channel; first maximum wins on ties.
template <typename T>
TensorT<T> global_spatial_max_forward(const TensorT<T>& x, std::vector<std::int64_t>& argmax) {
  if (x.rank() != 3)
    throw DimensionError("global_spatial_max expects [C,H,W], got " + shape_str(x.shape()));
  const int c = x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  TensorT<T> y = TensorT<T>::zeros({c});
  argmax.assign(static_cast<std::size_t>(c), 0);
  for (int ch = 0; ch < c; ++ch) {
    const std::size_t base = static_cast<std::size_t>(ch) * plane;
    T best = x.data[base];
    std::size_t best_idx = base;
    for (std::size_t i = 1; i < plane; ++i) {
      if (x.data[base + i] > best) {
        best = x.data[base + i];
        best_idx = base + i;
      }
    }
    y.data[static_cast<std::size_t>(ch)] = best;
    argmax[static_cast<std::size_t>(ch)] = static_cast<std::int64_t>(best_idx);
  }
  return y;
}

template <typename T>
void global_spatial_max_backward(const std::vector<std::int64_t>& argmax, const TensorT<T>& dy,
                                 TensorT<T>& dx) {
  for (std::size_t c = 0; c < dy.data.size(); ++c)
    dx.data[static_cast<std::size_t>(argmax[c])] += dy.data[c];
}

// Exact box-filter resampling with fractional source windows; accumulation
// runs in double regardless of T so repeated runs are identical.
template <typename T>
void resize_area_plane(const T* src, int h, int w, T* dst, int ho, int wo) {
  const double sy = static_cast<double>(h) / ho;
  const double sx = static_cast<double>(w) / wo;
  const double inv_area = 1.0 / (sy * sx);
  for (int oy = 0; oy < ho; ++oy) {
    const double y0 = oy * sy, y1 = (oy + 1) * sy;
    const int iy0 = static_cast<int>(std::floor(y0));
    const int iy1 = std::min(h, static_cast<int>(std::ceil(y1)));
    for (int ox = 0; ox < wo; ++ox) {
      const double x0 = ox * sx, x1 = (ox + 1) * sx;
      const int ix0 = static_cast<int>(std::floor(x0));
      const int ix1 = std::min(w, static_cast<int>(std::ceil(x1)));
      double acc = 0.0;
      for (int iy = iy0; iy < iy1; ++iy) {
        const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
        const T* row = src + static_cast<std::size_t>(iy) * w;
        double racc = 0.0;
        for (int ix = ix0; ix < ix1; ++ix) {
          const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
          racc += wx * static_cast<double>(row[ix]);
        }
        acc += wy * racc;
      }
      dst[static_cast<std::size_t>(oy) * wo + ox] = static_cast<T>(acc * inv_area);
    }
  }
}

}  // namespace millie::ops
