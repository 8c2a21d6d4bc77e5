#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "millie/errors.hpp"

namespace millie {

// Dense row-major n-d array. Shape is fixed at construction; element values
// are mutated only by the owning op (optimizer step, tape writeback).
template <typename T>
class TensorT {
 public:
  std::vector<T> data;

  TensorT() = default;

  TensorT(std::vector<int> shape, std::vector<T> values)
      : data(std::move(values)), shape_(std::move(shape)) {
    validate();
  }

  static TensorT zeros(std::vector<int> shape) {
    TensorT t;
    t.shape_ = std::move(shape);
    t.data.assign(static_cast<std::size_t>(product(t.shape_)), T(0));
    t.validate();
    return t;
  }

  static TensorT full(std::vector<int> shape, T v) {
    TensorT t = zeros(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static TensorT vector(std::vector<T> values) {
    const int n = static_cast<int>(values.size());
    return TensorT({n}, std::move(values));
  }

  static TensorT scalar(T v) { return TensorT({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  int rank() const { return static_cast<int>(shape_.size()); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  T& at2(int i, int j) { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
  const T& at2(int i, int j) const { return data[static_cast<std::size_t>(i) * dim(1) + j]; }

  // [C,H,W] indexing
  T& at3(int c, int i, int j) {
    return data[(static_cast<std::size_t>(c) * dim(1) + i) * dim(2) + j];
  }
  const T& at3(int c, int i, int j) const {
    return data[(static_cast<std::size_t>(c) * dim(1) + i) * dim(2) + j];
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out = TensorT<U>::zeros(shape_);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  static std::int64_t product(const std::vector<int>& shape) {
    std::int64_t p = 1;
    for (int d : shape) p *= d;
    return p;
  }

 private:
  std::vector<int> shape_;

  void validate() const {
    for (std::size_t a = 0; a < shape_.size(); ++a) {
      if (shape_[a] <= 0) {
        throw DimensionError("tensor axis " + std::to_string(a) + " must be positive, got " +
                             std::to_string(shape_[a]));
      }
    }
    if (static_cast<std::int64_t>(data.size()) != product(shape_)) {
      throw DimensionError("tensor data size " + std::to_string(data.size()) +
                           " does not match shape product " + std::to_string(product(shape_)));
    }
  }
};

// Trainable value plus its additive gradient accumulator.
template <typename T>
struct ParameterT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;

  ParameterT() = default;
  ParameterT(std::string n, TensorT<T> v)
      : name(std::move(n)), value(std::move(v)), grad(TensorT<T>::zeros(value.shape())) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

using Tensor = TensorT<float>;
using Parameter = ParameterT<float>;

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace millie
