#pragma once

// Central-difference gradient checking. The builder callback reconstructs the
// graph from scratch on every evaluation so perturbed leaves flow through the
// same code path the tape uses.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "millie/tape.hpp"
#include "millie/tensor.hpp"

namespace millie {

template <typename T>
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "param[i]" of the worst element
};

// build(tape, leaves) wires the graph and returns the scalar root id. The
// leaves are registered as differentiable inputs in the given order.
template <typename T>
GradCheckResult<T> finite_diff_check(std::vector<TensorT<T>> leaves,
                                     const std::function<int(TapeT<T>&, const std::vector<int>&)>& build,
                                     double eps) {
  auto eval = [&](const std::vector<TensorT<T>>& vals) {
    TapeT<T> tape;
    std::vector<int> ids;
    ids.reserve(vals.size());
    for (const auto& v : vals) ids.push_back(tape.input(v, true));
    const int root = build(tape, ids);
    return static_cast<double>(tape.value(root).data[0]);
  };

  // analytic pass
  TapeT<T> tape;
  std::vector<int> ids;
  ids.reserve(leaves.size());
  for (const auto& v : leaves) ids.push_back(tape.input(v, true));
  const int root = build(tape, ids);
  tape.backward(root);

  // Errors are measured against the gradient scale of each leaf, not each
  // element alone: central differences cannot resolve elements far below
  // ulp(f)/eps, so a per-element quotient would only report that noise.
  GradCheckResult<T> res;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const TensorT<T>& g = tape.grad(ids[li]);
    std::vector<double> numeric(leaves[li].data.size());
    double scale = 1e-8;
    for (std::size_t i = 0; i < leaves[li].data.size(); ++i) {
      std::vector<TensorT<T>> plus = leaves;
      std::vector<TensorT<T>> minus = leaves;
      plus[li].data[i] = static_cast<T>(static_cast<double>(plus[li].data[i]) + eps);
      minus[li].data[i] = static_cast<T>(static_cast<double>(minus[li].data[i]) - eps);
      numeric[i] = (eval(plus) - eval(minus)) / (2.0 * eps);
      scale = std::max({scale, std::abs(numeric[i]), std::abs(static_cast<double>(g.data[i]))});
    }
    for (std::size_t i = 0; i < leaves[li].data.size(); ++i) {
      const double rel = std::abs(numeric[i] - static_cast<double>(g.data[i])) / scale;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = "leaf" + std::to_string(li) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace millie
