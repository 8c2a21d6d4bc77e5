#pragma once

// Reverse-mode autodiff on a linear tape. Ops append their backward closure
// as they execute, so the record list is already a topological order and a
// single reverse sweep propagates gradients. Closures whose output never
// received a gradient are skipped, which is what makes max-fusion training
// cheap: losing instances contribute no backward work at all.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "millie/errors.hpp"
#include "millie/ops.hpp"
#include "millie/tensor.hpp"

namespace millie {

template <typename T>
class TapeT {
 public:
  // Leaf holding a plain value. Gradients flow into it only when requested.
  int input(TensorT<T> v, bool requires_grad = false) {
    return add_node(std::move(v), requires_grad);
  }

  // Leaf bound to a parameter. After backward() the node gradient is added
  // into p.grad, so repeated tapes accumulate like repeated loss terms.
  int param(ParameterT<T>& p) {
    const int id = add_node(p.value, true);
    bound_.push_back({id, &p});
    return id;
  }

  const TensorT<T>& value(int id) const { return nodes_[check(id)].value; }

  const TensorT<T>& grad(int id) {
    Node& n = nodes_[check(id)];
    ensure_grad(n);
    return n.grad;
  }

  int conv2d(int x, int k, int b, int stride, int padding) {
    Node& nx = nodes_[check(x)];
    Node& nk = nodes_[check(k)];
    Node& nb = nodes_[check(b)];
    TensorT<T> y = ops::conv2d_forward(nx.value, nk.value, nb.value, stride, padding);
    const bool req = nx.needs_grad || nk.needs_grad || nb.needs_grad;
    const int out = add_node(std::move(y), req);
    if (req) {
      record([this, x, k, b, out, stride, padding] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        Node& ix = nodes_[x];
        Node& ik = nodes_[k];
        Node& ib = nodes_[b];
        TensorT<T>* dx = nullptr;
        if (ix.needs_grad) {
          ensure_grad(ix);
          ix.seen = true;
          dx = &ix.grad;
        }
        ensure_grad(ik);
        ensure_grad(ib);
        if (ik.needs_grad) ik.seen = true;
        if (ib.needs_grad) ib.seen = true;
        ops::conv2d_backward(ix.value, ik.value, no.grad, stride, padding, dx, ik.grad, ib.grad);
      });
    }
    return out;
  }

  int relu(int x) {
    Node& nx = nodes_[check(x)];
    const bool req = nx.needs_grad;
    const int out = add_node(ops::relu_forward(nx.value), req);
    if (req) {
      record([this, x, out] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        Node& ix = nodes_[x];
        ensure_grad(ix);
        ix.seen = true;
        ops::relu_backward(ix.value, no.grad, ix.grad);
      });
    }
    return out;
  }

  int maxpool2(int x) {
    Node& nx = nodes_[check(x)];
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    TensorT<T> y = ops::maxpool2_forward(nx.value, *argmax);
    const bool req = nx.needs_grad;
    const int out = add_node(std::move(y), req);
    if (req) {
      record([this, x, out, argmax] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        Node& ix = nodes_[x];
        ensure_grad(ix);
        ix.seen = true;
        ops::maxpool2_backward(*argmax, no.grad, ix.grad);
      });
    }
    return out;
  }

  int global_spatial_max(int x) {
    Node& nx = nodes_[check(x)];
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    TensorT<T> y = ops::global_spatial_max_forward(nx.value, *argmax);
    const bool req = nx.needs_grad;
    const int out = add_node(std::move(y), req);
    if (req) {
      record([this, x, out, argmax] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        Node& ix = nodes_[x];
        ensure_grad(ix);
        ix.seen = true;
        ops::global_spatial_max_backward(*argmax, no.grad, ix.grad);
      });
    }
    return out;
  }

  int affine(int x, int w, int b) {
    Node& nx = nodes_[check(x)];
    Node& nw = nodes_[check(w)];
    Node& nb = nodes_[check(b)];
    TensorT<T> y = ops::affine_forward(nx.value, nw.value, nb.value);
    const bool req = nx.needs_grad || nw.needs_grad || nb.needs_grad;
    const int out = add_node(std::move(y), req);
    if (req) {
      record([this, x, w, b, out] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        Node& ix = nodes_[x];
        Node& iw = nodes_[w];
        Node& ib = nodes_[b];
        TensorT<T>* dx = nullptr;
        TensorT<T>* dw = nullptr;
        TensorT<T>* db = nullptr;
        if (ix.needs_grad) {
          ensure_grad(ix);
          ix.seen = true;
          dx = &ix.grad;
        }
        if (iw.needs_grad) {
          ensure_grad(iw);
          iw.seen = true;
          dw = &iw.grad;
        }
        if (ib.needs_grad) {
          ensure_grad(ib);
          ib.seen = true;
          db = &ib.grad;
        }
        ops::affine_backward(ix.value, iw.value, no.grad, dx, dw, db);
      });
    }
    return out;
  }

  int softmax(int x) {
    Node& nx = nodes_[check(x)];
    const bool req = nx.needs_grad;
    const int out = add_node(ops::softmax_forward(nx.value), req);
    if (req) {
      record([this, x, out] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        Node& ix = nodes_[x];
        ensure_grad(ix);
        ix.seen = true;
        ops::softmax_backward(no.value, no.grad, ix.grad);
      });
    }
    return out;
  }

  int cross_entropy(int probs, int target_class) {
    Node& np = nodes_[check(probs)];
    const T loss = ops::cross_entropy_forward(np.value, target_class);
    const bool req = np.needs_grad;
    const int out = add_node(TensorT<T>::scalar(loss), req);
    if (req) {
      record([this, probs, target_class, out] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        Node& ip = nodes_[probs];
        ensure_grad(ip);
        ip.seen = true;
        ops::cross_entropy_backward(ip.value, target_class, no.grad.data[0], ip.grad);
      });
    }
    return out;
  }

  // Rows must share one shape; output is [N, len].
  int stack_rows(const std::vector<int>& rows) {
    if (rows.empty()) throw EmptyBagError("stack_rows needs at least one row");
    const TensorT<T>& first = nodes_[check(rows[0])].value;
    if (first.rank() != 1) throw DimensionError("stack_rows expects rank-1 rows");
    const int len = first.dim(0);
    bool req = false;
    TensorT<T> y = TensorT<T>::zeros({static_cast<int>(rows.size()), len});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Node& nr = nodes_[check(rows[i])];
      if (!nr.value.same_shape(first))
        throw DimensionError("stack_rows shape mismatch at row " + std::to_string(i) + ": " +
                             shape_str(nr.value.shape()) + " vs " + shape_str(first.shape()));
      req = req || nr.needs_grad;
      for (int l = 0; l < len; ++l) y.at2(static_cast<int>(i), l) = nr.value.data[static_cast<std::size_t>(l)];
    }
    const int out = add_node(std::move(y), req);
    if (req) {
      auto rows_copy = std::make_shared<std::vector<int>>(rows);
      record([this, rows_copy, out, len] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        for (std::size_t i = 0; i < rows_copy->size(); ++i) {
          Node& nr = nodes_[(*rows_copy)[i]];
          if (!nr.needs_grad) continue;
          ensure_grad(nr);
          nr.seen = true;
          for (int l = 0; l < len; ++l)
            nr.grad.data[static_cast<std::size_t>(l)] += no.grad.at2(static_cast<int>(i), l);
        }
      });
    }
    return out;
  }

  // Eq.2 fusion: elementwise max over instance rows, ties to lowest index.
  int max_rows(int f, std::vector<int>* argmax_out = nullptr) {
    Node& nf = nodes_[check(f)];
    auto argmax = std::make_shared<std::vector<int>>();
    TensorT<T> y = ops::max_reduce_rows_forward(nf.value, *argmax);
    if (argmax_out != nullptr) *argmax_out = *argmax;
    const bool req = nf.needs_grad;
    const int out = add_node(std::move(y), req);
    if (req) {
      record([this, f, out, argmax] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        Node& in = nodes_[f];
        ensure_grad(in);
        in.seen = true;
        ops::max_reduce_rows_backward(*argmax, no.grad, in.grad);
      });
    }
    return out;
  }

  // Scalar projection sum_i w_i * x_i; the test harness uses it to turn an
  // arbitrary output into a scalar for finite-difference checks.
  int weighted_sum(int x, TensorT<T> weights) {
    Node& nx = nodes_[check(x)];
    if (weights.numel() != nx.value.numel())
      throw DimensionError("weighted_sum weight count " + std::to_string(weights.numel()) +
                           " does not match value count " + std::to_string(nx.value.numel()));
    T acc = T(0);
    for (std::size_t i = 0; i < weights.data.size(); ++i) acc += weights.data[i] * nx.value.data[i];
    const bool req = nx.needs_grad;
    const int out = add_node(TensorT<T>::scalar(acc), req);
    if (req) {
      auto w = std::make_shared<TensorT<T>>(std::move(weights));
      record([this, x, out, w] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        Node& ix = nodes_[x];
        ensure_grad(ix);
        ix.seen = true;
        const T g = no.grad.data[0];
        for (std::size_t i = 0; i < w->data.size(); ++i) ix.grad.data[i] += g * w->data[i];
      });
    }
    return out;
  }

  int add(int a, int b) {
    Node& na = nodes_[check(a)];
    Node& nb = nodes_[check(b)];
    if (!na.value.same_shape(nb.value))
      throw DimensionError("add shape mismatch: " + shape_str(na.value.shape()) + " vs " +
                           shape_str(nb.value.shape()));
    TensorT<T> y = na.value;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += nb.value.data[i];
    const bool req = na.needs_grad || nb.needs_grad;
    const int out = add_node(std::move(y), req);
    if (req) {
      record([this, a, b, out] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        for (int id : {a, b}) {
          Node& in = nodes_[id];
          if (!in.needs_grad) continue;
          ensure_grad(in);
          in.seen = true;
          for (std::size_t i = 0; i < in.grad.data.size(); ++i) in.grad.data[i] += no.grad.data[i];
        }
      });
    }
    return out;
  }

  int mul(int a, int b) {
    Node& na = nodes_[check(a)];
    Node& nb = nodes_[check(b)];
    if (!na.value.same_shape(nb.value))
      throw DimensionError("mul shape mismatch: " + shape_str(na.value.shape()) + " vs " +
                           shape_str(nb.value.shape()));
    TensorT<T> y = na.value;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] *= nb.value.data[i];
    const bool req = na.needs_grad || nb.needs_grad;
    const int out = add_node(std::move(y), req);
    if (req) {
      record([this, a, b, out] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        Node& ia = nodes_[a];
        Node& ib = nodes_[b];
        if (ia.needs_grad) {
          ensure_grad(ia);
          ia.seen = true;
          for (std::size_t i = 0; i < ia.grad.data.size(); ++i)
            ia.grad.data[i] += no.grad.data[i] * ib.value.data[i];
        }
        if (ib.needs_grad) {
          ensure_grad(ib);
          ib.seen = true;
          for (std::size_t i = 0; i < ib.grad.data.size(); ++i)
            ib.grad.data[i] += no.grad.data[i] * ia.value.data[i];
        }
      });
    }
    return out;
  }

  int scale(int x, T s) {
    Node& nx = nodes_[check(x)];
    TensorT<T> y = nx.value;
    for (auto& v : y.data) v *= s;
    const bool req = nx.needs_grad;
    const int out = add_node(std::move(y), req);
    if (req) {
      record([this, x, s, out] {
        Node& no = nodes_[out];
        if (!no.seen) return;
        Node& ix = nodes_[x];
        ensure_grad(ix);
        ix.seen = true;
        for (std::size_t i = 0; i < ix.grad.data.size(); ++i) ix.grad.data[i] += s * no.grad.data[i];
      });
    }
    return out;
  }

  // Seeds the root with gradient 1, sweeps the records in reverse, then adds
  // every bound parameter node's gradient into its ParameterT::grad.
  void backward(int root) {
    Node& nr = nodes_[check(root)];
    if (nr.value.numel() != 1)
      throw DimensionError("backward root must be a scalar, got shape " +
                           shape_str(nr.value.shape()));
    if (!nr.needs_grad)
      throw TrainingError("backward root does not depend on any differentiable leaf");
    ensure_grad(nr);
    nr.grad.data[0] = T(1);
    nr.seen = true;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    for (auto& [id, p] : bound_) {
      Node& n = nodes_[id];
      if (!n.seen) continue;
      for (std::size_t i = 0; i < p->grad.data.size(); ++i) p->grad.data[i] += n.grad.data[i];
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;  // allocated on first touch
    bool needs_grad = false;
    bool seen = false;
  };

  int add_node(TensorT<T> v, bool needs_grad) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void record(std::function<void()> fn) { records_.push_back(std::move(fn)); }

  void ensure_grad(Node& n) {
    if (n.grad.numel() == 0) n.grad = TensorT<T>::zeros(n.value.shape());
  }

  int check(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw IndexError("tape node id " + std::to_string(id) + " out of range");
    return id;
  }

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> records_;
  std::vector<std::pair<int, ParameterT<T>*>> bound_;
};

using Tape = TapeT<float>;

// One SGD step over a parameter set: value -= lr * grad, then grads are
// zeroed. Rejects non-finite gradients by name so a diverging run fails
// loudly instead of writing NaNs into a checkpoint.
template <typename T>
void sgd_step(const std::vector<ParameterT<T>*>& params, T lr) {
  for (ParameterT<T>* p : params) {
    for (const T g : p->grad.data) {
      if (!std::isfinite(static_cast<double>(g)))
        throw TrainingError("non-finite gradient in parameter '" + p->name + "'");
    }
  }
  for (ParameterT<T>* p : params) {
    for (std::size_t i = 0; i < p->value.data.size(); ++i) p->value.data[i] -= lr * p->grad.data[i];
    p->zero_grad();
  }
}

}  // namespace millie
