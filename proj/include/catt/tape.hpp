// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "catt/kernels.hpp"
#include "catt/param_store.hpp"
#include "catt/tensor.hpp"

namespace catt {

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode differentiation over a recorded sequence of tensor ops.
// With gradients disabled the tape only evaluates, which is how the decoder
// runs the same layer code as training.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() {
    nodes_.clear();
    param_nodes_.clear();
  }

  Var constant(Tensor<T> value);
  // Leaf bound to a parameter; gradients accumulate into `p.grad`.
  Var param(Parameter<T>& p);
  // Read-only parameter leaf (no gradient).
  Var param(const Parameter<T>& p);
  // Leaf viewing an external tensor without copying; `t` must outlive use.
  Var reference(const Tensor<T>& t);

  const Tensor<T>& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Records a node computed outside the built-in ops. `fn` must accumulate
  // into the inputs via accumulate().
  Var custom(Tensor<T> value, std::span<const Var> inputs, BackwardFn fn);

  // Adds `g` into the gradient of `v` (no-op when `v` needs no gradient).
  void accumulate(Var v, const Tensor<T>& g);
  Tensor<T>* grad_buffer(Var v);

  void backward(Var loss);

  // ---- ops ----
  Var matmul(Var a, Var b);
  Var linear(Var x, Var w, Var b);  // x·w + b (b broadcast over rows)
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // a[r×c] + row[1×c]
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T s);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var layernorm(Var x, Var gain, Var bias, T eps = T(1e-5));
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var slice_rows(Var a, std::size_t begin, std::size_t end);
  Var gather_rows(Var table, std::span<const int> indices);
  // Row t*|b|+u = a[t] + b[u].
  Var pair_add(Var a, Var b);
  Var attention(Var q, Var k, Var v, std::size_t heads, std::vector<std::size_t> limits);
  Var sum(Var a);
  // a + s*b for scalars (1×1).
  Var axpy(Var a, T s, Var b);

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    Tensor<T>* ext_grad = nullptr;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var push(Tensor<T> value, bool requires_grad, BackwardFn fn);
  bool any_requires(std::initializer_list<Var> vs) const;
  Node& node(Var v) { return nodes_.at(v.id); }
  const Node& node(Var v) const { return nodes_.at(v.id); }

  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::unordered_map<const void*, int> param_nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace catt
