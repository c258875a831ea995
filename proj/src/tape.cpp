// SPDX-License-Identifier: Apache-2.0
#include "catt/tape.hpp"

#include <memory>

namespace catt {

template <typename T>
Var Tape<T>::push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
bool Tape<T>::any_requires(std::initializer_list<Var> vs) const {
  if (!grad_enabled_) return false;
  for (Var v : vs) {
    if (node(v).requires_grad) return true;
  }
  return false;
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  return push(std::move(value), false, nullptr);
}

template <typename T>
Var Tape<T>::param(Parameter<T>& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{it->second};
  Node n;
  n.ref = &p.value;
  n.ext_grad = &p.grad;
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var{id};
}

template <typename T>
Var Tape<T>::param(const Parameter<T>& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{it->second};
  Node n;
  n.ref = &p.value;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var{id};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  const Node& n = node(v);
  return n.ref ? *n.ref : n.value;
}

template <typename T>
Var Tape<T>::reference(const Tensor<T>& t) {
  Node n;
  n.ref = &t;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::custom(Tensor<T> value, std::span<const Var> inputs, BackwardFn fn) {
  bool req = false;
  for (Var v : inputs) req = req || (grad_enabled_ && node(v).requires_grad);
  return push(std::move(value), req, std::move(fn));
}

template <typename T>
Tensor<T>* Tape<T>::grad_buffer(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (n.ext_grad) return n.ext_grad;
  if (n.grad.empty()) n.grad = Tensor<T>(value(v).shape(), T(0));
  return &n.grad;
}

template <typename T>
void Tape<T>::accumulate(Var v, const Tensor<T>& g) {
  Tensor<T>* buf = grad_buffer(v);
  if (!buf) return;
  if (buf->size() != g.size()) throw std::logic_error("gradient shape mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) (*buf)[i] += g[i];
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (!grad_enabled_) throw std::logic_error("backward on a tape without gradients");
  if (nodes_.empty() || !loss.valid() || loss.id >= static_cast<int>(nodes_.size())) {
    throw std::logic_error("backward without a recorded forward pass");
  }
  if (value(loss).size() != 1) throw std::invalid_argument("backward needs a scalar loss");
  Node& root = node(loss);
  if (!root.requires_grad) return;  // constant loss: every gradient stays zero
  if (root.ext_grad) {
    (*root.ext_grad)[0] += T(1);
    return;
  }
  if (root.grad.empty()) root.grad = Tensor<T>(value(loss).shape(), T(0));
  root.grad[0] += T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    // Move out so the closure may freely touch other nodes.
    Tensor<T> g = std::move(n.grad);
    n.backward(*this, g);
    n.grad = Tensor<T>();
  }
}

// ---------------------------------------------------------------------------

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  Tensor<T> out = kernels::matmul(value(a), value(b));
  return push(std::move(out), any_requires({a, b}), [a, b](Tape& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) kernels::matmul_nt_acc(g, t.value(b), *ga);
    if (auto* gb = t.grad_buffer(b)) kernels::matmul_tn_acc(t.value(a), g, *gb);
  });
}

template <typename T>
Var Tape<T>::linear(Var x, Var w, Var b) {
  Tensor<T> out = kernels::matmul(value(x), value(w));
  const Tensor<T>& bias = value(b);
  if (bias.size() != out.cols()) throw std::invalid_argument("linear bias size mismatch");
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias[j];
  return push(std::move(out), any_requires({x, w, b}),
              [x, w, b](Tape& t, const Tensor<T>& g) {
                if (auto* gx = t.grad_buffer(x)) kernels::matmul_nt_acc(g, t.value(w), *gx);
                if (auto* gw = t.grad_buffer(w)) kernels::matmul_tn_acc(t.value(x), g, *gw);
                if (auto* gb = t.grad_buffer(b)) {
                  for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) (*gb)[j] += g(i, j);
                }
              });
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  const Tensor<T>& va = value(a);
  const Tensor<T>& vb = value(b);
  if (va.size() != vb.size()) {
    throw std::invalid_argument("add shape mismatch " + va.shape_string() + " + " +
                                vb.shape_string());
  }
  Tensor<T> out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  return push(std::move(out), any_requires({a, b}), [a, b](Tape& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
Var Tape<T>::add_row(Var a, Var row) {
  Tensor<T> out = value(a);
  const Tensor<T>& r = value(row);
  if (r.size() != out.cols()) throw std::invalid_argument("add_row size mismatch");
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += r[j];
  return push(std::move(out), any_requires({a, row}), [a, row](Tape& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    if (auto* gr = t.grad_buffer(row)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gr)[j] += g(i, j);
    }
  });
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  const Tensor<T>& vb = value(b);
  Tensor<T> out = value(a);
  if (out.size() != vb.size()) throw std::invalid_argument("sub shape mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  return push(std::move(out), any_requires({a, b}), [a, b](Tape& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    if (auto* gb = t.grad_buffer(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  const Tensor<T>& vb = value(b);
  Tensor<T> out = value(a);
  if (out.size() != vb.size()) throw std::invalid_argument("mul shape mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  return push(std::move(out), any_requires({a, b}), [a, b](Tape& t, const Tensor<T>& g) {
    const Tensor<T>& va = t.value(a);
    const Tensor<T>& vb = t.value(b);
    if (auto* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * vb[i];
    }
    if (auto* gb = t.grad_buffer(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * va[i];
    }
  });
}

template <typename T>
Var Tape<T>::scale(Var a, T s) {
  Tensor<T> out = value(a);
  for (auto& v : out.storage()) v *= s;
  return push(std::move(out), any_requires({a}), [a, s](Tape& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * s;
    }
  });
}

template <typename T>
Var Tape<T>::tanh(Var a) {
  Tensor<T> out = value(a);
  for (auto& v : out.storage()) v = std::tanh(v);
  const bool req = any_requires({a});
  const int self = static_cast<int>(nodes_.size());
  return push(std::move(out), req, [a, self](Tape& t, const Tensor<T>& g) {
    const Tensor<T>& y = t.value(Var{self});
    if (auto* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (T(1) - y[i] * y[i]);
    }
  });
}

template <typename T>
Var Tape<T>::sigmoid(Var a) {
  Tensor<T> out = value(a);
  for (auto& v : out.storage()) v = kernels::sigmoid(v);
  const int self = static_cast<int>(nodes_.size());
  return push(std::move(out), any_requires({a}), [a, self](Tape& t, const Tensor<T>& g) {
    const Tensor<T>& y = t.value(Var{self});
    if (auto* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (T(1) - y[i]);
    }
  });
}

template <typename T>
Var Tape<T>::relu(Var a) {
  Tensor<T> out = value(a);
  for (auto& v : out.storage()) v = v > T(0) ? v : T(0);
  const int self = static_cast<int>(nodes_.size());
  return push(std::move(out), any_requires({a}), [a, self](Tape& t, const Tensor<T>& g) {
    const Tensor<T>& y = t.value(Var{self});
    if (auto* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += y[i] > T(0) ? g[i] : T(0);
    }
  });
}

template <typename T>
Var Tape<T>::layernorm(Var x, Var gain, Var bias, T eps) {
  auto cache = std::make_shared<kernels::LayerNormCache<T>>();
  const bool req = any_requires({x, gain, bias});
  Tensor<T> out =
      kernels::layernorm(value(x), value(gain), value(bias), eps, req ? cache.get() : nullptr);
  return push(std::move(out), req, [x, gain, bias, cache](Tape& t, const Tensor<T>& g) {
    const Tensor<T>& gv = t.value(gain);
    const Tensor<T>& xh = cache->xhat;
    const std::size_t r = g.rows(), n = g.cols();
    auto* gx = t.grad_buffer(x);
    auto* gg = t.grad_buffer(gain);
    auto* gb = t.grad_buffer(bias);
    std::vector<T> dxh(n);
    for (std::size_t i = 0; i < r; ++i) {
      T s1 = 0, s2 = 0;
      for (std::size_t j = 0; j < n; ++j) {
        dxh[j] = g(i, j) * gv[j];
        s1 += dxh[j];
        s2 += dxh[j] * xh(i, j);
        if (gg) (*gg)[j] += g(i, j) * xh(i, j);
        if (gb) (*gb)[j] += g(i, j);
      }
      if (gx) {
        const T inv = cache->inv_std[i];
        const T nn = static_cast<T>(n);
        for (std::size_t j = 0; j < n; ++j) {
          (*gx)(i, j) += inv / nn * (nn * dxh[j] - s1 - xh(i, j) * s2);
        }
      }
    }
  });
}

template <typename T>
Var Tape<T>::softmax_rows(Var a) {
  const Tensor<T>& in = value(a);
  kernels::require_finite(in, "softmax");
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.rows(); ++i) kernels::softmax_row<T>(in.row(i), out.row(i));
  const int self = static_cast<int>(nodes_.size());
  return push(std::move(out), any_requires({a}), [a, self](Tape& t, const Tensor<T>& g) {
    const Tensor<T>& y = t.value(Var{self});
    auto* ga = t.grad_buffer(a);
    if (!ga) return;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) (*ga)(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

template <typename T>
Var Tape<T>::log_softmax_rows(Var a) {
  const Tensor<T>& in = value(a);
  kernels::require_finite(in, "log_softmax");
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.rows(); ++i) kernels::log_softmax_row<T>(in.row(i), out.row(i));
  const int self = static_cast<int>(nodes_.size());
  return push(std::move(out), any_requires({a}), [a, self](Tape& t, const Tensor<T>& g) {
    const Tensor<T>& y = t.value(Var{self});
    auto* ga = t.grad_buffer(a);
    if (!ga) return;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      T sum = 0;
      for (std::size_t j = 0; j < y.cols(); ++j) sum += g(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j)
        (*ga)(i, j) += g(i, j) - std::exp(y(i, j)) * sum;
    }
  });
}

template <typename T>
Var Tape<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  const std::size_t r = value(parts[0]).rows();
  std::size_t c = 0;
  for (Var p : parts) {
    if (value(p).rows() != r) throw std::invalid_argument("concat_cols row mismatch");
    c += value(p).cols();
  }
  Tensor<T> out(r, c);
  std::size_t off = 0;
  bool req = false;
  for (Var p : parts) {
    const Tensor<T>& v = value(p);
    for (std::size_t i = 0; i < r; ++i)
      std::copy(v.row(i).begin(), v.row(i).end(), out.row(i).begin() + off);
    off += v.cols();
    req = req || any_requires({p});
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return push(std::move(out), req, [ins](Tape& t, const Tensor<T>& g) {
    std::size_t off = 0;
    for (Var p : ins) {
      const std::size_t pc = t.value(p).cols();
      if (auto* gp = t.grad_buffer(p)) {
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < pc; ++j) (*gp)(i, j) += g(i, off + j);
      }
      off += pc;
    }
  });
}

template <typename T>
Var Tape<T>::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  const std::size_t c = value(parts[0]).cols();
  std::vector<T> data;
  std::size_t r = 0;
  bool req = false;
  for (Var p : parts) {
    const Tensor<T>& v = value(p);
    if (v.cols() != c) throw std::invalid_argument("concat_rows column mismatch");
    data.insert(data.end(), v.storage().begin(), v.storage().end());
    r += v.rows();
    req = req || any_requires({p});
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return push(Tensor<T>::matrix(r, c, std::move(data)), req,
              [ins](Tape& t, const Tensor<T>& g) {
                std::size_t off = 0;
                for (Var p : ins) {
                  const std::size_t n = t.value(p).size();
                  if (auto* gp = t.grad_buffer(p)) {
                    for (std::size_t i = 0; i < n; ++i) (*gp)[i] += g[off + i];
                  }
                  off += n;
                }
              });
}

template <typename T>
Var Tape<T>::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor<T>& v = value(a);
  if (begin >= end || end > v.cols()) throw std::out_of_range("slice_cols out of range");
  Tensor<T> out(v.rows(), end - begin);
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = v(i, j);
  return push(std::move(out), any_requires({a}), [a, begin, end](Tape& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = begin; j < end; ++j) (*ga)(i, j) += g(i, j - begin);
    }
  });
}

template <typename T>
Var Tape<T>::slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor<T>& v = value(a);
  if (begin >= end || end > v.rows()) throw std::out_of_range("slice_rows out of range");
  Tensor<T> out = v.slice_rows(begin, end);
  return push(std::move(out), any_requires({a}), [a, begin](Tape& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) {
      const std::size_t off = begin * g.cols();
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[off + i] += g[i];
    }
  });
}

template <typename T>
Var Tape<T>::gather_rows(Var table, std::span<const int> indices) {
  const Tensor<T>& tb = value(table);
  const std::size_t c = tb.cols();
  Tensor<T> out(indices.size(), c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= tb.rows()) {
      throw std::out_of_range("gather index " + std::to_string(idx) + " out of range");
    }
    std::copy(tb.row(idx).begin(), tb.row(idx).end(), out.row(i).begin());
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return push(std::move(out), any_requires({table}), [table, idx](Tape& t, const Tensor<T>& g) {
    if (auto* gt = t.grad_buffer(table)) {
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gt)(idx[i], j) += g(i, j);
    }
  });
}

template <typename T>
Var Tape<T>::pair_add(Var a, Var b) {
  const Tensor<T>& va = value(a);
  const Tensor<T>& vb = value(b);
  if (va.cols() != vb.cols()) throw std::invalid_argument("pair_add column mismatch");
  const std::size_t ra = va.rows(), rb = vb.rows(), c = va.cols();
  Tensor<T> out(ra * rb, c);
  for (std::size_t i = 0; i < ra; ++i)
    for (std::size_t u = 0; u < rb; ++u)
      for (std::size_t j = 0; j < c; ++j) out(i * rb + u, j) = va(i, j) + vb(u, j);
  return push(std::move(out), any_requires({a, b}), [a, b, ra, rb, c](Tape& t, const Tensor<T>& g) {
    auto* ga = t.grad_buffer(a);
    auto* gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < ra; ++i)
      for (std::size_t u = 0; u < rb; ++u)
        for (std::size_t j = 0; j < c; ++j) {
          const T gv = g(i * rb + u, j);
          if (ga) (*ga)(i, j) += gv;
          if (gb) (*gb)(u, j) += gv;
        }
  });
}

template <typename T>
Var Tape<T>::attention(Var q, Var k, Var v, std::size_t heads, std::vector<std::size_t> limits) {
  auto cache = std::make_shared<kernels::AttentionCache<T>>();
  const bool req = any_requires({q, k, v});
  Tensor<T> out =
      kernels::attention(value(q), value(k), value(v), heads, limits, req ? cache.get() : nullptr);
  return push(std::move(out), req,
              [q, k, v, heads, limits = std::move(limits), cache](Tape& t, const Tensor<T>& g) {
                kernels::attention_backward(t.value(q), t.value(k), t.value(v), heads, limits,
                                            *cache, g, t.grad_buffer(q), t.grad_buffer(k),
                                            t.grad_buffer(v));
              });
}

template <typename T>
Var Tape<T>::sum(Var a) {
  T s = 0;
  for (T x : value(a).storage()) s += x;
  return push(Tensor<T>(1, 1, s), any_requires({a}), [a](Tape& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) {
      for (auto& x : ga->storage()) x += g[0];
    }
  });
}

template <typename T>
Var Tape<T>::axpy(Var a, T s, Var b) {
  if (value(a).size() != 1 || value(b).size() != 1) {
    throw std::invalid_argument("axpy expects scalars");
  }
  const T out = value(a)[0] + s * value(b)[0];
  return push(Tensor<T>(1, 1, out), any_requires({a, b}), [a, s, b](Tape& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) (*ga)[0] += g[0];
    if (auto* gb = t.grad_buffer(b)) (*gb)[0] += s * g[0];
  });
}

template class Tape<float>;
template class Tape<double>;

}  // namespace catt
