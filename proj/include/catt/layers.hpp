// SPDX-License-Identifier: Apache-2.0
#pragma once

// Layer primitives composed on the tape. Each layer holds pointers into a
// ParamStore; the store must outlive the layer.

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "catt/param_store.hpp"
#include "catt/tape.hpp"

namespace catt {

struct MHAConfig {
  std::size_t model_dim = 64;
  std::size_t num_heads = 2;

  std::size_t head_dim() const { return model_dim / num_heads; }
  void validate() const {
    if (model_dim == 0 || num_heads == 0 || model_dim % num_heads != 0) {
      throw std::invalid_argument("model_dim must be a positive multiple of num_heads");
    }
  }
};

template <typename T>
struct Linear {
  Parameter<T>* w = nullptr;
  Parameter<T>* b = nullptr;

  static Linear create(ParamStore<T>& ps, const std::string& name, std::size_t in,
                       std::size_t out, std::mt19937_64& rng) {
    Linear l;
    l.w = &ps.add(name + ".w", glorot<T>(in, out, rng));
    l.b = &ps.add(name + ".b", Tensor<T>(1, out));
    return l;
  }

  std::size_t in_dim() const { return w->value.rows(); }
  std::size_t out_dim() const { return w->value.cols(); }

  Var operator()(Tape<T>& t, Var x) const { return t.linear(x, t.param(*w), t.param(*b)); }
};

template <typename T>
struct LayerNorm {
  Parameter<T>* gain = nullptr;
  Parameter<T>* bias = nullptr;
  static constexpr double kEps = 1e-5;

  static LayerNorm create(ParamStore<T>& ps, const std::string& name, std::size_t dim) {
    LayerNorm l;
    l.gain = &ps.add(name + ".gain", Tensor<T>(1, dim, T(1)));
    l.bias = &ps.add(name + ".bias", Tensor<T>(1, dim, T(0)));
    return l;
  }

  Var operator()(Tape<T>& t, Var x) const {
    return t.layernorm(x, t.param(*gain), t.param(*bias), static_cast<T>(kEps));
  }
};

// Multi-head attention with query/key/value/output projections. Keys and
// values are projected separately from the attention step so a fixed key set
// (a context list, an encoder prefix) can be projected once and reused.
template <typename T>
struct MultiHeadAttention {
  MHAConfig cfg;
  Linear<T> q, k, v, o;

  static MultiHeadAttention create(ParamStore<T>& ps, const std::string& name, MHAConfig cfg,
                                   std::mt19937_64& rng) {
    cfg.validate();
    MultiHeadAttention m;
    m.cfg = cfg;
    m.q = Linear<T>::create(ps, name + ".q", cfg.model_dim, cfg.model_dim, rng);
    m.k = Linear<T>::create(ps, name + ".k", cfg.model_dim, cfg.model_dim, rng);
    m.v = Linear<T>::create(ps, name + ".v", cfg.model_dim, cfg.model_dim, rng);
    m.o = Linear<T>::create(ps, name + ".o", cfg.model_dim, cfg.model_dim, rng);
    return m;
  }

  std::pair<Var, Var> project_kv(Tape<T>& t, Var kv) const { return {k(t, kv), v(t, kv)}; }

  Var attend(Tape<T>& t, Var query, Var keys, Var values,
             std::vector<std::size_t> limits) const {
    check_dim(t, query);
    Var qp = q(t, query);
    return o(t, t.attention(qp, keys, values, cfg.num_heads, std::move(limits)));
  }

  // Every query sees every key/value row.
  Var operator()(Tape<T>& t, Var query, Var kv) const {
    check_dim(t, kv);
    auto [kp, vp] = project_kv(t, kv);
    std::vector<std::size_t> limits(t.value(query).rows(), t.value(kv).rows());
    return attend(t, query, kp, vp, std::move(limits));
  }

  // Per-head attention weights, rows = query*heads + head.
  Tensor<T> weights(Tape<T>& t, Var query, Var kv) const {
    auto [kp, vp] = project_kv(t, kv);
    Var qp = q(t, query);
    const std::size_t rq = t.value(query).rows(), nk = t.value(kv).rows();
    std::vector<std::size_t> limits(rq, nk);
    kernels::AttentionCache<T> cache;
    kernels::attention(t.value(qp), t.value(kp), t.value(vp), cfg.num_heads, limits, &cache);
    return Tensor<T>({rq * cfg.num_heads, nk}, std::move(cache.probs));
  }

  void check_dim(Tape<T>& t, Var x) const {
    if (t.value(x).cols() != cfg.model_dim) {
      throw std::invalid_argument("attention input has dim " +
                                  std::to_string(t.value(x).cols()) + ", expected " +
                                  std::to_string(cfg.model_dim));
    }
  }
};

template <typename T>
struct LstmState {
  Var h;
  Var c;
};

// Single LSTM layer; gate order i, f, g, o. Rows are independent sequences.
template <typename T>
struct Lstm {
  Parameter<T>* wx = nullptr;
  Parameter<T>* wh = nullptr;
  Parameter<T>* b = nullptr;
  std::size_t hidden = 0;

  static Lstm create(ParamStore<T>& ps, const std::string& name, std::size_t in,
                     std::size_t hidden, std::mt19937_64& rng) {
    Lstm l;
    l.hidden = hidden;
    l.wx = &ps.add(name + ".wx", glorot<T>(in, 4 * hidden, rng));
    l.wh = &ps.add(name + ".wh", glorot<T>(hidden, 4 * hidden, rng));
    Tensor<T> bias(1, 4 * hidden);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = T(1);  // forget gate
    l.b = &ps.add(name + ".b", std::move(bias));
    return l;
  }

  LstmState<T> zero_state(Tape<T>& t, std::size_t rows) const {
    return {t.constant(Tensor<T>(rows, hidden)), t.constant(Tensor<T>(rows, hidden))};
  }

  LstmState<T> step(Tape<T>& t, Var x, const LstmState<T>& s) const {
    if (t.value(x).cols() != wx->value.rows()) {
      throw std::invalid_argument("lstm input dimension mismatch");
    }
    Var gates = t.add(t.linear(x, t.param(*wx), t.param(*b)), t.matmul(s.h, t.param(*wh)));
    const std::size_t h = hidden;
    Var i = t.sigmoid(t.slice_cols(gates, 0, h));
    Var f = t.sigmoid(t.slice_cols(gates, h, 2 * h));
    Var g = t.tanh(t.slice_cols(gates, 2 * h, 3 * h));
    Var o = t.sigmoid(t.slice_cols(gates, 3 * h, 4 * h));
    Var c = t.add(t.mul(f, s.c), t.mul(i, g));
    Var hn = t.mul(o, t.tanh(c));
    return {hn, c};
  }
};

// Bidirectional LSTM over a batch of equal-length sequences. Position l of
// every sequence is row block `steps[l]`.
template <typename T>
struct Blstm {
  Lstm<T> fwd, bwd;
  Linear<T> proj;

  static Blstm create(ParamStore<T>& ps, const std::string& name, std::size_t in,
                      std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
    Blstm b;
    b.fwd = Lstm<T>::create(ps, name + ".fwd", in, hidden, rng);
    b.bwd = Lstm<T>::create(ps, name + ".bwd", in, hidden, rng);
    b.proj = Linear<T>::create(ps, name + ".proj", 2 * hidden, out, rng);
    return b;
  }

  struct States {
    std::vector<Var> fwd_h;  // per position
    std::vector<Var> bwd_h;  // per position
  };

  States states(Tape<T>& t, const std::vector<Var>& steps) const {
    if (steps.empty()) throw std::invalid_argument("blstm over an empty sequence");
    const std::size_t rows = t.value(steps[0]).rows();
    States out;
    out.fwd_h.resize(steps.size());
    out.bwd_h.resize(steps.size());
    LstmState<T> s = fwd.zero_state(t, rows);
    for (std::size_t l = 0; l < steps.size(); ++l) {
      s = fwd.step(t, steps[l], s);
      out.fwd_h[l] = s.h;
    }
    s = bwd.zero_state(t, rows);
    for (std::size_t l = steps.size(); l-- > 0;) {
      s = bwd.step(t, steps[l], s);
      out.bwd_h[l] = s.h;
    }
    return out;
  }

  // Per-position projected [fwd; bwd] outputs for a single sequence (rows =
  // positions).
  Var forward(Tape<T>& t, Var seq) const {
    const std::size_t n = t.value(seq).rows();
    if (n == 0) throw std::invalid_argument("blstm over an empty sequence");
    std::vector<Var> steps;
    for (std::size_t l = 0; l < n; ++l) steps.push_back(t.slice_rows(seq, l, l + 1));
    States st = states(t, steps);
    std::vector<Var> rows;
    for (std::size_t l = 0; l < n; ++l) {
      Var both[2] = {st.fwd_h[l], st.bwd_h[l]};
      rows.push_back(t.concat_cols(both));
    }
    return proj(t, t.concat_rows(rows));
  }
};

}  // namespace catt
