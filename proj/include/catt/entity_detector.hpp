// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "catt/context_encoder.hpp"
#include "catt/layers.hpp"

namespace catt {

enum class EdActivation { kIdentity, kSigmoid };

std::string to_string(EdActivation a);
EdActivation parse_ed_activation(const std::string& s);

// Per-token entity-presence labels: 1 iff the token lies inside an exact
// occurrence of some phrase. Overlapping occurrences union their coverage.
std::vector<int> make_ed_labels(const std::vector<int>& reference,
                                const std::vector<Phrase>& phrases);

// Gate from a 2-logit row: on when the positive logit is at least the
// negative one (ties switch biasing on).
template <typename T>
bool ed_decide(std::span<const T> logits_row) {
  if (logits_row.size() != 2) throw std::invalid_argument("ed_decide expects 2 logits");
  return logits_row[1] >= logits_row[0];
}

// Attention-based entity detector. Queries are projected as
// act(X·Wq + bq), keys and values as act(C·Wk + bk), act(C·Wv + bv); the
// heads' scaled dot-product outputs are concatenated and classified into
// {absent, present} by a single linear layer.
template <typename T>
struct EntityDetector {
  Linear<T> q, k, v, cls;
  MHAConfig cfg;
  EdActivation act = EdActivation::kIdentity;

  static EntityDetector create(ParamStore<T>& ps, const std::string& name, MHAConfig cfg,
                               EdActivation act, std::mt19937_64& rng) {
    cfg.validate();
    EntityDetector e;
    e.cfg = cfg;
    e.act = act;
    e.q = Linear<T>::create(ps, name + ".q", cfg.model_dim, cfg.model_dim, rng);
    e.k = Linear<T>::create(ps, name + ".k", cfg.model_dim, cfg.model_dim, rng);
    e.v = Linear<T>::create(ps, name + ".v", cfg.model_dim, cfg.model_dim, rng);
    e.cls = Linear<T>::create(ps, name + ".cls", cfg.model_dim, 2, rng);
    return e;
  }

  Var activate(Tape<T>& t, Var x) const {
    return act == EdActivation::kSigmoid ? t.sigmoid(x) : x;
  }

  std::pair<Var, Var> project_kv(Tape<T>& t, Var kv) const {
    check(t, kv);
    return {activate(t, k(t, kv)), activate(t, v(t, kv))};
  }

  // H^ed rows for each query; query i sees keys [0, limits[i]).
  Var embed(Tape<T>& t, Var queries, Var keys, Var values,
            std::vector<std::size_t> limits) const {
    check(t, queries);
    Var qp = activate(t, q(t, queries));
    return t.attention(qp, keys, values, cfg.num_heads, std::move(limits));
  }

  Var logits(Tape<T>& t, Var queries, Var keys, Var values,
             std::vector<std::size_t> limits) const {
    return cls(t, embed(t, queries, keys, values, std::move(limits)));
  }

  void check(Tape<T>& t, Var x) const {
    if (t.value(x).cols() != cfg.model_dim) {
      throw std::invalid_argument("entity detector input has dim " +
                                  std::to_string(t.value(x).cols()) + ", expected " +
                                  std::to_string(cfg.model_dim));
    }
  }
};

}  // namespace catt
