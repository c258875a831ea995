// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "catt/layers.hpp"

namespace catt {

using Phrase = std::vector<int>;

// Rows of the context matrix: row 0 is the learned no-bias entry, rows 1..K
// are the phrases in input order (after de-duplication).
struct ContextEmbeddings {
  Var matrix;
  std::vector<Phrase> phrases;
  std::size_t rows() const { return phrases.size() + 1; }
};

// Drops repeated phrases, keeping first occurrences. Logs a warning when
// anything was removed.
std::vector<Phrase> dedupe_phrases(const std::vector<Phrase>& phrases);

void validate_phrase(const Phrase& p, int vocab_size);

// Embedding lookup -> BLSTM -> projection of the concatenated final forward
// and backward states.
template <typename T>
struct ContextEncoder {
  Parameter<T>* embedding = nullptr;  // vocab × dim
  Parameter<T>* no_bias = nullptr;    // 1 × dim
  Blstm<T> blstm;
  int vocab_size = 0;

  static ContextEncoder create(ParamStore<T>& ps, const std::string& name, int vocab_size,
                               std::size_t dim, std::mt19937_64& rng) {
    ContextEncoder c;
    c.vocab_size = vocab_size;
    c.embedding = &ps.add(name + ".embedding",
                          glorot<T>(static_cast<std::size_t>(vocab_size), dim, rng));
    c.no_bias = &ps.add(name + ".no_bias", glorot<T>(1, dim, rng));
    c.blstm = Blstm<T>::create(ps, name + ".blstm", dim, dim, dim, rng);
    return c;
  }

  // Phrase vectors for a batch of equal-length phrases, one row each.
  Var encode_group(Tape<T>& t, const std::vector<const Phrase*>& group) const {
    const std::size_t len = group.front()->size();
    Var table = t.param(*embedding);
    std::vector<Var> steps;
    for (std::size_t l = 0; l < len; ++l) {
      std::vector<int> ids;
      for (const Phrase* p : group) ids.push_back((*p)[l]);
      steps.push_back(t.gather_rows(table, ids));
    }
    auto st = blstm.states(t, steps);
    Var both[2] = {st.fwd_h[len - 1], st.bwd_h[0]};
    return blstm.proj(t, t.concat_cols(both));
  }

  ContextEmbeddings encode(Tape<T>& t, const std::vector<Phrase>& input) const {
    ContextEmbeddings out;
    out.phrases = dedupe_phrases(input);
    for (const auto& p : out.phrases) validate_phrase(p, vocab_size);

    Var null_row = t.param(*no_bias);
    if (out.phrases.empty()) {
      out.matrix = null_row;
      return out;
    }
    // Group by length; rows are independent so grouping does not change any
    // phrase's vector.
    std::map<std::size_t, std::vector<std::size_t>> by_len;
    for (std::size_t i = 0; i < out.phrases.size(); ++i) {
      by_len[out.phrases[i].size()].push_back(i);
    }
    std::vector<Var> blocks{null_row};
    std::vector<int> order(out.phrases.size() + 1, 0);
    int next_row = 1;
    for (const auto& [len, idxs] : by_len) {
      std::vector<const Phrase*> group;
      for (std::size_t i : idxs) {
        group.push_back(&out.phrases[i]);
        order[i + 1] = next_row++;
      }
      blocks.push_back(encode_group(t, group));
    }
    Var stacked = t.concat_rows(blocks);
    if (by_len.size() == 1) {
      out.matrix = stacked;
    } else {
      out.matrix = t.gather_rows(stacked, order);
    }
    return out;
  }
};

}  // namespace catt
