// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "catt/decoder.hpp"
#include "catt/metrics.hpp"
#include "catt/synth.hpp"

namespace catt {

std::string to_string(ListKind k);

struct EvalOptions {
  std::uint64_t list_seed = 17;  // bias list sampling
  std::uint64_t decode_seed = 29;  // Random50 draws
  InitialGate initial_gate = InitialGate::kDetect;
  bool latch = false;
  int max_symbols_per_frame = 5;
  int threads = 1;  // utterances decoded in parallel; results do not depend on it
};

struct EvalCell {
  DecodeMode mode = DecodeMode::kAlwaysOn;
  int n = 0;
  ListKind set = ListKind::kPersonalized;
  ErrorRateReport wer;
  double l_cer = 0.0;
  OpCounters counters;
  std::size_t frames = 0;
  std::vector<Hypothesis> hypotheses;
};

nlohmann::json to_json(const EvalCell& c);

// Bias list for utterance `index` of a test set; identical across modes.
std::vector<Phrase> eval_list(const Utterance& utt, std::size_t index, ListKind set, int n,
                              const PhrasePools& pools, std::uint64_t list_seed);

EvalCell evaluate_cell(const GreedyDecoder<float>& dec, const std::vector<Utterance>& utts,
                       ListKind set, DecodeMode mode, int n, const PhrasePools& pools,
                       const EvalOptions& opts);

// Every (mode, n, set) combination, modes outermost.
std::vector<EvalCell> evaluate_grid(const CattModel<float>& model, const Corpus& corpus,
                                    const std::vector<DecodeMode>& modes,
                                    const std::vector<int>& ns, const EvalOptions& opts);

std::string format_table(const std::vector<EvalCell>& cells);

}  // namespace catt
