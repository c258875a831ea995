// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "catt/transducer.hpp"

namespace catt {

enum class DecodeMode { kAdaptivePed, kAdaptiveEped, kAlwaysOn, kRandom50, kAlwaysOff };

std::string to_string(DecodeMode m);
DecodeMode parse_decode_mode(const std::string& s);

// How the gate is set before the first token is emitted.
enum class InitialGate { kDetect, kOn, kOff };

std::string to_string(InitialGate g);
InitialGate parse_initial_gate(const std::string& s);

enum class EdOverride { kNone, kForceNegative, kForcePositive };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::kAlwaysOn;
  std::uint64_t seed = 0;  // Random50 draws
  int max_symbols_per_frame = 5;
  InitialGate initial_gate = InitialGate::kDetect;
  bool latch = false;  // once a decision is positive it stays positive
  EdOverride ed_override = EdOverride::kNone;
  // Forced decisions, consumed in order in place of the mode's own.
  std::optional<std::vector<bool>> replay;
  std::ostream* trace = nullptr;  // JSON lines, one per joint evaluation
};

struct OpCounters {
  std::uint64_t encoder_bias_full = 0;    // full-list encoder biasing, per frame
  std::uint64_t predictor_bias_full = 0;  // full-list predictor biasing, per token
  std::uint64_t ed_calls = 0;

  std::uint64_t total() const { return encoder_bias_full + predictor_bias_full + ed_calls; }
  OpCounters& operator+=(const OpCounters& o) {
    encoder_bias_full += o.encoder_bias_full;
    predictor_bias_full += o.predictor_bias_full;
    ed_calls += o.ed_calls;
    return *this;
  }
  bool operator==(const OpCounters&) const = default;
};

struct Hypothesis {
  std::vector<int> tokens;
  std::vector<std::size_t> emit_frames;  // frame index of each token
  // Decision in force for each emission opportunity: gates[u] governs the
  // emission of token u, so gates.size() == tokens.size() + 1.
  std::vector<bool> gates;
  OpCounters counters;
  std::size_t frames = 0;

  // Predicted entity-presence label per emitted token.
  std::vector<int> predicted_labels() const {
    return std::vector<int>(gates.begin(), gates.begin() + static_cast<std::ptrdiff_t>(tokens.size()));
  }
  bool operator==(const Hypothesis&) const = default;
};

// Biased rows for the learned empty list. With a single key the attention
// weight is exactly one, so the biased row is independent of the query and is
// computed once per checkpoint.
template <typename T>
struct NullBiasCache {
  Tensor<T> context;          // 1×D
  Tensor<T> encoder_biased;   // 1×D
  Tensor<T> predictor_biased; // 1×D
  std::size_t rows() const { return context.rows(); }
  bool operator==(const NullBiasCache&) const = default;
};

template <typename T>
NullBiasCache<T> make_null_bias_cache(const CattModel<T>& model);

// Context matrix of a bias list plus key/value projections reused across
// every frame and token of an utterance.
template <typename T>
struct PreparedList {
  std::vector<Phrase> phrases;
  Tensor<T> context;
  Tensor<T> enc_keys, enc_values;
  Tensor<T> pred_keys, pred_values;
  Tensor<T> ed_keys, ed_values;  // detector projections of the context rows
  bool empty() const { return phrases.empty(); }
};

template <typename T>
PreparedList<T> prepare_list(const CattModel<T>& model, const std::vector<Phrase>& phrases);

// Throws std::invalid_argument when the mode needs a detector the model lacks.
void check_mode_supported(const ModelConfig& cfg, DecodeMode mode);

template <typename T>
class GreedyDecoder {
 public:
  GreedyDecoder(const CattModel<T>& model, const NullBiasCache<T>& null_cache)
      : model_(model), null_(null_cache) {}

  Hypothesis decode(const Tensor<T>& frames, const PreparedList<T>& list,
                    const DecodeOptions& opts) const;
  Hypothesis decode(const Tensor<T>& frames, const std::vector<Phrase>& phrases,
                    const DecodeOptions& opts) const {
    return decode(frames, prepare_list(model_, phrases), opts);
  }

 private:
  const CattModel<T>& model_;
  const NullBiasCache<T>& null_;
};

extern template class GreedyDecoder<float>;
extern template class GreedyDecoder<double>;

}  // namespace catt
