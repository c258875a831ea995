// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "catt/context_encoder.hpp"
#include "catt/entity_detector.hpp"
#include "catt/layers.hpp"
#include "json.hpp"

namespace catt {

enum class Variant { kCatt, kCattPed, kCattEped };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  int vocab_size = 40;  // real tokens; blank is index vocab_size
  int feature_dim = 16;
  int model_dim = 64;
  int num_heads = 2;
  int encoder_layers = 2;
  int encoder_ff_dim = 128;
  int predictor_layers = 1;
  int joint_dim = 64;
  Variant variant = Variant::kCattPed;
  EdActivation ed_activation = EdActivation::kIdentity;

  int blank() const { return vocab_size; }
  int num_outputs() const { return vocab_size + 1; }
  bool has_detector() const { return variant != Variant::kCatt; }
  MHAConfig mha() const {
    return {static_cast<std::size_t>(model_dim), static_cast<std::size_t>(num_heads)};
  }
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
// Rejects unknown keys.
ModelConfig model_config_from_json(const nlohmann::json& j);

enum class BiasSide { kEncoder, kPredictor };

// Previous-token input to the predictor: either the start sentinel or a real
// token. Blank is never a valid input.
inline constexpr int kStartOfSequence = -1;

template <typename T>
struct PredictorState {
  std::vector<Tensor<T>> h;
  std::vector<Tensor<T>> c;
};

// Per-layer key/value rows seen so far by the streaming audio encoder.
template <typename T>
struct EncoderCache {
  std::vector<Tensor<T>> keys;
  std::vector<Tensor<T>> values;
  std::size_t frames = 0;
};

template <typename T>
struct EncoderBlock {
  LayerNorm<T> ln_attn, ln_ff;
  MultiHeadAttention<T> attn;
  Linear<T> ff_in, ff_out;
};

// Attention biasing followed by the combine module:
//   biased   = MHA(query, C, C)
//   combined = FeedForward([LayerNorm(biased), LayerNorm(query)])
template <typename T>
struct BiasingLayer {
  MultiHeadAttention<T> attn;
  LayerNorm<T> ln_biased, ln_query;
  Linear<T> combine;
};

// Keys/values of a context matrix projected for one biasing layer.
struct ProjectedContext {
  Var keys;
  Var values;
  std::size_t rows = 0;
};

template <typename T>
struct BiasOutput {
  Var biased;
  Var combined;
};

// Context-aware transducer: causal self-attention audio encoder, LSTM
// predictor, encoder/predictor biasing layers, joint network, and an optional
// entity detector (P-ED or EP-ED by variant).
template <typename T>
class CattModel {
 public:
  CattModel(const ModelConfig& cfg, std::uint64_t seed);
  CattModel(const CattModel&) = delete;
  CattModel& operator=(const CattModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Copies parameter values by name; shapes must match.
  void load_values(const ParamStore<T>& src);

  template <typename U>
  std::unique_ptr<CattModel<U>> cast() const {
    auto out = std::make_unique<CattModel<U>>(cfg_, 0);
    out->load_values(params_.template cast<U>());
    return out;
  }

  // ---- audio encoder ----
  // Rows of `frames` are frames starting at absolute index cache->frames (0
  // without a cache). With a cache, keys/values are appended so later calls
  // continue the stream.
  Var encode_audio(Tape<T>& t, Var frames, EncoderCache<T>* cache = nullptr) const;
  EncoderCache<T> new_encoder_cache() const;

  // ---- context ----
  ContextEmbeddings encode_context(Tape<T>& t, const std::vector<Phrase>& phrases) const {
    return context_.encode(t, phrases);
  }

  // ---- biasing ----
  ProjectedContext project_context(Tape<T>& t, Var context, BiasSide side) const;
  BiasOutput<T> bias_embed(Tape<T>& t, Var queries, const ProjectedContext& ctx,
                           BiasSide side) const;
  BiasOutput<T> bias_embed(Tape<T>& t, Var queries, Var context, BiasSide side) const {
    return bias_embed(t, queries, project_context(t, context, side), side);
  }
  // Combine step alone, for a precomputed biased row.
  Var combine(Tape<T>& t, Var biased, Var queries, BiasSide side) const;
  const BiasingLayer<T>& biasing_layer(BiasSide side) const {
    return side == BiasSide::kEncoder ? enc_bias_ : pred_bias_;
  }

  // ---- predictor ----
  PredictorState<T> initial_predictor_state() const;
  // One recurrent step; returns h^P (1×D) and advances `state`.
  Var predictor_step(Tape<T>& t, int prev_token, PredictorState<T>& state) const;
  // Teacher-forced outputs after consuming [sos, y_1, ..., y_U]: (U+1)×D.
  Var predictor_sequence(Tape<T>& t, const std::vector<int>& tokens) const;

  // ---- joint ----
  Var joint_encoder_proj(Tape<T>& t, Var enc) const { return joint_enc_(t, enc); }
  Var joint_predictor_proj(Tape<T>& t, Var pred) const {
    return t.matmul(pred, t.param(*joint_pred_w_));
  }
  // Logits for every (enc row, pred row) pair, enc-major.
  Var joint_from_proj(Tape<T>& t, Var enc_proj, Var pred_proj) const {
    return joint_out_(t, t.tanh(t.pair_add(enc_proj, pred_proj)));
  }
  Var joint(Tape<T>& t, Var enc, Var pred) const {
    return joint_from_proj(t, joint_encoder_proj(t, enc), joint_predictor_proj(t, pred));
  }

  // ---- entity detector ----
  bool has_detector() const { return detector_.has_value(); }
  const EntityDetector<T>& detector() const;

 private:
  void build(std::uint64_t seed);
  Tensor<T> positions(std::size_t start, std::size_t count) const;

  ModelConfig cfg_;
  ParamStore<T> params_;

  Linear<T> enc_in_;
  std::vector<EncoderBlock<T>> blocks_;
  LayerNorm<T> enc_out_ln_;

  Parameter<T>* pred_embedding_ = nullptr;  // (V+1)×D, row V = start sentinel
  std::vector<Lstm<T>> pred_lstm_;

  ContextEncoder<T> context_;
  BiasingLayer<T> enc_bias_, pred_bias_;

  Linear<T> joint_enc_;
  Parameter<T>* joint_pred_w_ = nullptr;
  Linear<T> joint_out_;

  std::optional<EntityDetector<T>> detector_;
};

extern template class CattModel<float>;
extern template class CattModel<double>;

}  // namespace catt
