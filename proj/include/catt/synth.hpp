// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "catt/context_encoder.hpp"
#include "catt/tensor.hpp"
#include "json.hpp"

namespace catt {

// Synthetic task. Token ids are laid out as
//   [0, anchors)                      common tokens with a rare look-alike
//   [anchors, commons)                other common tokens
//   [commons, commons + triggers)     carrier tokens announcing an entity
//   [commons + triggers, vocab)       rare tokens, only ever inside entities
// Rare tokens come in groups of `rare_siblings` that share one anchor's
// template plus a small per-token offset, so without a bias list the siblings
// (and their anchor) are hard to tell apart. Pool phrases have pairwise
// distinct anchor shapes, which lets a list name the right sibling.
struct SynthConfig {
  int vocab_size = 40;
  int feature_dim = 16;
  int rare_tokens = 24;
  int rare_siblings = 2;       // rare tokens per anchor
  int trigger_tokens = 2;
  int frames_per_token = 4;
  int frame_jitter = 1;
  double noise_std = 0.5;
  double rare_offset = 0.10;   // std of the rare-vs-anchor template offset
  double frame_ms = 40.0;

  int num_entities = 20;       // phrases spoken in the personalized set
  int num_distractors = 100;   // extra phrases used only as distractors
  int entity_length = 2;

  int filler_min = 4;
  int filler_max = 8;
  double anchor_weight = 0.3;      // relative filler frequency of anchor tokens
  double train_entity_rate = 0.5;  // training utterances carrying an entity
  double inventory_train_rate = 0.1;  // entity slots filled from the inventory
  double train_trigger_rate = 0.7; // entity slots preceded by a trigger
  double train_empty_list_rate = 0.3;
  int train_list_max = 20;

  int train_size = 2000;
  int dev_size = 200;
  int test_size = 1000;  // per test set
  std::uint64_t seed = 1;

  int commons() const { return vocab_size - rare_tokens - trigger_tokens; }
  int anchors() const { return rare_tokens / rare_siblings; }
  int first_trigger() const { return commons(); }
  int first_rare() const { return commons() + trigger_tokens; }
  bool is_rare(int tok) const { return tok >= first_rare() && tok < vocab_size; }
  bool is_trigger(int tok) const { return tok >= first_trigger() && tok < first_rare(); }
  int anchor_of(int rare) const { return (rare - first_rare()) / rare_siblings; }
  void validate() const;
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);  // rejects unknown keys

struct Utterance {
  std::string id;
  std::vector<int> tokens;
  std::vector<Phrase> entities;
  Tensor<float> frames;  // T × feature_dim
};

struct PhrasePools {
  std::vector<Phrase> inventory;    // entity phrases
  std::vector<Phrase> distractors;  // never spoken outside training
  // Per token id: look-alike group of a rare token, -1 for other tokens.
  std::vector<int> look_alike_group;
  std::vector<Phrase> all() const;
};

struct Corpus {
  PhrasePools phrases;
  std::vector<Utterance> train, dev, personalized, common;
};

Corpus generate_corpus(const SynthConfig& cfg);

// Per token id: the anchor a rare token imitates, -1 for other tokens.
std::vector<int> look_alike_groups(const SynthConfig& cfg);

enum class ListKind { kPersonalized, kCommon };

// personalized: the utterance's entities plus distractors up to exactly n
// (n = 0 gives an empty list); no distractor holds a sibling of an entity
// token. common: n distractors, inventory phrases first, none occurring in the
// utterance. Throws when the pools run out.
std::vector<Phrase> build_bias_list(const Utterance& utt, ListKind kind, int n,
                                    std::uint64_t seed, const PhrasePools& pools);

// Training-time list: entity utterances get their entities plus a random
// number of distractors; others get either no list or distractors only.
std::vector<Phrase> sample_training_list(const Utterance& utt, const SynthConfig& cfg,
                                         const PhrasePools& pools, std::mt19937_64& rng);

}  // namespace catt
