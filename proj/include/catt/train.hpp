// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "catt/losses.hpp"
#include "catt/synth.hpp"
#include "catt/transducer.hpp"

namespace catt {

struct TrainConfig {
  int epochs = 12;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  double lambda1 = kDefaultLambda1;  // ignored for models without a detector
  std::uint64_t seed = 1;
  int max_steps = 0;  // 0: no cap
  int dev_limit = 100;  // dev utterances decoded per epoch (0: skip)
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);  // rejects unknown keys

// Teacher-forced loss for one utterance and its bias list, recorded on `t`.
struct UtteranceLoss {
  Var total;
  double l_transducer = 0.0;
  double l_bias = 0.0;  // 0 when the model has no detector or no tokens
  bool has_bias_term = false;
};

// Detector key limits for the encoder-predictor detector: query row u sees
// the frames available when the decision before token u is taken.
std::vector<std::size_t> eped_key_limits(const std::vector<std::size_t>& emission_frames,
                                         std::size_t num_queries, std::size_t frames);

template <typename T>
UtteranceLoss utterance_loss(Tape<T>& t, const CattModel<T>& model, const Tensor<T>& frames,
                             const std::vector<int>& tokens, const std::vector<Phrase>& list,
                             double lambda1);

struct EpochLog {
  int epoch = 0;
  std::int64_t steps = 0;
  double l_transducer = 0.0;  // mean per utterance
  double l_bias = 0.0;        // mean per utterance with a bias term
  double l_total = 0.0;
  double dev_wer = -1.0;      // -1 when not measured
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::int64_t steps = 0;
  double final_loss = 0.0;  // mean total loss of the last epoch
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Throws std::runtime_error on a non-finite loss.
TrainResult train_model(CattModel<float>& model, const Corpus& corpus, const SynthConfig& synth,
                        const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace catt
