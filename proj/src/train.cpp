// SPDX-License-Identifier: Apache-2.0
#include "catt/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "catt/decoder.hpp"
#include "catt/entity_detector.hpp"
#include "catt/json_util.hpp"
#include "catt/metrics.hpp"

namespace catt {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  if (clip_norm < 0) throw std::invalid_argument("clip_norm must be non-negative");
  if (!(lambda1 >= 0) || !std::isfinite(lambda1)) throw std::invalid_argument("lambda1 must be >= 0");
  if (max_steps < 0 || dev_limit < 0) throw std::invalid_argument("negative step or dev limit");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},         {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}, {"clip_norm", c.clip_norm},
          {"lambda1", c.lambda1},       {"seed", c.seed},
          {"max_steps", c.max_steps},   {"dev_limit", c.dev_limit}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j,
                      {"epochs", "batch_size", "learning_rate", "clip_norm", "lambda1", "seed",
                       "max_steps", "dev_limit"},
                      "train config");
  TrainConfig c;
  read_key(j, "epochs", c.epochs);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "learning_rate", c.learning_rate);
  read_key(j, "clip_norm", c.clip_norm);
  read_key(j, "lambda1", c.lambda1);
  read_key(j, "seed", c.seed);
  read_key(j, "max_steps", c.max_steps);
  read_key(j, "dev_limit", c.dev_limit);
  c.validate();
  return c;
}

std::vector<std::size_t> eped_key_limits(const std::vector<std::size_t>& emission_frames,
                                         std::size_t num_queries, std::size_t frames) {
  std::vector<std::size_t> limits(num_queries, 1);
  for (std::size_t u = 1; u < num_queries; ++u) {
    limits[u] = std::min(frames, emission_frames.at(u - 1) + 1);
  }
  return limits;
}

template <typename T>
UtteranceLoss utterance_loss(Tape<T>& t, const CattModel<T>& model, const Tensor<T>& frames,
                             const std::vector<int>& tokens, const std::vector<Phrase>& list,
                             double lambda1) {
  const std::size_t n_frames = frames.rows();
  Var enc = model.encode_audio(t, t.constant(frames));
  ContextEmbeddings ctx = model.encode_context(t, list);
  BiasOutput<T> enc_b = model.bias_embed(t, enc, ctx.matrix, BiasSide::kEncoder);
  Var pred = model.predictor_sequence(t, tokens);
  BiasOutput<T> pred_b = model.bias_embed(t, pred, ctx.matrix, BiasSide::kPredictor);
  Var logits = model.joint(t, enc_b.combined, pred_b.combined);

  UtteranceLoss out;
  const int blank = model.config().blank();
  Var lt = transducer_loss(t, logits, n_frames, tokens, blank);
  out.l_transducer = static_cast<double>(t.value(lt)[0]);
  out.total = lt;
  if (!model.has_detector() || tokens.empty()) return out;

  const std::size_t u = tokens.size();
  const auto& ed = model.detector();
  const std::vector<int> labels = make_ed_labels(tokens, ctx.phrases);
  Var ed_logits;
  if (model.config().variant == Variant::kCattPed) {
    auto [k, v] = ed.project_kv(t, ctx.matrix);
    Var q = t.slice_rows(pred_b.combined, 0, u);
    ed_logits = ed.logits(t, q, k, v, std::vector<std::size_t>(u, ctx.rows()));
  } else {
    const auto emit = emission_frames(t.value(logits), n_frames, tokens, blank);
    auto [k, v] = ed.project_kv(t, enc_b.biased);
    Var q = t.slice_rows(pred_b.biased, 0, u);
    ed_logits = ed.logits(t, q, k, v, eped_key_limits(emit, u, n_frames));
  }
  Var lb = bias_ce_loss(t, ed_logits, labels);
  out.l_bias = static_cast<double>(t.value(lb)[0]);
  out.has_bias_term = true;
  out.total = t.axpy(lt, static_cast<T>(lambda1), lb);
  return out;
}

template UtteranceLoss utterance_loss(Tape<float>&, const CattModel<float>&, const Tensor<float>&,
                                      const std::vector<int>&, const std::vector<Phrase>&, double);
template UtteranceLoss utterance_loss(Tape<double>&, const CattModel<double>&,
                                      const Tensor<double>&, const std::vector<int>&,
                                      const std::vector<Phrase>&, double);

namespace {

double dev_wer(const CattModel<float>& model, const Corpus& corpus, const SynthConfig& synth,
               std::uint64_t seed, int limit) {
  const NullBiasCache<float> null_cache = make_null_bias_cache(model);
  GreedyDecoder<float> dec(model, null_cache);
  std::mt19937_64 rng(seed);
  std::vector<SequencePair> pairs;
  const std::size_t n = std::min<std::size_t>(corpus.dev.size(), static_cast<std::size_t>(limit));
  DecodeOptions opts;
  opts.mode = DecodeMode::kAlwaysOn;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& utt = corpus.dev[i];
    const auto list = sample_training_list(utt, synth, corpus.phrases, rng);
    pairs.emplace_back(utt.tokens, dec.decode(utt.frames, list, opts).tokens);
  }
  return corpus_error_rate(pairs).rate;
}

}  // namespace

TrainResult train_model(CattModel<float>& model, const Corpus& corpus, const SynthConfig& synth,
                        const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (corpus.train.empty()) throw std::invalid_argument("empty training set");
  const double lambda1 = model.has_detector() ? cfg.lambda1 : 0.0;
  AdamOptimizer<float> opt({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.clip_norm});
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(corpus.train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  bool capped = false;
  for (int epoch = 1; epoch <= cfg.epochs && !capped; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double sum_t = 0.0, sum_b = 0.0, sum_total = 0.0;
    std::size_t n_utt = 0, n_bias = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      model.params().zero_grad();
      for (std::size_t i = b0; i < b1; ++i) {
        const auto& utt = corpus.train[order[i]];
        const auto list = sample_training_list(utt, synth, corpus.phrases, rng);
        Tape<float> t;
        UtteranceLoss loss = utterance_loss(t, model, utt.frames, utt.tokens, list, lambda1);
        const double total = static_cast<double>(t.value(loss.total)[0]);
        if (!std::isfinite(total)) {
          throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                   ", utterance " + utt.id + ": loss " + std::to_string(total));
        }
        t.backward(loss.total);
        sum_t += loss.l_transducer;
        sum_total += total;
        if (loss.has_bias_term) {
          sum_b += loss.l_bias;
          ++n_bias;
        }
        ++n_utt;
      }
      const double norm = opt.step(model.params(), 1.0 / static_cast<double>(b1 - b0));
      if (!std::isfinite(norm)) {
        throw std::runtime_error("non-finite gradient norm at step " +
                                 std::to_string(opt.steps()));
      }
      if (cfg.max_steps > 0 && opt.steps() >= cfg.max_steps) {
        capped = true;
        break;
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.steps = opt.steps();
    log.l_transducer = sum_t / static_cast<double>(n_utt);
    log.l_bias = n_bias ? sum_b / static_cast<double>(n_bias) : 0.0;
    log.l_total = sum_total / static_cast<double>(n_utt);
    if (cfg.dev_limit > 0 && !corpus.dev.empty()) {
      log.dev_wer = dev_wer(model, corpus, synth, cfg.seed + 7919, cfg.dev_limit);
    }
    log.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.epochs.push_back(log);
    result.final_loss = log.l_total;
    if (on_epoch) on_epoch(log);
  }
  result.steps = opt.steps();
  return result;
}

}  // namespace catt
