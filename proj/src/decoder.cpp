// SPDX-License-Identifier: Apache-2.0
#include "catt/decoder.hpp"

#include <atomic>
#include <random>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "json.hpp"

namespace catt {

std::string to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::kAdaptivePed: return "adaptive-ped";
    case DecodeMode::kAdaptiveEped: return "adaptive-eped";
    case DecodeMode::kAlwaysOn: return "always-on";
    case DecodeMode::kRandom50: return "random50";
    case DecodeMode::kAlwaysOff: return "always-off";
  }
  return "?";
}

DecodeMode parse_decode_mode(const std::string& s) {
  if (s == "adaptive-ped") return DecodeMode::kAdaptivePed;
  if (s == "adaptive-eped") return DecodeMode::kAdaptiveEped;
  if (s == "always-on") return DecodeMode::kAlwaysOn;
  if (s == "random50") return DecodeMode::kRandom50;
  if (s == "always-off") return DecodeMode::kAlwaysOff;
  throw std::invalid_argument("unknown decode mode '" + s +
                              "' (adaptive-ped|adaptive-eped|always-on|random50|always-off)");
}

std::string to_string(InitialGate g) {
  switch (g) {
    case InitialGate::kDetect: return "detect";
    case InitialGate::kOn: return "on";
    case InitialGate::kOff: return "off";
  }
  return "?";
}

InitialGate parse_initial_gate(const std::string& s) {
  if (s == "detect") return InitialGate::kDetect;
  if (s == "on") return InitialGate::kOn;
  if (s == "off") return InitialGate::kOff;
  throw std::invalid_argument("unknown initial gate '" + s + "' (detect|on|off)");
}

void check_mode_supported(const ModelConfig& cfg, DecodeMode mode) {
  if (mode == DecodeMode::kAdaptivePed && cfg.variant != Variant::kCattPed) {
    throw std::invalid_argument("adaptive-ped needs a catt+ped checkpoint, got " +
                                to_string(cfg.variant));
  }
  if (mode == DecodeMode::kAdaptiveEped && cfg.variant != Variant::kCattEped) {
    throw std::invalid_argument("adaptive-eped needs a catt+eped checkpoint, got " +
                                to_string(cfg.variant));
  }
}

template <typename T>
NullBiasCache<T> make_null_bias_cache(const CattModel<T>& model) {
  Tape<T> t(false);
  ContextEmbeddings ce = model.encode_context(t, {});
  NullBiasCache<T> c;
  c.context = t.value(ce.matrix);
  const auto d = static_cast<std::size_t>(model.config().model_dim);
  Var probe = t.constant(Tensor<T>(1, d));
  for (BiasSide side : {BiasSide::kEncoder, BiasSide::kPredictor}) {
    ProjectedContext pc = model.project_context(t, ce.matrix, side);
    Var biased = model.biasing_layer(side).attn.attend(t, probe, pc.keys, pc.values, {1});
    (side == BiasSide::kEncoder ? c.encoder_biased : c.predictor_biased) = t.value(biased);
  }
  return c;
}

template <typename T>
PreparedList<T> prepare_list(const CattModel<T>& model, const std::vector<Phrase>& phrases) {
  Tape<T> t(false);
  ContextEmbeddings ce = model.encode_context(t, phrases);
  PreparedList<T> p;
  p.phrases = ce.phrases;
  p.context = t.value(ce.matrix);
  ProjectedContext e = model.project_context(t, ce.matrix, BiasSide::kEncoder);
  p.enc_keys = t.value(e.keys);
  p.enc_values = t.value(e.values);
  ProjectedContext q = model.project_context(t, ce.matrix, BiasSide::kPredictor);
  p.pred_keys = t.value(q.keys);
  p.pred_values = t.value(q.values);
  if (model.has_detector()) {
    auto [k, v] = model.detector().project_kv(t, ce.matrix);
    p.ed_keys = t.value(k);
    p.ed_values = t.value(v);
  }
  return p;
}

namespace {

// Lazily computed joint-ready rows for one side under the full or null list.
template <typename T>
struct SideRows {
  std::optional<Tensor<T>> full_biased, full_combined, full_proj;
  std::optional<Tensor<T>> null_proj;
};

template <typename T>
class DecodeRun {
 public:
  DecodeRun(const CattModel<T>& m, const NullBiasCache<T>& nc, const PreparedList<T>& list,
            const DecodeOptions& opts)
      : m_(m), null_(nc), list_(list), opts_(opts), rng_(opts.seed) {
    mode_ = opts.mode;
    if (list.empty() && mode_ != DecodeMode::kAlwaysOff) {
      static std::atomic<bool> warned{false};
      if (!warned.exchange(true)) {
        spdlog::warn("empty bias list: decoding with the no-bias entry only (reported once)");
      }
      mode_ = DecodeMode::kAlwaysOff;
    }
    if (opts.max_symbols_per_frame < 1) {
      throw std::invalid_argument("max_symbols_per_frame must be at least 1");
    }
    enc_cache_ = m.new_encoder_cache();
    pred_state_ = m.initial_predictor_state();
  }

  Hypothesis run(const Tensor<T>& frames) {
    if (frames.rows() == 0) throw std::invalid_argument("decode needs at least one frame");
    advance_predictor(kStartOfSequence);
    for (std::size_t f = 0; f < frames.rows(); ++f) {
      frame_ = f;
      encode_frame(frames.slice_rows(f, f + 1));
      if (hyp_.gates.empty()) decide();
      for (int s = 0; s < opts_.max_symbols_per_frame; ++s) {
        const int tok = step();
        if (tok == m_.config().blank()) break;
        hyp_.tokens.push_back(tok);
        hyp_.emit_frames.push_back(f);
        advance_predictor(tok);
        decide();
      }
    }
    hyp_.frames = frames.rows();
    return std::move(hyp_);
  }

 private:
  void encode_frame(const Tensor<T>& frame) {
    Tape<T> t(false);
    h_enc_ = t.value(m_.encode_audio(t, t.constant(frame), &enc_cache_));
    enc_ = SideRows<T>{};
    if (mode_ == DecodeMode::kAdaptiveEped) {
      ensure_full(enc_, h_enc_, BiasSide::kEncoder);
      Tape<T> te(false);
      auto [k, v] = m_.detector().project_kv(te, te.reference(*enc_.full_biased));
      append_rows(frame_keys_, te.value(k));
      append_rows(frame_values_, te.value(v));
    }
  }

  void advance_predictor(int token) {
    Tape<T> t(false);
    h_pred_ = t.value(m_.predictor_step(t, token, pred_state_));
    pred_ = SideRows<T>{};
    if (mode_ == DecodeMode::kAdaptivePed || mode_ == DecodeMode::kAdaptiveEped) {
      ensure_full(pred_, h_pred_, BiasSide::kPredictor);
    }
  }

  void ensure_full(SideRows<T>& rows, const Tensor<T>& query, BiasSide side) {
    if (rows.full_combined) return;
    const bool enc = side == BiasSide::kEncoder;
    Tape<T> t(false);
    Var q = t.reference(query);
    const auto& layer = m_.biasing_layer(side);
    Var biased = layer.attn.attend(t, q, t.reference(enc ? list_.enc_keys : list_.pred_keys),
                                   t.reference(enc ? list_.enc_values : list_.pred_values),
                                   {list_.context.rows()});
    Var combined = m_.combine(t, biased, q, side);
    rows.full_biased = t.value(biased);
    rows.full_combined = t.value(combined);
    rows.full_proj = t.value(enc ? m_.joint_encoder_proj(t, combined)
                                 : m_.joint_predictor_proj(t, combined));
    if (enc) {
      ++hyp_.counters.encoder_bias_full;
    } else {
      ++hyp_.counters.predictor_bias_full;
    }
  }

  const Tensor<T>& joint_rows(SideRows<T>& rows, const Tensor<T>& query, BiasSide side,
                              bool gate) {
    if (gate) {
      ensure_full(rows, query, side);
      return *rows.full_proj;
    }
    if (!rows.null_proj) {
      const bool enc = side == BiasSide::kEncoder;
      Tape<T> t(false);
      Var q = t.reference(query);
      Var combined = m_.combine(t, t.reference(enc ? null_.encoder_biased : null_.predictor_biased),
                                q, side);
      rows.null_proj = t.value(enc ? m_.joint_encoder_proj(t, combined)
                                   : m_.joint_predictor_proj(t, combined));
    }
    return *rows.null_proj;
  }

  void decide() {
    bool gate;
    const bool first = hyp_.gates.empty();
    if (opts_.replay) {
      if (replay_pos_ >= opts_.replay->size()) {
        throw std::invalid_argument("replayed gate trace is shorter than the decode");
      }
      gate = (*opts_.replay)[replay_pos_++];
    } else {
      switch (mode_) {
        case DecodeMode::kAlwaysOff: gate = false; break;
        case DecodeMode::kAlwaysOn: gate = true; break;
        case DecodeMode::kRandom50: gate = (rng_() >> 63) != 0; break;
        default: gate = detect(first); break;
      }
      if (opts_.latch && !hyp_.gates.empty() && hyp_.gates.back()) gate = true;
    }
    hyp_.gates.push_back(gate);
  }

  bool detect(bool first) {
    if (first && opts_.initial_gate != InitialGate::kDetect) {
      return opts_.initial_gate == InitialGate::kOn;
    }
    if (opts_.ed_override != EdOverride::kNone) {
      return opts_.ed_override == EdOverride::kForcePositive;
    }
    const auto& ed = m_.detector();
    Tape<T> t(false);
    Var logits;
    if (mode_ == DecodeMode::kAdaptivePed) {
      logits = ed.logits(t, t.reference(*pred_.full_combined), t.reference(list_.ed_keys),
                         t.reference(list_.ed_values), {list_.ed_keys.rows()});
    } else {
      if (frame_keys_.rows() == 0) throw std::logic_error("entity detector has no frames");
      logits = ed.logits(t, t.reference(*pred_.full_biased), t.reference(frame_keys_),
                         t.reference(frame_values_), {frame_keys_.rows()});
    }
    ++hyp_.counters.ed_calls;
    return ed_decide<T>(t.value(logits).row(0));
  }

  int step() {
    const bool gate = hyp_.gates.back();
    const Tensor<T>& e = joint_rows(enc_, h_enc_, BiasSide::kEncoder, gate);
    const Tensor<T>& p = joint_rows(pred_, h_pred_, BiasSide::kPredictor, gate);
    Tape<T> t(false);
    const Tensor<T>& z = t.value(m_.joint_from_proj(t, t.reference(e), t.reference(p)));
    int best = 0;
    for (std::size_t k = 1; k < z.cols(); ++k) {
      if (z(0, k) > z(0, static_cast<std::size_t>(best))) best = static_cast<int>(k);
    }
    if (opts_.trace) {
      nlohmann::json rec = {{"frame", frame_},
                            {"token", best},
                            {"blank", best == m_.config().blank()},
                            {"gate", gate},
                            {"counters",
                             {{"encoder_bias_full", hyp_.counters.encoder_bias_full},
                              {"predictor_bias_full", hyp_.counters.predictor_bias_full},
                              {"ed_calls", hyp_.counters.ed_calls}}}};
      *opts_.trace << rec.dump() << '\n';
    }
    return best;
  }

  static void append_rows(Tensor<T>& dst, const Tensor<T>& rows) {
    const std::size_t c = rows.cols();
    std::vector<T> data = std::move(dst.storage());
    data.insert(data.end(), rows.storage().begin(), rows.storage().end());
    const std::size_t n = data.size() / c;
    dst = Tensor<T>({n, c}, std::move(data));
  }

  const CattModel<T>& m_;
  const NullBiasCache<T>& null_;
  const PreparedList<T>& list_;
  const DecodeOptions& opts_;
  DecodeMode mode_;
  std::mt19937_64 rng_;
  std::size_t replay_pos_ = 0;
  std::size_t frame_ = 0;

  EncoderCache<T> enc_cache_;
  PredictorState<T> pred_state_;
  Tensor<T> h_enc_, h_pred_;
  SideRows<T> enc_, pred_;
  Tensor<T> frame_keys_, frame_values_;  // detector keys over biased encoder rows
  Hypothesis hyp_;
};

}  // namespace

template <typename T>
Hypothesis GreedyDecoder<T>::decode(const Tensor<T>& frames, const PreparedList<T>& list,
                                    const DecodeOptions& opts) const {
  check_mode_supported(model_.config(), opts.mode);
  return DecodeRun<T>(model_, null_, list, opts).run(frames);
}

template NullBiasCache<float> make_null_bias_cache(const CattModel<float>&);
template NullBiasCache<double> make_null_bias_cache(const CattModel<double>&);
template PreparedList<float> prepare_list(const CattModel<float>&, const std::vector<Phrase>&);
template PreparedList<double> prepare_list(const CattModel<double>&, const std::vector<Phrase>&);
template class GreedyDecoder<float>;
template class GreedyDecoder<double>;

}  // namespace catt
