// SPDX-License-Identifier: Apache-2.0
#include "catt/transducer.hpp"

#include <cmath>

#include "catt/json_util.hpp"

namespace catt {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kCatt: return "catt";
    case Variant::kCattPed: return "catt+ped";
    case Variant::kCattEped: return "catt+eped";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "catt") return Variant::kCatt;
  if (s == "catt+ped") return Variant::kCattPed;
  if (s == "catt+eped") return Variant::kCattEped;
  throw std::invalid_argument("unknown variant '" + s + "' (catt|catt+ped|catt+eped)");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(feature_dim, "feature_dim");
  positive(model_dim, "model_dim");
  positive(num_heads, "num_heads");
  positive(encoder_layers, "encoder_layers");
  positive(encoder_ff_dim, "encoder_ff_dim");
  positive(predictor_layers, "predictor_layers");
  positive(joint_dim, "joint_dim");
  if (model_dim % num_heads != 0) {
    throw std::invalid_argument("model_dim must be divisible by num_heads");
  }
  if (model_dim < 2) throw std::invalid_argument("model_dim must be at least 2");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"feature_dim", c.feature_dim},
          {"model_dim", c.model_dim},
          {"num_heads", c.num_heads},
          {"encoder_layers", c.encoder_layers},
          {"encoder_ff_dim", c.encoder_ff_dim},
          {"predictor_layers", c.predictor_layers},
          {"joint_dim", c.joint_dim},
          {"variant", to_string(c.variant)},
          {"ed_activation", to_string(c.ed_activation)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j,
                      {"vocab_size", "feature_dim", "model_dim", "num_heads", "encoder_layers",
                       "encoder_ff_dim", "predictor_layers", "joint_dim", "variant",
                       "ed_activation"},
                      "model config");
  ModelConfig c;
  read_key(j, "vocab_size", c.vocab_size);
  read_key(j, "feature_dim", c.feature_dim);
  read_key(j, "model_dim", c.model_dim);
  read_key(j, "num_heads", c.num_heads);
  read_key(j, "encoder_layers", c.encoder_layers);
  read_key(j, "encoder_ff_dim", c.encoder_ff_dim);
  read_key(j, "predictor_layers", c.predictor_layers);
  read_key(j, "joint_dim", c.joint_dim);
  std::string s;
  if (j.contains("variant")) {
    read_key(j, "variant", s);
    c.variant = parse_variant(s);
  }
  if (j.contains("ed_activation")) {
    read_key(j, "ed_activation", s);
    c.ed_activation = parse_ed_activation(s);
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

template <typename T>
CattModel<T>::CattModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  build(seed);
}

template <typename T>
void CattModel<T>::build(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(cfg_.model_dim);
  const MHAConfig mha = cfg_.mha();

  enc_in_ = Linear<T>::create(params_, "encoder.input", cfg_.feature_dim, d, rng);
  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = "encoder.block" + std::to_string(l);
    EncoderBlock<T> b;
    b.ln_attn = LayerNorm<T>::create(params_, p + ".ln_attn", d);
    b.attn = MultiHeadAttention<T>::create(params_, p + ".attn", mha, rng);
    b.ln_ff = LayerNorm<T>::create(params_, p + ".ln_ff", d);
    b.ff_in = Linear<T>::create(params_, p + ".ff_in", d, cfg_.encoder_ff_dim, rng);
    b.ff_out = Linear<T>::create(params_, p + ".ff_out", cfg_.encoder_ff_dim, d, rng);
    blocks_.push_back(b);
  }
  enc_out_ln_ = LayerNorm<T>::create(params_, "encoder.ln_out", d);

  pred_embedding_ = &params_.add("predictor.embedding",
                                 glorot<T>(static_cast<std::size_t>(cfg_.vocab_size) + 1, d, rng));
  for (int l = 0; l < cfg_.predictor_layers; ++l) {
    pred_lstm_.push_back(
        Lstm<T>::create(params_, "predictor.lstm" + std::to_string(l), d, d, rng));
  }

  context_ = ContextEncoder<T>::create(params_, "context", cfg_.vocab_size, d, rng);

  auto make_bias = [&](const std::string& p) {
    BiasingLayer<T> b;
    b.attn = MultiHeadAttention<T>::create(params_, p + ".attn", mha, rng);
    b.ln_biased = LayerNorm<T>::create(params_, p + ".ln_biased", d);
    b.ln_query = LayerNorm<T>::create(params_, p + ".ln_query", d);
    b.combine = Linear<T>::create(params_, p + ".combine", 2 * d, d, rng);
    return b;
  };
  enc_bias_ = make_bias("bias.encoder");
  pred_bias_ = make_bias("bias.predictor");

  const auto j = static_cast<std::size_t>(cfg_.joint_dim);
  joint_enc_ = Linear<T>::create(params_, "joint.encoder", d, j, rng);
  joint_pred_w_ = &params_.add("joint.predictor.w", glorot<T>(d, j, rng));
  joint_out_ = Linear<T>::create(params_, "joint.output", j,
                                 static_cast<std::size_t>(cfg_.num_outputs()), rng);

  if (cfg_.has_detector()) {
    detector_ = EntityDetector<T>::create(params_, "detector", mha, cfg_.ed_activation, rng);
  }
}

template <typename T>
void CattModel<T>::load_values(const ParamStore<T>& src) {
  if (src.size() != params_.size()) {
    throw std::invalid_argument("parameter count mismatch: got " + std::to_string(src.size()) +
                                ", expected " + std::to_string(params_.size()));
  }
  for (auto& [name, p] : params_) {
    const auto& s = src.get(name);
    if (s.value.shape() != p.value.shape()) {
      throw std::invalid_argument("shape mismatch for parameter " + name);
    }
    p.value = s.value;
  }
}

template <typename T>
const EntityDetector<T>& CattModel<T>::detector() const {
  if (!detector_) throw std::logic_error("model variant has no entity detector");
  return *detector_;
}

template <typename T>
Tensor<T> CattModel<T>::positions(std::size_t start, std::size_t count) const {
  const auto d = static_cast<std::size_t>(cfg_.model_dim);
  Tensor<T> pe(count, d);
  for (std::size_t r = 0; r < count; ++r) {
    const double pos = static_cast<double>(start + r);
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      pe(r, i) = static_cast<T>(std::sin(pos * freq));
      if (i + 1 < d) pe(r, i + 1) = static_cast<T>(std::cos(pos * freq));
    }
  }
  return pe;
}

template <typename T>
EncoderCache<T> CattModel<T>::new_encoder_cache() const {
  EncoderCache<T> c;
  const auto d = static_cast<std::size_t>(cfg_.model_dim);
  c.keys.assign(blocks_.size(), Tensor<T>(0, d));
  c.values.assign(blocks_.size(), Tensor<T>(0, d));
  return c;
}

namespace {
template <typename T>
void append_rows(Tensor<T>& dst, const Tensor<T>& rows) {
  const std::size_t c = rows.cols();
  std::vector<T> data = std::move(dst.storage());
  data.insert(data.end(), rows.storage().begin(), rows.storage().end());
  const std::size_t n = data.size() / c;
  dst = Tensor<T>({n, c}, std::move(data));
}
}  // namespace

template <typename T>
Var CattModel<T>::encode_audio(Tape<T>& t, Var frames, EncoderCache<T>* cache) const {
  const Tensor<T>& f = t.value(frames);
  if (f.rows() == 0) throw std::invalid_argument("encode_audio needs at least one frame");
  if (f.cols() != static_cast<std::size_t>(cfg_.feature_dim)) {
    throw std::invalid_argument("feature_dim mismatch: got " + std::to_string(f.cols()) +
                                ", expected " + std::to_string(cfg_.feature_dim));
  }
  const std::size_t n = f.rows();
  const std::size_t start = cache ? cache->frames : 0;
  Var x = t.add(enc_in_(t, frames), t.constant(positions(start, n)));
  std::vector<std::size_t> limits(n);
  for (std::size_t i = 0; i < n; ++i) limits[i] = start + i + 1;

  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& b = blocks_[l];
    Var y = b.ln_attn(t, x);
    auto [k, v] = b.attn.project_kv(t, y);
    if (cache) {
      append_rows(cache->keys[l], t.value(k));
      append_rows(cache->values[l], t.value(v));
      k = t.reference(cache->keys[l]);
      v = t.reference(cache->values[l]);
    }
    x = t.add(x, b.attn.attend(t, y, k, v, limits));
    Var h = b.ff_out(t, t.tanh(b.ff_in(t, b.ln_ff(t, x))));
    x = t.add(x, h);
  }
  if (cache) cache->frames += n;
  return enc_out_ln_(t, x);
}

template <typename T>
ProjectedContext CattModel<T>::project_context(Tape<T>& t, Var context, BiasSide side) const {
  const auto& layer = biasing_layer(side);
  layer.attn.check_dim(t, context);
  auto [k, v] = layer.attn.project_kv(t, context);
  return {k, v, t.value(context).rows()};
}

template <typename T>
Var CattModel<T>::combine(Tape<T>& t, Var biased, Var queries, BiasSide side) const {
  const auto& layer = biasing_layer(side);
  Var parts[2] = {layer.ln_biased(t, biased), layer.ln_query(t, queries)};
  return layer.combine(t, t.concat_cols(parts));
}

template <typename T>
BiasOutput<T> CattModel<T>::bias_embed(Tape<T>& t, Var queries, const ProjectedContext& ctx,
                                       BiasSide side) const {
  const auto& layer = biasing_layer(side);
  if (t.value(queries).rows() == 0) throw std::invalid_argument("bias_embed needs queries");
  if (ctx.rows == 0) throw std::invalid_argument("context matrix has no rows");
  std::vector<std::size_t> limits(t.value(queries).rows(), ctx.rows);
  Var biased = layer.attn.attend(t, queries, ctx.keys, ctx.values, std::move(limits));
  return {biased, combine(t, biased, queries, side)};
}

template <typename T>
PredictorState<T> CattModel<T>::initial_predictor_state() const {
  PredictorState<T> s;
  const auto d = static_cast<std::size_t>(cfg_.model_dim);
  s.h.assign(pred_lstm_.size(), Tensor<T>(1, d));
  s.c.assign(pred_lstm_.size(), Tensor<T>(1, d));
  return s;
}

template <typename T>
Var CattModel<T>::predictor_step(Tape<T>& t, int prev_token, PredictorState<T>& state) const {
  if (prev_token == cfg_.blank()) throw std::invalid_argument("blank fed to the predictor");
  if (prev_token != kStartOfSequence && (prev_token < 0 || prev_token >= cfg_.vocab_size)) {
    throw std::out_of_range("predictor token " + std::to_string(prev_token) + " out of range");
  }
  const int row = prev_token == kStartOfSequence ? cfg_.vocab_size : prev_token;
  const int idx[1] = {row};
  Var x = t.gather_rows(t.param(*pred_embedding_), idx);
  for (std::size_t l = 0; l < pred_lstm_.size(); ++l) {
    LstmState<T> s{t.constant(state.h[l]), t.constant(state.c[l])};
    s = pred_lstm_[l].step(t, x, s);
    state.h[l] = t.value(s.h);
    state.c[l] = t.value(s.c);
    x = s.h;
  }
  return x;
}

template <typename T>
Var CattModel<T>::predictor_sequence(Tape<T>& t, const std::vector<int>& tokens) const {
  std::vector<int> inputs{cfg_.vocab_size};
  for (int tok : tokens) {
    if (tok == cfg_.blank()) throw std::invalid_argument("blank in predictor targets");
    if (tok < 0 || tok >= cfg_.vocab_size) {
      throw std::out_of_range("token " + std::to_string(tok) + " out of range");
    }
    inputs.push_back(tok);
  }
  Var table = t.param(*pred_embedding_);
  std::vector<LstmState<T>> states;
  for (const auto& l : pred_lstm_) states.push_back(l.zero_state(t, 1));
  std::vector<Var> outs;
  for (int in : inputs) {
    const int idx[1] = {in};
    Var x = t.gather_rows(table, idx);
    for (std::size_t l = 0; l < pred_lstm_.size(); ++l) {
      states[l] = pred_lstm_[l].step(t, x, states[l]);
      x = states[l].h;
    }
    outs.push_back(x);
  }
  return t.concat_rows(outs);
}

template class CattModel<float>;
template class CattModel<double>;

}  // namespace catt
