// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "catt/decoder.hpp"
#include "json.hpp"
#include "model_oracle.hpp"

using namespace catt;

namespace {

ModelConfig small_config(Variant v) {
  ModelConfig c;
  c.vocab_size = 6;
  c.feature_dim = 5;
  c.model_dim = 8;
  c.num_heads = 2;
  c.encoder_layers = 1;
  c.encoder_ff_dim = 12;
  c.predictor_layers = 1;
  c.joint_dim = 10;
  c.variant = v;
  return c;
}

struct Fixture {
  std::unique_ptr<CattModel<float>> model;
  NullBiasCache<float> null_cache;
  std::unique_ptr<GreedyDecoder<float>> dec;

  explicit Fixture(Variant v, std::uint64_t seed = 1) {
    model = std::make_unique<CattModel<float>>(small_config(v), seed);
    oracle::randomize(model->params(), seed + 7, 0.6);
    // Favour blank a little so utterances are not all guard-limited.
    model->params().get("joint.output.b").value[6] = 2.5f;
    null_cache = make_null_bias_cache(*model);
    dec = std::make_unique<GreedyDecoder<float>>(*model, null_cache);
  }
};

Tensor<float> random_frames(std::size_t n, std::mt19937_64& rng) {
  return oracle::to_tensor<float>(oracle::random_mat(n, 5, rng, 1.5));
}

const std::vector<Phrase> kList{{1, 2}, {3, 4}, {5}, {0, 5, 1}};

DecodeOptions opts(DecodeMode m, EdOverride o = EdOverride::kNone) {
  DecodeOptions d;
  d.mode = m;
  d.ed_override = o;
  return d;
}

}  // namespace

TEST(Decoder, ModeNamesRoundTrip) {
  for (auto m : {DecodeMode::kAdaptivePed, DecodeMode::kAdaptiveEped, DecodeMode::kAlwaysOn,
                 DecodeMode::kRandom50, DecodeMode::kAlwaysOff}) {
    EXPECT_EQ(parse_decode_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_decode_mode("sometimes"), std::invalid_argument);
  EXPECT_EQ(parse_initial_gate("on"), InitialGate::kOn);
  EXPECT_THROW(parse_initial_gate("maybe"), std::invalid_argument);
}

TEST(Decoder, ModeNeedsMatchingDetector) {
  Fixture plain(Variant::kCatt);
  std::mt19937_64 rng(1);
  auto f = random_frames(4, rng);
  EXPECT_THROW(plain.dec->decode(f, kList, opts(DecodeMode::kAdaptivePed)), std::invalid_argument);
  EXPECT_THROW(plain.dec->decode(f, kList, opts(DecodeMode::kAdaptiveEped)), std::invalid_argument);
  Fixture ped(Variant::kCattPed);
  EXPECT_THROW(ped.dec->decode(f, kList, opts(DecodeMode::kAdaptiveEped)), std::invalid_argument);
  EXPECT_NO_THROW(plain.dec->decode(f, kList, opts(DecodeMode::kRandom50)));
}

TEST(Decoder, EmptyFramesThrow) {
  Fixture fx(Variant::kCattPed);
  EXPECT_THROW(fx.dec->decode(Tensor<float>(0, 5), kList, opts(DecodeMode::kAlwaysOn)),
               std::invalid_argument);
}

TEST(NullBiasCache, DeterministicSingleRowAndExact) {
  Fixture fx(Variant::kCattPed);
  EXPECT_EQ(make_null_bias_cache(*fx.model), fx.null_cache);
  EXPECT_EQ(fx.null_cache.rows(), 1u);
  std::mt19937_64 rng(2);
  Tape<float> t(false);
  Var q = t.constant(oracle::to_tensor<float>(oracle::random_mat(3, 8, rng)));
  for (auto side : {BiasSide::kEncoder, BiasSide::kPredictor}) {
    auto out = fx.model->bias_embed(t, q, fx.model->encode_context(t, {}).matrix, side);
    const auto& cached =
        side == BiasSide::kEncoder ? fx.null_cache.encoder_biased : fx.null_cache.predictor_biased;
    const auto& b = t.value(out.biased);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(b(r, j), cached[j]);
    Tensor<float> tiled(3, 8);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < 8; ++j) tiled(r, j) = cached[j];
    EXPECT_EQ(t.value(fx.model->combine(t, t.constant(tiled), q, side)), t.value(out.combined));
  }
}

TEST(Decoder, GateEquivalencesOnRandomUtterances) {
  Fixture ped(Variant::kCattPed, 3), eped(Variant::kCattEped, 4);
  std::mt19937_64 rng(3);
  std::size_t emitted = 0;
  for (int i = 0; i < 30; ++i) {
    auto f = random_frames(3 + static_cast<std::size_t>(i % 9), rng);
    for (Fixture* fx : {&ped, &eped}) {
      const auto mode = fx == &ped ? DecodeMode::kAdaptivePed : DecodeMode::kAdaptiveEped;
      const auto off = fx->dec->decode(f, kList, opts(DecodeMode::kAlwaysOff));
      const auto on = fx->dec->decode(f, kList, opts(DecodeMode::kAlwaysOn));
      const auto neg = fx->dec->decode(f, kList, opts(mode, EdOverride::kForceNegative));
      const auto pos = fx->dec->decode(f, kList, opts(mode, EdOverride::kForcePositive));
      EXPECT_EQ(neg.tokens, off.tokens);
      EXPECT_EQ(neg.emit_frames, off.emit_frames);
      EXPECT_EQ(pos.tokens, on.tokens);
      EXPECT_EQ(pos.emit_frames, on.emit_frames);
      // Empty list: every mode collapses to the no-bias decode.
      for (auto m : {mode, DecodeMode::kAlwaysOn, DecodeMode::kRandom50}) {
        EXPECT_EQ(fx->dec->decode(f, std::vector<Phrase>{}, opts(m)),
                  fx->dec->decode(f, std::vector<Phrase>{}, opts(DecodeMode::kAlwaysOff)));
      }
      EXPECT_EQ(fx->dec->decode(f, std::vector<Phrase>{}, opts(DecodeMode::kAlwaysOff)).tokens,
                off.tokens);
      emitted += on.tokens.size() + off.tokens.size();
    }
  }
  EXPECT_GT(emitted, 0u);
}

TEST(Decoder, StreamingPrefixInvariance) {
  Fixture ped(Variant::kCattPed, 5), eped(Variant::kCattEped, 6);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    auto f = random_frames(8, rng);
    for (auto [fx, mode] : {std::pair{&ped, DecodeMode::kAdaptivePed},
                            std::pair{&eped, DecodeMode::kAdaptiveEped},
                            std::pair{&ped, DecodeMode::kAlwaysOn},
                            std::pair{&ped, DecodeMode::kRandom50},
                            std::pair{&ped, DecodeMode::kAlwaysOff}}) {
      auto o = opts(mode);
      o.seed = 11;
      const auto full = fx->dec->decode(f, kList, o);
      for (std::size_t n = 1; n <= 8; ++n) {
        const auto part = fx->dec->decode(f.slice_rows(0, n), kList, o);
        std::size_t k = 0;
        while (k < full.tokens.size() && full.emit_frames[k] < n) ++k;
        ASSERT_EQ(part.tokens.size(), k) << to_string(mode) << " n=" << n;
        EXPECT_TRUE(std::equal(part.tokens.begin(), part.tokens.end(), full.tokens.begin()));
        EXPECT_TRUE(std::equal(part.gates.begin(), part.gates.end(), full.gates.begin()));
      }
    }
  }
}

TEST(Decoder, DeterministicAndSeeded) {
  Fixture fx(Variant::kCattPed, 7);
  std::mt19937_64 rng(7);
  auto f = random_frames(12, rng);
  for (auto m : {DecodeMode::kAdaptivePed, DecodeMode::kAlwaysOn, DecodeMode::kRandom50}) {
    auto o = opts(m);
    o.seed = 99;
    EXPECT_EQ(fx.dec->decode(f, kList, o), fx.dec->decode(f, kList, o));
  }
  // Random50 gates are the top bit of the seeded generator.
  auto o = opts(DecodeMode::kRandom50);
  o.seed = 123;
  const auto h = fx.dec->decode(f, kList, o);
  std::mt19937_64 draws(123);
  for (bool g : h.gates) EXPECT_EQ(g, (draws() >> 63) != 0);
}

TEST(Decoder, ReplayReproducesHypothesis) {
  Fixture ped(Variant::kCattPed, 8), eped(Variant::kCattEped, 9);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    auto f = random_frames(6 + static_cast<std::size_t>(i), rng);
    for (auto [fx, mode] : {std::pair{&ped, DecodeMode::kAdaptivePed},
                            std::pair{&eped, DecodeMode::kAdaptiveEped},
                            std::pair{&ped, DecodeMode::kRandom50}}) {
      auto o = opts(mode);
      o.seed = static_cast<std::uint64_t>(i);
      const auto h = fx->dec->decode(f, kList, o);
      auto r = opts(mode);
      r.replay = h.gates;
      const auto again = fx->dec->decode(f, kList, r);
      EXPECT_EQ(again.tokens, h.tokens);
      EXPECT_EQ(again.emit_frames, h.emit_frames);
      EXPECT_EQ(again.gates, h.gates);
      EXPECT_EQ(again.counters.encoder_bias_full, h.counters.encoder_bias_full);
    }
  }
}

TEST(Decoder, AlwaysOnEqualsRandom50ReplayedWithAllOnes) {
  Fixture fx(Variant::kCattPed, 10);
  std::mt19937_64 rng(10);
  auto f = random_frames(10, rng);
  const auto on = fx.dec->decode(f, kList, opts(DecodeMode::kAlwaysOn));
  auto r = opts(DecodeMode::kRandom50);
  r.replay = std::vector<bool>(on.gates.size(), true);
  EXPECT_EQ(fx.dec->decode(f, kList, r), on);
}

TEST(Decoder, ShortReplayThrows) {
  Fixture fx(Variant::kCattPed, 11);
  std::mt19937_64 rng(11);
  auto o = opts(DecodeMode::kAlwaysOn);
  o.replay = std::vector<bool>{};
  EXPECT_THROW(fx.dec->decode(random_frames(3, rng), kList, o), std::invalid_argument);
}

TEST(Decoder, CounterContract) {
  Fixture fx(Variant::kCattPed, 12);
  std::mt19937_64 rng(12);
  for (int i = 0; i < 10; ++i) {
    const std::size_t T = 4 + static_cast<std::size_t>(i);
    auto f = random_frames(T, rng);
    const auto neg = fx.dec->decode(f, kList, opts(DecodeMode::kAdaptivePed, EdOverride::kForceNegative));
    EXPECT_EQ(neg.counters.encoder_bias_full, 0u);
    for (bool g : neg.gates) EXPECT_FALSE(g);
    const auto on = fx.dec->decode(f, kList, opts(DecodeMode::kAlwaysOn));
    EXPECT_EQ(on.counters.encoder_bias_full, T);
    // The state after the last token is biased only if a joint step uses it.
    EXPECT_GE(on.counters.predictor_bias_full, on.tokens.size());
    EXPECT_LE(on.counters.predictor_bias_full, on.tokens.size() + 1);
    EXPECT_EQ(on.counters.ed_calls, 0u);
    const auto off = fx.dec->decode(f, kList, opts(DecodeMode::kAlwaysOff));
    EXPECT_EQ(off.counters.total(), 0u);
    const auto ped = fx.dec->decode(f, kList, opts(DecodeMode::kAdaptivePed));
    EXPECT_EQ(ped.counters.ed_calls, ped.tokens.size() + 1);
    EXPECT_LE(ped.counters.encoder_bias_full, T);
    EXPECT_EQ(ped.gates.size(), ped.tokens.size() + 1);
  }
}

TEST(Decoder, EpedAlwaysComputesFullBiases) {
  Fixture fx(Variant::kCattEped, 13);
  std::mt19937_64 rng(13);
  auto f = random_frames(9, rng);
  const auto h = fx.dec->decode(f, kList, opts(DecodeMode::kAdaptiveEped));
  EXPECT_EQ(h.counters.encoder_bias_full, 9u);
  EXPECT_EQ(h.counters.predictor_bias_full, h.tokens.size() + 1);
  EXPECT_EQ(h.counters.ed_calls, h.tokens.size() + 1);
}

TEST(Decoder, InitialGateAndLatchOptions) {
  Fixture fx(Variant::kCattPed, 14);
  std::mt19937_64 rng(14);
  auto f = random_frames(10, rng);
  auto o = opts(DecodeMode::kAdaptivePed);
  o.initial_gate = InitialGate::kOn;
  EXPECT_TRUE(fx.dec->decode(f, kList, o).gates.front());
  o.initial_gate = InitialGate::kOff;
  EXPECT_FALSE(fx.dec->decode(f, kList, o).gates.front());
  auto l = opts(DecodeMode::kRandom50);
  l.latch = true;
  for (std::uint64_t s = 0; s < 5; ++s) {
    l.seed = s;
    const auto h = fx.dec->decode(f, kList, l);
    bool seen = false;
    for (bool g : h.gates) {
      if (seen) {
        EXPECT_TRUE(g);
      }
      seen = seen || g;
    }
  }
}

TEST(Decoder, TraceHasOneRecordPerJointEvaluation) {
  Fixture fx(Variant::kCattPed, 15);
  std::mt19937_64 rng(15);
  auto f = random_frames(6, rng);
  std::ostringstream os;
  auto o = opts(DecodeMode::kAdaptivePed);
  o.trace = &os;
  const auto h = fx.dec->decode(f, kList, o);
  std::istringstream is(os.str());
  std::string line;
  std::size_t records = 0, blanks = 0, tokens = 0;
  while (std::getline(is, line)) {
    auto j = nlohmann::json::parse(line);
    ++records;
    for (auto key : {"frame", "token", "gate", "counters"}) EXPECT_TRUE(j.contains(key));
    (j["blank"].get<bool>() ? blanks : tokens) += 1;
  }
  EXPECT_EQ(tokens, h.tokens.size());
  EXPECT_LE(blanks, 6u);
  EXPECT_EQ(records, tokens + blanks);
}

TEST(Decoder, MaxSymbolsGuardValidated) {
  Fixture fx(Variant::kCattPed, 16);
  std::mt19937_64 rng(16);
  auto o = opts(DecodeMode::kAlwaysOn);
  o.max_symbols_per_frame = 0;
  EXPECT_THROW(fx.dec->decode(random_frames(2, rng), kList, o), std::invalid_argument);
}

namespace {

// Three-token model whose joint output depends only on the previous token:
// the predictor emits ~tanh(tanh(3))·e_k for input row k, the predictor
// combine passes LayerNorm(query) through, the encoder path is zeroed, and
// the output layer maps row k to next_of[k] with a wide margin.
std::unique_ptr<CattModel<double>> rigged_model(const std::array<int, 4>& next_of) {
  ModelConfig c;
  c.vocab_size = 3;
  c.feature_dim = 2;
  c.model_dim = 4;
  c.num_heads = 1;
  c.encoder_layers = 1;
  c.encoder_ff_dim = 4;
  c.predictor_layers = 1;
  c.joint_dim = 4;
  c.variant = Variant::kCattPed;
  auto m = std::make_unique<CattModel<double>>(c, 3);
  auto& ps = m->params();
  auto& emb = ps.get("predictor.embedding").value;  // rows: tokens 0..2, then start
  emb.fill(0.0);
  for (std::size_t k = 0; k < 4; ++k) emb(k, k) = 1.0;
  ps.get("predictor.lstm0.wh").value.fill(0.0);
  auto& wx = ps.get("predictor.lstm0.wx").value;
  wx.fill(0.0);
  for (std::size_t k = 0; k < 4; ++k) wx(k, 8 + k) = 3.0;  // cell candidate block
  auto& b = ps.get("predictor.lstm0.b").value;
  for (std::size_t k = 0; k < 4; ++k) {
    b[k] = 20.0;       // input gate open
    b[4 + k] = -20.0;  // forget gate shut
    b[8 + k] = 0.0;
    b[12 + k] = 20.0;  // output gate open
  }
  auto& comb = ps.get("bias.predictor.combine.w").value;  // 8×4: [biased; query]
  comb.fill(0.0);
  for (std::size_t k = 0; k < 4; ++k) comb(4 + k, k) = 1.0;
  ps.get("bias.predictor.combine.b").value.fill(0.0);
  ps.get("joint.encoder.w").value.fill(0.0);
  ps.get("joint.encoder.b").value.fill(0.0);
  auto& jp = ps.get("joint.predictor.w").value;
  jp.fill(0.0);
  for (std::size_t k = 0; k < 4; ++k) jp(k, k) = 1.0;
  auto& out = ps.get("joint.output.w").value;
  out.fill(0.0);
  for (std::size_t k = 0; k < 4; ++k) out(k, static_cast<std::size_t>(next_of[k])) = 10.0;
  ps.get("joint.output.b").value.fill(0.0);
  return m;
}

}  // namespace

TEST(Decoder, HandTracedLatticeWalk) {
  // Output 3 is blank. start -> 0 -> 1 -> blank; 2 -> 2.
  auto m = rigged_model({1, 3, 2, 0});
  auto nc = make_null_bias_cache(*m);
  GreedyDecoder<double> dec(*m, nc);
  Tensor<double> frames(2, 2, 0.25);
  // Frame 0: emit 0, emit 1, blank. Frame 1: previous token 1 -> blank.
  for (auto mode : {DecodeMode::kAlwaysOff, DecodeMode::kAlwaysOn, DecodeMode::kRandom50}) {
    DecodeOptions o;
    o.mode = mode;
    const auto h = dec.decode(frames, std::vector<Phrase>{{2}}, o);
    EXPECT_EQ(h.tokens, (std::vector<int>{0, 1}));
    EXPECT_EQ(h.emit_frames, (std::vector<std::size_t>{0, 0}));
  }
}

TEST(Decoder, HandTracedGuardLimitsEmissions) {
  // start -> 2, 2 -> 2: a self-loop cut by the per-frame guard.
  auto m = rigged_model({3, 3, 2, 2});
  auto nc = make_null_bias_cache(*m);
  GreedyDecoder<double> dec(*m, nc);
  DecodeOptions o;
  o.mode = DecodeMode::kAlwaysOff;
  o.max_symbols_per_frame = 2;
  const auto h = dec.decode(Tensor<double>(2, 2, -1.0), std::vector<Phrase>{}, o);
  EXPECT_EQ(h.tokens, (std::vector<int>{2, 2, 2, 2}));
  EXPECT_EQ(h.emit_frames, (std::vector<std::size_t>{0, 0, 1, 1}));
  o.max_symbols_per_frame = 5;
  EXPECT_EQ(dec.decode(Tensor<double>(3, 2), std::vector<Phrase>{}, o).tokens.size(), 15u);
}
