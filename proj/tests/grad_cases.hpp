// SPDX-License-Identifier: Apache-2.0
#pragma once

// Gradient cases shared by the unit tests and the acceptance run: analytic
// gradients of every trainable block and of the full training objective
// against finite differences, in both precisions, over 20 seeds each.

#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "catt/layers.hpp"
#include "catt/train.hpp"
#include "gradcheck.hpp"
#include "model_oracle.hpp"

namespace grad_cases {

using namespace catt;

inline constexpr int kSeeds = 20;
inline constexpr double kTol64 = 1e-6;
inline constexpr double kTol32 = 1e-3;
// Below these magnitudes errors are measured absolutely (see rel_err).
inline constexpr double kFloor64 = 1e-4;
inline constexpr double kFloor32 = 1e-2;
inline constexpr double kStep = 1e-3;

template <typename T>
Tensor<T> draw(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor<T> out(r, c);
  for (auto& v : out.storage()) v = static_cast<T>(d(rng));
  return out;
}

// Scalar read-out Σ out ⊙ R with a fixed random R, so every output entry
// contributes a distinct weight.
template <typename T>
Var readout(Tape<T>& t, Var out, std::mt19937_64& rng) {
  const auto& v = t.value(out);
  return t.sum(t.mul(out, t.constant(draw<T>(v.rows(), v.cols(), rng))));
}

template <typename T>
void copy_values(ParamStore<T>& dst, const ParamStore<double>& src) {
  for (auto& [name, p] : dst) {
    const auto& s = src.get(name).value.storage();
    for (std::size_t i = 0; i < s.size(); ++i) p.value[i] = static_cast<T>(s[i]);
  }
}

// `Build` has `template <class T> LossFn<T> operator()(ParamStore<T>&, seed)`
// and must consume its rng identically for both precisions.
// Worst guarded relative error over all seeds, per precision.
struct Worst {
  double rel64 = 0.0, rel32 = 0.0;
  std::string where64, where32;
  std::size_t checked = 0;

  void add(const gradcheck::Result& r64, const gradcheck::Result& r32, int seed) {
    if (r64.max_rel >= rel64) {
      rel64 = r64.max_rel;
      where64 = "seed " + std::to_string(seed) + ": " + r64.worst;
    }
    if (r32.max_rel >= rel32) {
      rel32 = r32.max_rel;
      where32 = "seed " + std::to_string(seed) + ": " + r32.worst;
    }
    checked += r64.checked + r32.checked;
  }
  bool ok() const { return rel64 <= kTol64 && rel32 <= kTol32; }
};

template <typename Build>
Worst check_block(const Build& build, std::size_t per_param) {
  Worst w;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    ParamStore<double> pd;
    auto fd = build.template operator()<double>(pd, static_cast<std::uint64_t>(seed));
    oracle::randomize(pd, static_cast<std::uint64_t>(seed) + 1000, 0.5);
    auto r64 = gradcheck::check<double>(pd, fd, pd, fd, kStep, kFloor64, per_param,
                                        static_cast<std::uint64_t>(seed));

    ParamStore<float> pf;
    auto ff = build.template operator()<float>(pf, static_cast<std::uint64_t>(seed));
    copy_values(pf, pd);
    auto r32 = gradcheck::check<float>(pf, ff, pd, fd, kStep, kFloor32, per_param,
                                       static_cast<std::uint64_t>(seed));
    w.add(r64, r32, seed);
  }
  return w;
}

struct LinearCase {
  template <typename T>
  gradcheck::LossFn<T> operator()(ParamStore<T>& ps, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    auto l = Linear<T>::create(ps, "lin", 5, 4, rng);
    auto x = draw<T>(3, 5, rng);
    return [=](Tape<T>& t) {
      std::mt19937_64 r(seed + 7);
      return readout(t, t.tanh(l(t, t.constant(x))), r);
    };
  }
};

struct LayerNormCase {
  template <typename T>
  gradcheck::LossFn<T> operator()(ParamStore<T>& ps, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    auto ln = LayerNorm<T>::create(ps, "ln", 6);
    auto in = Linear<T>::create(ps, "in", 4, 6, rng);
    auto x = draw<T>(3, 4, rng);
    return [=](Tape<T>& t) {
      std::mt19937_64 r(seed + 7);
      return readout(t, ln(t, in(t, t.constant(x))), r);
    };
  }
};

struct MhaCase {
  template <typename T>
  gradcheck::LossFn<T> operator()(ParamStore<T>& ps, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    auto m = MultiHeadAttention<T>::create(ps, "mha", {8, 2}, rng);
    auto q = draw<T>(3, 8, rng), kv = draw<T>(5, 8, rng);
    return [=](Tape<T>& t) {
      std::mt19937_64 r(seed + 7);
      return readout(t, m(t, t.constant(q), t.constant(kv)), r);
    };
  }
};

struct LstmCase {
  template <typename T>
  gradcheck::LossFn<T> operator()(ParamStore<T>& ps, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    auto l = Lstm<T>::create(ps, "lstm", 5, 4, rng);
    std::vector<Tensor<T>> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(draw<T>(2, 5, rng));
    return [=](Tape<T>& t) {
      std::mt19937_64 r(seed + 7);
      auto s = l.zero_state(t, 2);
      std::vector<Var> hs;
      for (const auto& x : xs) {
        s = l.step(t, t.constant(x), s);
        hs.push_back(s.h);
      }
      hs.push_back(s.c);
      return readout(t, t.concat_cols(hs), r);
    };
  }
};

struct BlstmCase {
  template <typename T>
  gradcheck::LossFn<T> operator()(ParamStore<T>& ps, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    auto b = Blstm<T>::create(ps, "blstm", 4, 3, 5, rng);
    auto x = draw<T>(3, 4, rng);
    return [=](Tape<T>& t) {
      std::mt19937_64 r(seed + 7);
      return readout(t, b.forward(t, t.constant(x)), r);
    };
  }
};

struct DetectorCase {
  EdActivation act;
  template <typename T>
  gradcheck::LossFn<T> operator()(ParamStore<T>& ps, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    auto ed = EntityDetector<T>::create(ps, "detector", {8, 2}, act, rng);
    auto x = draw<T>(4, 8, rng), kv = draw<T>(6, 8, rng);
    return [=](Tape<T>& t) {
      std::mt19937_64 r(seed + 7);
      auto [k, v] = ed.project_kv(t, t.constant(kv));
      Var logits = ed.logits(t, t.constant(x), k, v, {1, 3, 6, 6});
      return readout(t, t.log_softmax_rows(logits), r);
    };
  }
};

inline ModelConfig small_model(Variant v) {
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

// Model-level checks share one double model as the finite-difference
// reference and a float copy for the 32-bit run.
template <typename MakeLoss>
Worst check_model(Variant v, const MakeLoss& make_loss, std::size_t per_param, double scale) {
  Worst w;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    auto md = std::make_unique<CattModel<double>>(small_model(v), static_cast<std::uint64_t>(seed));
    oracle::randomize(md->params(), static_cast<std::uint64_t>(seed) + 1000, scale);
    auto mf = md->cast<float>();
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 5000);
    auto fd = make_loss(*md, rng, static_cast<std::uint64_t>(seed));
    auto ff = make_loss(*mf, rng, static_cast<std::uint64_t>(seed));
    auto r64 = gradcheck::check<double>(md->params(), fd, md->params(), fd, kStep, kFloor64,
                                        per_param, static_cast<std::uint64_t>(seed));
    auto r32 = gradcheck::check<float>(mf->params(), ff, md->params(), fd, kStep, kFloor32,
                                       per_param, static_cast<std::uint64_t>(seed));
    w.add(r64, r32, seed);
  }
  return w;
}

struct JointLoss {
  template <typename T>
  gradcheck::LossFn<T> operator()(const CattModel<T>& m, std::mt19937_64&, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    auto enc = draw<T>(3, 8, rng), pred = draw<T>(2, 8, rng);
    return [&m, enc, pred, seed](Tape<T>& t) {
      std::mt19937_64 r(seed + 7);
      return readout(t, t.log_softmax_rows(m.joint(t, t.constant(enc), t.constant(pred))), r);
    };
  }
};

struct FullObjective {
  template <typename T>
  gradcheck::LossFn<T> operator()(const CattModel<T>& m, std::mt19937_64&, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    auto frames = draw<T>(7, 5, rng);
    const std::vector<int> tokens{1, 3, 2};
    const std::vector<Phrase> list{{1, 2}, {3, 2}, {4}};
    return [&m, frames, tokens, list](Tape<T>& t) {
      return utterance_loss(t, m, frames, tokens, list, 0.4).total;
    };
  }
};


// Every gradient case, by name.
inline std::vector<std::pair<std::string, std::function<Worst()>>> all_cases() {
  return {
      {"linear", [] { return check_block(LinearCase{}, 1000); }},
      {"layernorm", [] { return check_block(LayerNormCase{}, 1000); }},
      {"multi-head attention", [] { return check_block(MhaCase{}, 1000); }},
      {"lstm", [] { return check_block(LstmCase{}, 1000); }},
      {"blstm", [] { return check_block(BlstmCase{}, 1000); }},
      {"detector (identity)", [] { return check_block(DetectorCase{EdActivation::kIdentity}, 1000); }},
      {"detector (sigmoid)", [] { return check_block(DetectorCase{EdActivation::kSigmoid}, 1000); }},
      {"joint", [] { return check_model(Variant::kCatt, JointLoss{}, 1000, 0.5); }},
      {"objective catt", [] { return check_model(Variant::kCatt, FullObjective{}, 4, 0.3); }},
      {"objective catt+ped", [] { return check_model(Variant::kCattPed, FullObjective{}, 4, 0.3); }},
      {"objective catt+eped", [] { return check_model(Variant::kCattEped, FullObjective{}, 4, 0.3); }},
  };
}

}  // namespace grad_cases
