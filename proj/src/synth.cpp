// SPDX-License-Identifier: Apache-2.0
#include "catt/synth.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "catt/json_util.hpp"

namespace catt {

void SynthConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  auto rate = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(name) + " must be in [0,1]");
  };
  positive(vocab_size, "vocab_size");
  positive(feature_dim, "feature_dim");
  positive(rare_tokens, "rare_tokens");
  positive(rare_siblings, "rare_siblings");
  if (rare_tokens % rare_siblings != 0) {
    throw std::invalid_argument("rare_tokens must be a multiple of rare_siblings");
  }
  positive(trigger_tokens, "trigger_tokens");
  positive(frames_per_token, "frames_per_token");
  positive(frame_ms, "frame_ms");
  positive(num_entities, "num_entities");
  positive(entity_length, "entity_length");
  positive(filler_min, "filler_min");
  positive(train_size, "train_size");
  positive(dev_size, "dev_size");
  positive(test_size, "test_size");
  positive(train_list_max, "train_list_max");
  positive(anchor_weight, "anchor_weight");
  if (frame_jitter < 0 || frame_jitter >= frames_per_token) {
    throw std::invalid_argument("frame_jitter must be in [0, frames_per_token)");
  }
  if (noise_std < 0 || rare_offset < 0) throw std::invalid_argument("noise must be non-negative");
  if (num_distractors < 0) throw std::invalid_argument("num_distractors must be non-negative");
  if (filler_max < filler_min) throw std::invalid_argument("filler_max < filler_min");
  rate(train_entity_rate, "train_entity_rate");
  rate(inventory_train_rate, "inventory_train_rate");
  rate(train_trigger_rate, "train_trigger_rate");
  rate(train_empty_list_rate, "train_empty_list_rate");
  if (commons() < anchors() + 1) {
    throw std::invalid_argument("vocabulary too small: need more common tokens than rare tokens");
  }
  // Pool phrases need distinct anchor shapes; with one sibling per anchor a
  // shape may not repeat an anchor back to back.
  double capacity = anchors();
  for (int i = 1; i < entity_length; ++i) capacity *= rare_siblings > 1 ? anchors() : anchors() - 1;
  if (capacity < num_entities + num_distractors) {
    throw std::invalid_argument("not enough distinct phrase shapes for num_entities + num_distractors");
  }
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"feature_dim", c.feature_dim},
          {"rare_tokens", c.rare_tokens},
          {"rare_siblings", c.rare_siblings},
          {"trigger_tokens", c.trigger_tokens},
          {"frames_per_token", c.frames_per_token},
          {"frame_jitter", c.frame_jitter},
          {"noise_std", c.noise_std},
          {"rare_offset", c.rare_offset},
          {"frame_ms", c.frame_ms},
          {"num_entities", c.num_entities},
          {"num_distractors", c.num_distractors},
          {"entity_length", c.entity_length},
          {"filler_min", c.filler_min},
          {"filler_max", c.filler_max},
          {"anchor_weight", c.anchor_weight},
          {"train_entity_rate", c.train_entity_rate},
          {"inventory_train_rate", c.inventory_train_rate},
          {"train_trigger_rate", c.train_trigger_rate},
          {"train_empty_list_rate", c.train_empty_list_rate},
          {"train_list_max", c.train_list_max},
          {"train_size", c.train_size},
          {"dev_size", c.dev_size},
          {"test_size", c.test_size},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(
      j,
      {"vocab_size", "feature_dim", "rare_tokens", "rare_siblings", "trigger_tokens", "frames_per_token",
       "frame_jitter", "noise_std", "rare_offset", "frame_ms", "num_entities", "num_distractors",
       "entity_length", "filler_min", "filler_max", "anchor_weight", "train_entity_rate", "inventory_train_rate",
       "train_trigger_rate", "train_empty_list_rate", "train_list_max", "train_size", "dev_size",
       "test_size", "seed"},
      "synth config");
  SynthConfig c;
  read_key(j, "vocab_size", c.vocab_size);
  read_key(j, "feature_dim", c.feature_dim);
  read_key(j, "rare_tokens", c.rare_tokens);
  read_key(j, "rare_siblings", c.rare_siblings);
  read_key(j, "trigger_tokens", c.trigger_tokens);
  read_key(j, "frames_per_token", c.frames_per_token);
  read_key(j, "frame_jitter", c.frame_jitter);
  read_key(j, "noise_std", c.noise_std);
  read_key(j, "rare_offset", c.rare_offset);
  read_key(j, "frame_ms", c.frame_ms);
  read_key(j, "num_entities", c.num_entities);
  read_key(j, "num_distractors", c.num_distractors);
  read_key(j, "entity_length", c.entity_length);
  read_key(j, "filler_min", c.filler_min);
  read_key(j, "filler_max", c.filler_max);
  read_key(j, "anchor_weight", c.anchor_weight);
  read_key(j, "train_entity_rate", c.train_entity_rate);
  read_key(j, "inventory_train_rate", c.inventory_train_rate);
  read_key(j, "train_trigger_rate", c.train_trigger_rate);
  read_key(j, "train_empty_list_rate", c.train_empty_list_rate);
  read_key(j, "train_list_max", c.train_list_max);
  read_key(j, "train_size", c.train_size);
  read_key(j, "dev_size", c.dev_size);
  read_key(j, "test_size", c.test_size);
  read_key(j, "seed", c.seed);
  c.validate();
  return c;
}

std::vector<Phrase> PhrasePools::all() const {
  std::vector<Phrase> out = inventory;
  out.insert(out.end(), distractors.begin(), distractors.end());
  return out;
}

namespace {

enum Split : std::uint64_t { kTrain = 1, kDev = 2, kPersonalized = 3, kCommon = 4, kLayout = 5 };

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t split, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(split), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// Onset and sustain vectors per token: the first frame of a token uses the
// onset template, the rest the sustain template, so repeats stay countable.
struct Templates {
  std::vector<std::vector<float>> onset, sustain;
};

Templates make_templates(const SynthConfig& cfg) {
  auto rng = derived_rng(cfg.seed, kLayout, 0);
  std::normal_distribution<double> unit(0.0, 1.0);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  const auto d = static_cast<std::size_t>(cfg.feature_dim);
  Templates t;
  t.onset.assign(v, std::vector<float>(d));
  t.sustain.assign(v, std::vector<float>(d));
  for (std::size_t k = 0; k < v; ++k) {
    for (std::size_t i = 0; i < d; ++i) t.onset[k][i] = static_cast<float>(unit(rng));
    for (std::size_t i = 0; i < d; ++i) t.sustain[k][i] = static_cast<float>(unit(rng));
  }
  std::normal_distribution<double> offset(0.0, cfg.rare_offset);
  for (int r = cfg.first_rare(); r < cfg.vocab_size; ++r) {
    const auto a = static_cast<std::size_t>(cfg.anchor_of(r));
    const auto rr = static_cast<std::size_t>(r);
    for (std::size_t i = 0; i < d; ++i) {
      t.onset[rr][i] = t.onset[a][i] + static_cast<float>(offset(rng));
      t.sustain[rr][i] = t.sustain[a][i] + static_cast<float>(offset(rng));
    }
  }
  return t;
}

PhrasePools make_pools(const SynthConfig& cfg) {
  auto rng = derived_rng(cfg.seed, kLayout, 1);
  std::uniform_int_distribution<int> pick(cfg.first_rare(), cfg.vocab_size - 1);
  // One phrase per anchor shape: no pool phrase is a sibling-swapped
  // variant of another, so a list never holds a look-alike of its entity.
  std::set<Phrase> seen;
  std::vector<Phrase> phrases;
  const std::size_t want = static_cast<std::size_t>(cfg.num_entities + cfg.num_distractors);
  std::size_t attempts = 0;
  while (phrases.size() < want) {
    if (++attempts > want * 1000) throw std::runtime_error("could not draw distinct phrases");
    Phrase p;
    while (static_cast<int>(p.size()) < cfg.entity_length) {
      const int tok = pick(rng);
      if (!p.empty() && p.back() == tok) continue;
      p.push_back(tok);
    }
    Phrase shape;
    for (int tok : p) shape.push_back(cfg.anchor_of(tok));
    if (seen.insert(shape).second) phrases.push_back(p);
  }
  PhrasePools pools;
  pools.inventory.assign(phrases.begin(), phrases.begin() + cfg.num_entities);
  pools.distractors.assign(phrases.begin() + cfg.num_entities, phrases.end());
  pools.look_alike_group = look_alike_groups(cfg);
  return pools;
}

std::vector<int> filler(const SynthConfig& cfg, std::mt19937_64& rng) {
  std::vector<double> w(static_cast<std::size_t>(cfg.commons()), 1.0);
  for (int a = 0; a < cfg.anchors(); ++a) w[static_cast<std::size_t>(a)] = cfg.anchor_weight;
  std::discrete_distribution<int> tok(w.begin(), w.end());
  std::uniform_int_distribution<int> len(cfg.filler_min, cfg.filler_max);
  std::vector<int> out(static_cast<std::size_t>(len(rng)));
  for (int& t : out) t = tok(rng);
  return out;
}

void insert_slot(std::vector<int>& tokens, const std::vector<int>& slot, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pos(0, tokens.size());
  tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos(rng)), slot.begin(), slot.end());
}

Tensor<float> render(const std::vector<int>& tokens, const Templates& tpl, const SynthConfig& cfg,
                     std::mt19937_64& rng) {
  std::uniform_int_distribution<int> jitter(-cfg.frame_jitter, cfg.frame_jitter);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto d = static_cast<std::size_t>(cfg.feature_dim);
  std::vector<float> data;
  for (int tok : tokens) {
    const int n = cfg.frames_per_token + jitter(rng);
    for (int f = 0; f < n; ++f) {
      const auto& base = f == 0 ? tpl.onset[static_cast<std::size_t>(tok)]
                                : tpl.sustain[static_cast<std::size_t>(tok)];
      for (std::size_t i = 0; i < d; ++i) {
        const double eps = cfg.noise_std > 0 ? cfg.noise_std * noise(rng) : 0.0;
        data.push_back(base[i] + static_cast<float>(eps));
      }
    }
  }
  const std::size_t rows = data.size() / d;
  return Tensor<float>({rows, d}, std::move(data));
}

int draw_trigger(const SynthConfig& cfg, std::mt19937_64& rng) {
  return std::uniform_int_distribution<int>(cfg.first_trigger(), cfg.first_rare() - 1)(rng);
}

}  // namespace

Corpus generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  Corpus c;
  c.phrases = make_pools(cfg);
  const Templates tpl = make_templates(cfg);

  auto make = [&](Split split, int n, const char* prefix) {
    std::vector<Utterance> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      auto rng = derived_rng(cfg.seed, split, static_cast<std::uint64_t>(i));
      std::uniform_real_distribution<double> coin(0.0, 1.0);
      Utterance u;
      u.id = std::string(prefix) + "-" + std::to_string(i);
      u.tokens = filler(cfg, rng);
      if (split == kTrain || split == kDev) {
        if (coin(rng) < cfg.train_entity_rate) {
          const auto& from = coin(rng) < cfg.inventory_train_rate || c.phrases.distractors.empty()
                                 ? c.phrases.inventory
                                 : c.phrases.distractors;
          const Phrase& p = from[std::uniform_int_distribution<std::size_t>(0, from.size() - 1)(rng)];
          std::vector<int> slot;
          if (coin(rng) < cfg.train_trigger_rate) slot.push_back(draw_trigger(cfg, rng));
          slot.insert(slot.end(), p.begin(), p.end());
          insert_slot(u.tokens, slot, rng);
          u.entities.push_back(p);
        }
      } else if (split == kPersonalized) {
        const auto& inv = c.phrases.inventory;
        const Phrase& p = inv[std::uniform_int_distribution<std::size_t>(0, inv.size() - 1)(rng)];
        std::vector<int> slot{draw_trigger(cfg, rng)};
        slot.insert(slot.end(), p.begin(), p.end());
        insert_slot(u.tokens, slot, rng);
        u.entities.push_back(p);
      } else {
        // Look-alike of an entity built from the anchor tokens.
        const auto& inv = c.phrases.inventory;
        const Phrase& p = inv[std::uniform_int_distribution<std::size_t>(0, inv.size() - 1)(rng)];
        std::vector<int> slot;
        for (int tok : p) slot.push_back(cfg.anchor_of(tok));
        insert_slot(u.tokens, slot, rng);
      }
      u.frames = render(u.tokens, tpl, cfg, rng);
      out.push_back(std::move(u));
    }
    return out;
  };
  c.train = make(kTrain, cfg.train_size, "train");
  c.dev = make(kDev, cfg.dev_size, "dev");
  c.personalized = make(kPersonalized, cfg.test_size, "personalized");
  c.common = make(kCommon, cfg.test_size, "common");
  return c;
}

std::vector<int> look_alike_groups(const SynthConfig& cfg) {
  std::vector<int> group(static_cast<std::size_t>(cfg.vocab_size), -1);
  for (int r = cfg.first_rare(); r < cfg.vocab_size; ++r) group[static_cast<std::size_t>(r)] = cfg.anchor_of(r);
  return group;
}

namespace {

bool occurs_in(const Phrase& p, const std::vector<int>& tokens) {
  if (p.size() > tokens.size()) return false;
  return std::search(tokens.begin(), tokens.end(), p.begin(), p.end()) != tokens.end();
}

}  // namespace

std::vector<Phrase> build_bias_list(const Utterance& utt, ListKind kind, int n,
                                    std::uint64_t seed, const PhrasePools& pools) {
  if (n < 0) throw std::invalid_argument("list size must be non-negative");
  std::vector<Phrase> out;
  if (n == 0) return out;
  std::mt19937_64 rng(seed);
  std::set<Phrase> used;
  if (kind == ListKind::kPersonalized) {
    for (const auto& e : utt.entities) {
      if (static_cast<int>(out.size()) < n && used.insert(e).second) out.push_back(e);
    }
  }
  // Distractors padded around an entity never carry a sibling of one of its
  // tokens.
  auto sibling_of_entity = [&](const Phrase& p) {
    if (kind != ListKind::kPersonalized) return false;
    const auto& group = pools.look_alike_group;
    auto grp = [&](int tok) {
      const auto i = static_cast<std::size_t>(tok);
      return tok >= 0 && i < group.size() ? group[i] : -1;
    };
    for (const auto& e : utt.entities)
      for (int a : e)
        for (int b : p)
          if (a != b && grp(a) >= 0 && grp(a) == grp(b)) return true;
    return false;
  };
  auto usable = [&](const Phrase& p) {
    return !used.count(p) && !occurs_in(p, utt.tokens) && !sibling_of_entity(p);
  };
  auto take_from = [&](std::vector<Phrase> pool) {
    std::shuffle(pool.begin(), pool.end(), rng);
    for (const auto& p : pool) {
      if (static_cast<int>(out.size()) >= n) return;
      if (usable(p)) {
        used.insert(p);
        out.push_back(p);
      }
    }
  };
  if (kind == ListKind::kCommon) {
    take_from(pools.inventory);
    take_from(pools.distractors);
  } else {
    take_from(pools.all());
  }
  if (static_cast<int>(out.size()) < n) {
    throw std::runtime_error("distractor pool exhausted: wanted " + std::to_string(n) +
                             " phrases, have " + std::to_string(out.size()));
  }
  if (kind == ListKind::kPersonalized) {
    // Entities need not lead the list.
    std::shuffle(out.begin(), out.end(), rng);
  }
  return out;
}

std::vector<Phrase> sample_training_list(const Utterance& utt, const SynthConfig& cfg,
                                         const PhrasePools& pools, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, cfg.train_list_max);
  const std::uint64_t seed = rng();
  if (!utt.entities.empty()) {
    return build_bias_list(utt, ListKind::kPersonalized,
                           std::max<int>(size(rng), static_cast<int>(utt.entities.size())), seed,
                           pools);
  }
  if (coin(rng) < cfg.train_empty_list_rate) return {};
  std::vector<Phrase> out = build_bias_list(utt, ListKind::kPersonalized, size(rng), seed, pools);
  return out;
}

}  // namespace catt
