// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <array>
#include <random>
#include <string>

#include "catt/decoder.hpp"
#include "catt/metrics.hpp"

using namespace catt;

namespace {

std::vector<int> chars(const std::string& s) { return {s.begin(), s.end()}; }

// Memoized recursive Levenshtein definition (sequences up to length 8).
std::size_t lev(const std::vector<int>& a, const std::vector<int>& b) {
  constexpr std::size_t kUnset = ~std::size_t{0};
  std::array<std::array<std::size_t, 9>, 9> memo;
  for (auto& r : memo) r.fill(kUnset);
  auto rec = [&](auto&& self, std::size_t i, std::size_t j) -> std::size_t {
    if (i == 0) return j;
    if (j == 0) return i;
    if (memo[i][j] != kUnset) return memo[i][j];
    return memo[i][j] = std::min({self(self, i - 1, j) + 1, self(self, i, j - 1) + 1,
                                  self(self, i - 1, j - 1) + (a[i - 1] != b[j - 1] ? 1u : 0u)});
  };
  return rec(rec, a.size(), b.size());
}

std::vector<std::vector<int>> all_sequences(std::size_t max_len, int alphabet) {
  std::vector<std::vector<int>> out{{}};
  std::size_t begin = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i)
      for (int s = 0; s < alphabet; ++s) {
        auto v = out[i];
        v.push_back(s);
        out.push_back(std::move(v));
      }
    begin = end;
  }
  return out;
}

std::vector<int> random_seq(std::mt19937_64& rng, int max_len, int alphabet) {
  std::vector<int> v(static_cast<std::size_t>(std::uniform_int_distribution<int>(0, max_len)(rng)));
  for (auto& x : v) x = std::uniform_int_distribution<int>(0, alphabet - 1)(rng);
  return v;
}

}  // namespace

TEST(EditDistance, Examples) {
  EXPECT_EQ(edit_distance({1, 2, 3}, {1, 2, 3}).distance, 0u);
  const auto ins = edit_distance({}, {4, 5, 6});
  EXPECT_EQ(ins.distance, 3u);
  EXPECT_EQ(ins.insertions, 3u);
  const auto del = edit_distance({4, 5}, {});
  EXPECT_EQ(del.deletions, 2u);
  const auto k = edit_distance(chars("kitten"), chars("sitting"));
  EXPECT_EQ(k.distance, 3u);
  EXPECT_EQ(k.substitutions, 2u);
  EXPECT_EQ(k.insertions, 1u);
}

TEST(EditDistance, TieBreakPrefersSubstitutionThenDeletion) {
  const auto swap = edit_distance({1, 2}, {2, 1});
  EXPECT_EQ(swap.distance, 2u);
  EXPECT_EQ(swap.substitutions, 2u);
  const auto shift = edit_distance({1, 2, 3}, {2, 3, 4});
  EXPECT_EQ(shift.distance, 2u);
  EXPECT_EQ(shift.deletions + shift.insertions + shift.substitutions, 2u);
}

TEST(EditDistance, MatchesRecursionOnAllShortPairs) {
  const auto seqs = all_sequences(6, 3);
  ASSERT_EQ(seqs.size(), 1093u);
  for (const auto& a : seqs)
    for (const auto& b : seqs) {
      const auto e = edit_distance(a, b);
      ASSERT_EQ(e.distance, lev(a, b));
      ASSERT_EQ(e.substitutions + e.insertions + e.deletions, e.distance);
      ASSERT_EQ(static_cast<long>(e.deletions) - static_cast<long>(e.insertions),
                static_cast<long>(a.size()) - static_cast<long>(b.size()));
    }
}

TEST(EditDistance, IsAMetric) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    auto a = random_seq(rng, 8, 4), b = random_seq(rng, 8, 4), c = random_seq(rng, 8, 4);
    const auto ab = edit_distance(a, b).distance, ba = edit_distance(b, a).distance;
    EXPECT_EQ(ab, ba);
    EXPECT_EQ(edit_distance(a, a).distance, 0u);
    EXPECT_LE(edit_distance(a, c).distance, ab + edit_distance(b, c).distance);
  }
}

TEST(CorpusErrorRate, PooledNotAveraged) {
  const auto r = corpus_error_rate({{{1, 2, 3, 4}, {1, 2, 3, 5}}, {{1, 2, 3, 4, 5, 6}, {1, 2, 3, 4, 5}}});
  EXPECT_DOUBLE_EQ(r.rate, 0.2);
  EXPECT_EQ(r.reference_length, 10u);
  EXPECT_EQ(r.substitutions, 1u);
  EXPECT_EQ(r.deletions, 1u);
  EXPECT_EQ(corpus_error_rate({{{1, 2}, {1, 2}}, {{3}, {3}}}).rate, 0.0);
  const SequencePair one{{1, 2, 3}, {1, 3}};
  EXPECT_DOUBLE_EQ(corpus_error_rate({one}).rate,
                   static_cast<double>(edit_distance(one.first, one.second).distance) / 3.0);
}

TEST(CorpusErrorRate, EmptyInputsThrow) {
  EXPECT_THROW(corpus_error_rate({}), std::invalid_argument);
  EXPECT_THROW(corpus_error_rate({{{}, {1}}}), std::invalid_argument);
}

TEST(LabelErrorRate, SpotValues) {
  EXPECT_EQ(l_cer({0, 1, 1}, {0, 1, 1}), 0.0);
  EXPECT_EQ(l_cer({0, 1, 1}, {0, 1, 0}), 1.0 / 3.0);
  EXPECT_EQ(l_cer({1, 1}, {}), 1.0);
  EXPECT_EQ(l_cer({}, {}), 0.0);
}

TEST(LabelErrorRate, BoundedOnRandomPairs) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const double v = l_cer(random_seq(rng, 12, 2), random_seq(rng, 12, 2));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_DOUBLE_EQ(corpus_l_cer({{{0, 1, 1}, {0, 1, 0}}, {{1, 1}, {}}}), 3.0 / 5.0);
}

TEST(Rtf, RatioAndErrors) {
  EXPECT_DOUBLE_EQ(real_time_factor(0.108 * 250.0, 250.0), 0.108);
  EXPECT_THROW(real_time_factor(1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(measure_rtf(
                   2, [](std::size_t) { return OpCounters{}; }, [](std::size_t) { return 0u; },
                   40.0),
               std::invalid_argument);
}

TEST(Rtf, CountersSummedAndReproducible) {
  auto decode = [](std::size_t i) {
    OpCounters c;
    c.encoder_bias_full = i;
    c.ed_calls = 2;
    return c;
  };
  auto frames = [](std::size_t i) { return 10 + i; };
  const auto a = measure_rtf(4, decode, frames, 40.0);
  const auto b = measure_rtf(4, decode, frames, 40.0);
  EXPECT_EQ(a.counters, b.counters);
  EXPECT_EQ(a.counters.encoder_bias_full, 6u);
  EXPECT_EQ(a.counters.ed_calls, 8u);
  EXPECT_DOUBLE_EQ(a.audio_seconds, (10 + 11 + 12 + 13) * 0.040);
  EXPECT_GE(a.rtf, 0.0);
  EXPECT_DOUBLE_EQ(a.rtf, a.decode_seconds / a.audio_seconds);
}
