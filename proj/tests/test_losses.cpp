// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "catt/losses.hpp"
#include "gradcheck.hpp"
#include "oracle.hpp"

using namespace catt;

namespace {

oracle::Mat random_lattice(std::size_t T, std::size_t U, std::size_t V, std::mt19937_64& rng) {
  return oracle::random_mat(T * (U + 1), V + 1, rng, 2.0);
}

std::vector<int> random_targets(std::size_t U, std::size_t V, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(V) - 1);
  std::vector<int> y(U);
  for (auto& v : y) v = d(rng);
  return y;
}

double lp(const oracle::Mat& m, std::size_t row, int k) {
  return oracle::log_softmax(oracle::row(m, row).v)[static_cast<std::size_t>(k)];
}

}  // namespace

TEST(TransducerLoss, NoLabelsIsAllBlankPath) {
  std::mt19937_64 rng(1);
  const std::size_t T = 4, V = 3;
  const int blank = 3;
  auto m = random_lattice(T, 0, V, rng);
  double want = 0;
  for (std::size_t t = 0; t < T; ++t) want -= lp(m, t, blank);
  EXPECT_NEAR(transducer_nll(oracle::to_tensor<double>(m), T, {}, blank), want, 1e-12);
}

TEST(TransducerLoss, OneFrameOneLabelIsUniquePath) {
  std::mt19937_64 rng(2);
  auto m = random_lattice(1, 1, 3, rng);
  const double want = -(lp(m, 0, 2) + lp(m, 1, 3));
  EXPECT_NEAR(transducer_nll(oracle::to_tensor<double>(m), 1, {2}, 3), want, 1e-12);
}

TEST(TransducerLoss, TwoByTwoMatchesEnumeration) {
  std::mt19937_64 rng(3);
  auto m = random_lattice(2, 2, 4, rng);
  const std::vector<int> y{1, 3};
  EXPECT_EQ(oracle::count_alignments(2, 2), 3u);
  EXPECT_NEAR(transducer_nll(oracle::to_tensor<double>(m), 2, y, 4),
              -oracle::enumerate_alignments(m, 2, y, 4), 1e-6);
}

TEST(TransducerLoss, MatchesEnumerationOnAllSmallShapes) {
  std::mt19937_64 rng(4);
  for (std::size_t T = 1; T <= 3; ++T)
    for (std::size_t U = 0; U <= 3; ++U)
      for (std::size_t V = 1; V <= 4; ++V)
        for (int trial = 0; trial < 5; ++trial) {
          auto m = random_lattice(T, U, V, rng);
          auto y = random_targets(U, V, rng);
          const int blank = static_cast<int>(V);
          EXPECT_NEAR(transducer_nll(oracle::to_tensor<double>(m), T, y, blank),
                      -oracle::enumerate_alignments(m, T, y, blank), 1e-6)
              << T << "x" << U << " V=" << V;
        }
}

TEST(TransducerLoss, AntiDiagonalPosteriorsSumToLikelihood) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 2 + trial % 5, U = 1 + trial % 4, V = 5;
    auto m = random_lattice(T, U, V, rng);
    auto y = random_targets(U, V, rng);
    Tensor<double> logp(m.r, m.c);
    for (std::size_t r = 0; r < m.r; ++r) {
      auto row = oracle::log_softmax(oracle::row(m, r).v);
      for (std::size_t j = 0; j < m.c; ++j) logp(r, j) = row[j];
    }
    auto lat = transducer_forward_backward(logp, T, y, static_cast<int>(V));
    // Every path crosses each anti-diagonal t+u = n exactly once.
    for (std::size_t n = 0; n < T + U; ++n) {
      std::vector<double> terms;
      for (std::size_t t = 0; t < T; ++t) {
        if (n < t || n - t > U) continue;
        terms.push_back(lat.a(t, n - t) + lat.b(t, n - t));
      }
      EXPECT_NEAR(oracle::log_sum_exp(terms), lat.log_likelihood, 1e-5) << n;
    }
    EXPECT_NEAR(lat.b(0, 0), lat.log_likelihood, 1e-12);
  }
}

TEST(TransducerLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t T = 1 + trial % 3, U = trial % 4 == 3 ? 3 : trial % 4, V = 4;
    ParamStore<double> ps;
    ps.add("logits", oracle::to_tensor<double>(random_lattice(T, U, V, rng)));
    auto y = random_targets(U, V, rng);
    gradcheck::LossFn<double> f = [&](Tape<double>& t) {
      return transducer_loss(t, t.param(ps.get("logits")), T, y, static_cast<int>(V));
    };
    auto r = gradcheck::check<double>(ps, f, ps, f, 1e-5, 1e-4, 1000, trial);
    EXPECT_LE(r.max_rel, 1e-4) << r.worst;
  }
}

TEST(TransducerLoss, FloatAndDoubleAgree) {
  std::mt19937_64 rng(7);
  auto m = random_lattice(3, 2, 4, rng);
  const std::vector<int> y{0, 2};
  EXPECT_NEAR(transducer_nll(oracle::to_tensor<float>(m), 3, y, 4),
              transducer_nll(oracle::to_tensor<double>(m), 3, y, 4), 1e-5);
}

TEST(TransducerLoss, NonFiniteLogitsThrow) {
  Tensor<double> z(2, 3);
  z(1, 1) = INFINITY;
  Tape<double> t;
  EXPECT_THROW(transducer_loss(t, t.constant(z), 2, {}, 2), std::domain_error);
}

TEST(TransducerLoss, BlankTargetOrShapeMismatchThrows) {
  Tensor<double> z(2, 3);
  EXPECT_THROW(transducer_nll(z, 1, {2}, 2), std::invalid_argument);
  EXPECT_THROW(transducer_nll(z, 3, {}, 2), std::invalid_argument);
}

TEST(EmissionFrames, NondecreasingAndInRange) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = 2 + trial % 6, U = 1 + trial % 5;
    auto m = random_lattice(T, U, 6, rng);
    auto y = random_targets(U, 6, rng);
    auto f = emission_frames(oracle::to_tensor<double>(m), T, y, 6);
    ASSERT_EQ(f.size(), U);
    for (std::size_t u = 0; u < U; ++u) {
      EXPECT_LT(f[u], T);
      if (u) {
        EXPECT_LE(f[u - 1], f[u]);
      }
    }
  }
}

TEST(EmissionFrames, FollowsAPeakedLattice) {
  // Label 0 strongly emitted at frame 2, label 1 at frame 3; blank elsewhere.
  const std::size_t T = 5, U = 2;
  Tensor<double> z(T * (U + 1), 3);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u <= U; ++u) {
      auto r = t * (U + 1) + u;
      z(r, 2) = 5.0;
      if (u == 0 && t == 2) z(r, 0) = 10.0;
      if (u == 1 && t == 3) z(r, 1) = 10.0;
    }
  EXPECT_EQ(emission_frames(z, T, {0, 1}, 2), (std::vector<std::size_t>{2, 3}));
}

TEST(BiasLoss, UniformLogitsGiveLnTwo) {
  Tape<double> t;
  Var z = t.constant(Tensor<double>(3, 2, 0.7));
  EXPECT_NEAR(t.value(bias_ce_loss(t, z, {0, 1, 1}))[0], std::log(2.0), 1e-15);
}

TEST(BiasLoss, ConfidentCorrectLogitsGoToZero) {
  Tape<double> t;
  Var z = t.constant(Tensor<double>::matrix(2, 2, {50, -50, -50, 50}));
  EXPECT_LT(t.value(bias_ce_loss(t, z, {0, 1}))[0], 1e-40);
}

TEST(BiasLoss, MixedLogitsMatchPerTokenOracle) {
  const std::vector<double> z{0.3, -1.2, 2.0, 0.5, -0.4, -0.4};
  const std::vector<int> y{1, 0, 1};
  double want = 0;
  for (int r = 0; r < 3; ++r) {
    want -= oracle::log_softmax({z[2 * r], z[2 * r + 1]})[static_cast<std::size_t>(y[r])];
  }
  want /= 3;
  Tape<double> t;
  EXPECT_NEAR(t.value(bias_ce_loss(t, t.constant(Tensor<double>::matrix(3, 2, z)), y))[0], want,
              1e-7);
}

TEST(BiasLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  ParamStore<double> ps;
  ps.add("z", oracle::to_tensor<double>(oracle::random_mat(5, 2, rng)));
  gradcheck::LossFn<double> f = [&](Tape<double>& t) {
    return bias_ce_loss(t, t.param(ps.get("z")), {0, 1, 1, 0, 1});
  };
  auto r = gradcheck::check<double>(ps, f, ps, f, 1e-5, 1e-4, 100, 1);
  EXPECT_LE(r.max_rel, 1e-6) << r.worst;
}

TEST(BiasLoss, LengthMismatchThrows) {
  Tape<double> t;
  EXPECT_THROW(bias_ce_loss(t, t.constant(Tensor<double>(3, 2)), {0, 1}), std::invalid_argument);
}

TEST(JointLoss, WeightedSum) {
  const auto r = joint_loss(1.0, 0.5, 0.4);
  EXPECT_DOUBLE_EQ(r.l_total, 1.0 + 0.4 * 0.5);
  EXPECT_NEAR(r.l_total, 1.2, 1e-15);
  EXPECT_EQ(joint_loss(2.5, 9.0, 0.0).l_total, 2.5);
  EXPECT_EQ(kDefaultLambda1, 0.4);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0, 5);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), b = u(rng);
    const auto j = joint_loss(a, b);
    EXPECT_EQ(j.l_total, a + 0.4 * b);
    EXPECT_EQ(j.lambda1, 0.4);
  }
}
