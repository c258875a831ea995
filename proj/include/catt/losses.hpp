// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "catt/tape.hpp"

namespace catt {

// Log-domain forward/backward variables over a T×(U+1) lattice of
// log-probabilities. Cell (t,u) is row t*(U+1)+u of `log_probs`.
struct TransducerLattice {
  std::size_t frames = 0;
  std::size_t labels = 0;          // U
  std::vector<double> alpha;       // frames × (U+1)
  std::vector<double> beta;        // frames × (U+1)
  double log_likelihood = 0.0;

  double a(std::size_t t, std::size_t u) const { return alpha[t * (labels + 1) + u]; }
  double b(std::size_t t, std::size_t u) const { return beta[t * (labels + 1) + u]; }
};

// `log_probs` rows must be normalized log-distributions over V+1 outputs.
TransducerLattice transducer_forward_backward(const Tensor<double>& log_probs, std::size_t frames,
                                              const std::vector<int>& targets, int blank);

// Negative log-likelihood of `targets` under raw joint logits (enc-major
// T*(U+1) rows). Log-softmax is applied internally; gradients flow to the
// logits. Throws std::domain_error on non-finite logits.
template <typename T>
Var transducer_loss(Tape<T>& t, Var logits, std::size_t frames, const std::vector<int>& targets,
                    int blank);

// Same quantity without a tape, in double precision.
template <typename T>
double transducer_nll(const Tensor<T>& logits, std::size_t frames,
                      const std::vector<int>& targets, int blank);

// For each target label u, the frame at which it is most probably emitted
// under the posterior of the lattice. Nondecreasing in u.
template <typename T>
std::vector<std::size_t> emission_frames(const Tensor<T>& logits, std::size_t frames,
                                         const std::vector<int>& targets, int blank);

// Mean over rows of -log softmax(row)[label]; `logits` is U×2.
template <typename T>
Var bias_ce_loss(Tape<T>& t, Var logits, const std::vector<int>& labels);

struct JointLossReport {
  double l_transducer = 0.0;
  double l_bias = 0.0;
  double lambda1 = 0.4;
  double l_total = 0.0;
};

inline constexpr double kDefaultLambda1 = 0.4;

JointLossReport joint_loss(double l_transducer, double l_bias, double lambda1 = kDefaultLambda1);

}  // namespace catt
