// SPDX-License-Identifier: Apache-2.0
#include "catt/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace catt {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::fabs(a - b)));
}

void check_lattice(std::size_t rows, std::size_t cols, std::size_t frames,
                   const std::vector<int>& targets, int blank) {
  if (frames == 0) throw std::invalid_argument("transducer loss needs at least one frame");
  if (rows != frames * (targets.size() + 1)) {
    throw std::invalid_argument("lattice has " + std::to_string(rows) + " rows, expected " +
                                std::to_string(frames * (targets.size() + 1)));
  }
  if (blank < 0 || static_cast<std::size_t>(blank) >= cols) {
    throw std::invalid_argument("blank index outside the output layer");
  }
  for (int y : targets) {
    if (y == blank) throw std::invalid_argument("blank in transducer targets");
    if (y < 0 || static_cast<std::size_t>(y) >= cols) {
      throw std::out_of_range("target " + std::to_string(y) + " outside the output layer");
    }
  }
}

template <typename T>
Tensor<double> log_softmax_double(const Tensor<T>& logits) {
  if (!logits.all_finite()) throw std::domain_error("non-finite joint logits");
  Tensor<double> out = logits.template cast<double>();
  for (std::size_t r = 0; r < out.rows(); ++r) kernels::log_softmax_row<double>(out.row(r), out.row(r));
  return out;
}

}  // namespace

TransducerLattice transducer_forward_backward(const Tensor<double>& lp, std::size_t frames,
                                              const std::vector<int>& targets, int blank) {
  check_lattice(lp.rows(), lp.cols(), frames, targets, blank);
  const std::size_t U = targets.size(), W = U + 1;
  auto blank_lp = [&](std::size_t t, std::size_t u) { return lp(t * W + u, blank); };
  auto label_lp = [&](std::size_t t, std::size_t u) { return lp(t * W + u, targets[u]); };

  TransducerLattice L;
  L.frames = frames;
  L.labels = U;
  L.alpha.assign(frames * W, kNegInf);
  L.beta.assign(frames * W, kNegInf);

  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      double v = (t == 0 && u == 0) ? 0.0 : kNegInf;
      if (t > 0) v = log_add(v, L.alpha[(t - 1) * W + u] + blank_lp(t - 1, u));
      if (u > 0) v = log_add(v, L.alpha[t * W + u - 1] + label_lp(t, u - 1));
      L.alpha[t * W + u] = v;
    }
  }
  for (std::size_t t = frames; t-- > 0;) {
    for (std::size_t u = W; u-- > 0;) {
      double v;
      if (t == frames - 1 && u == U) {
        v = blank_lp(t, u);
      } else {
        v = kNegInf;
        if (t + 1 < frames) v = log_add(v, L.beta[(t + 1) * W + u] + blank_lp(t, u));
        if (u < U) v = log_add(v, L.beta[t * W + u + 1] + label_lp(t, u));
      }
      L.beta[t * W + u] = v;
    }
  }
  L.log_likelihood = L.beta[0];
  return L;
}

template <typename T>
double transducer_nll(const Tensor<T>& logits, std::size_t frames,
                      const std::vector<int>& targets, int blank) {
  check_lattice(logits.rows(), logits.cols(), frames, targets, blank);
  return -transducer_forward_backward(log_softmax_double(logits), frames, targets, blank)
              .log_likelihood;
}

template <typename T>
Var transducer_loss(Tape<T>& t, Var logits, std::size_t frames, const std::vector<int>& targets,
                    int blank) {
  const Tensor<T>& z = t.value(logits);
  check_lattice(z.rows(), z.cols(), frames, targets, blank);
  Tensor<double> lp = log_softmax_double(z);
  TransducerLattice L = transducer_forward_backward(lp, frames, targets, blank);
  const double nll = -L.log_likelihood;
  if (!std::isfinite(nll)) throw std::domain_error("transducer loss is not finite");

  const Var in[1] = {logits};
  return t.custom(Tensor<T>(1, 1, static_cast<T>(nll)), in,
                  [logits, frames, targets, blank, lp = std::move(lp), L = std::move(L)](
                      Tape<T>& tp, const Tensor<T>& g) {
                    Tensor<T>* gz = tp.grad_buffer(logits);
                    if (!gz) return;
                    const std::size_t U = targets.size(), W = U + 1, V = lp.cols();
                    const double scale = static_cast<double>(g[0]);
                    const double ll = L.log_likelihood;
                    std::vector<double> occ(V);
                    for (std::size_t tt = 0; tt < frames; ++tt) {
                      for (std::size_t u = 0; u <= U; ++u) {
                        const std::size_t r = tt * W + u;
                        std::fill(occ.begin(), occ.end(), 0.0);
                        const double a = L.alpha[r];
                        // d(-log P)/d(log p) for the two outgoing arcs of (t,u).
                        double nb = kNegInf;
                        if (tt + 1 < frames) nb = L.beta[r + W];
                        else if (u == U) nb = 0.0;
                        if (nb != kNegInf) occ[blank] = -std::exp(a + lp(r, blank) + nb - ll);
                        if (u < U) {
                          occ[targets[u]] = -std::exp(a + lp(r, targets[u]) + L.beta[r + 1] - ll);
                        }
                        double total = 0.0;
                        for (double o : occ) total += o;
                        for (std::size_t k = 0; k < V; ++k) {
                          const double grad = occ[k] - std::exp(lp(r, k)) * total;
                          (*gz)(r, k) += static_cast<T>(scale * grad);
                        }
                      }
                    }
                  });
}

template <typename T>
std::vector<std::size_t> emission_frames(const Tensor<T>& logits, std::size_t frames,
                                         const std::vector<int>& targets, int blank) {
  check_lattice(logits.rows(), logits.cols(), frames, targets, blank);
  Tensor<double> lp = log_softmax_double(logits);
  TransducerLattice L = transducer_forward_backward(lp, frames, targets, blank);
  const std::size_t U = targets.size(), W = U + 1;
  std::vector<std::size_t> out(U, 0);
  std::size_t floor = 0;
  for (std::size_t u = 0; u < U; ++u) {
    double best = kNegInf;
    std::size_t arg = floor;
    for (std::size_t tt = floor; tt < frames; ++tt) {
      const std::size_t r = tt * W + u;
      const double post = L.alpha[r] + lp(r, targets[u]) + L.beta[r + 1];
      if (post > best) {
        best = post;
        arg = tt;
      }
    }
    out[u] = arg;
    floor = arg;
  }
  return out;
}

template <typename T>
Var bias_ce_loss(Tape<T>& t, Var logits, const std::vector<int>& labels) {
  const Tensor<T>& z = t.value(logits);
  if (z.rows() != labels.size() || (z.cols() != 2 && !labels.empty())) {
    throw std::invalid_argument("bias loss: " + std::to_string(z.rows()) + " logit rows for " +
                                std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw std::invalid_argument("bias loss over zero tokens");
  if (!z.all_finite()) throw std::domain_error("non-finite detector logits");
  const std::size_t n = labels.size();
  Tensor<double> probs(n, 2);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] != 0 && labels[r] != 1) throw std::invalid_argument("labels must be 0 or 1");
    double row[2] = {static_cast<double>(z(r, 0)), static_cast<double>(z(r, 1))};
    std::span<double> s(row, 2);
    kernels::log_softmax_row<double>(std::span<const double>(row, 2), s);
    loss -= row[labels[r]];
    probs(r, 0) = std::exp(row[0]);
    probs(r, 1) = std::exp(row[1]);
  }
  loss /= static_cast<double>(n);
  const Var in[1] = {logits};
  return t.custom(Tensor<T>(1, 1, static_cast<T>(loss)), in,
                  [logits, labels, probs = std::move(probs)](Tape<T>& tp, const Tensor<T>& g) {
                    Tensor<T>* gz = tp.grad_buffer(logits);
                    if (!gz) return;
                    const double s = static_cast<double>(g[0]) / static_cast<double>(labels.size());
                    for (std::size_t r = 0; r < labels.size(); ++r) {
                      for (int k = 0; k < 2; ++k) {
                        const double d = probs(r, k) - (labels[r] == k ? 1.0 : 0.0);
                        (*gz)(r, k) += static_cast<T>(s * d);
                      }
                    }
                  });
}

JointLossReport joint_loss(double l_transducer, double l_bias, double lambda1) {
  if (!std::isfinite(l_transducer) || !std::isfinite(l_bias) || !std::isfinite(lambda1)) {
    throw std::domain_error("joint loss inputs must be finite");
  }
  return {l_transducer, l_bias, lambda1, l_transducer + lambda1 * l_bias};
}

template Var transducer_loss(Tape<float>&, Var, std::size_t, const std::vector<int>&, int);
template Var transducer_loss(Tape<double>&, Var, std::size_t, const std::vector<int>&, int);
template double transducer_nll(const Tensor<float>&, std::size_t, const std::vector<int>&, int);
template double transducer_nll(const Tensor<double>&, std::size_t, const std::vector<int>&, int);
template std::vector<std::size_t> emission_frames(const Tensor<float>&, std::size_t,
                                                  const std::vector<int>&, int);
template std::vector<std::size_t> emission_frames(const Tensor<double>&, std::size_t,
                                                  const std::vector<int>&, int);
template Var bias_ce_loss(Tape<float>&, Var, const std::vector<int>&);
template Var bias_ce_loss(Tape<double>&, Var, const std::vector<int>&);

}  // namespace catt
