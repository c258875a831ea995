// SPDX-License-Identifier: Apache-2.0
#pragma once

// Forward/backward kernels shared by the tape and by the streaming decoder.
// Every kernel computes each output row from the matching input row(s) with a
// fixed summation order, so a row's result never depends on how many other
// rows are processed alongside it. Streaming and batched evaluation therefore
// agree bit-for-bit.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "catt/tensor.hpp"

namespace catt::kernels {

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) throw std::domain_error(std::string("non-finite input to ") + what);
}

// C = A[m×k] · B[k×n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw std::invalid_argument("matmul shape mismatch " + a.shape_string() + " · " +
                                b.shape_string());
  }
  Tensor<T> c(m, n);
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C += Aᵀ[k×m]ᵀ · B  i.e. C[m×n] += Σ_p A[p,i] B[p,j]; used for weight grads.
template <typename T>
void matmul_tn_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = pa[p * m + i];
      T* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A[m×n] · Bᵀ where B is [k×n]; result [m×k]. Used for input grads.
template <typename T>
void matmul_nt_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
  const std::size_t m = a.rows(), n = a.cols(), k = b.rows();
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      T s = 0;
      const T* arow = pa + i * n;
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      pc[i * k + p] += s;
    }
  }
}

template <typename T>
void softmax_row(std::span<const T> in, std::span<T> out) {
  T mx = in[0];
  for (T v : in) mx = std::max(mx, v);
  T sum = 0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  for (auto& v : out) v /= sum;
}

template <typename T>
void log_softmax_row(std::span<const T> in, std::span<T> out) {
  T mx = in[0];
  for (T v : in) mx = std::max(mx, v);
  T sum = 0;
  for (T v : in) sum += std::exp(v - mx);
  const T lse = mx + std::log(sum);
  for (std::size_t j = 0; j < in.size(); ++j) out[j] = in[j] - lse;
}

template <typename T>
struct LayerNormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;
};

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                    T eps, LayerNormCache<T>* cache = nullptr) {
  const std::size_t r = x.rows(), n = x.cols();
  if (n < 2) throw std::invalid_argument("layernorm needs at least 2 features");
  if (gain.size() != n || bias.size() != n) {
    throw std::invalid_argument("layernorm gain/bias size mismatch");
  }
  Tensor<T> y(r, n);
  if (cache) {
    cache->xhat = Tensor<T>(r, n);
    cache->inv_std.assign(r, T(0));
  }
  for (std::size_t i = 0; i < r; ++i) {
    auto xr = x.row(i);
    T mean = 0;
    for (T v : xr) mean += v;
    mean /= static_cast<T>(n);
    T var = 0;
    for (T v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    const T inv = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const T xh = (xr[j] - mean) * inv;
      y(i, j) = xh * gain[j] + bias[j];
      if (cache) cache->xhat(i, j) = xh;
    }
    if (cache) cache->inv_std[i] = inv;
  }
  return y;
}

// Multi-head scaled dot-product attention over a key prefix per query:
// query i attends to keys [0, limits[i]). Heads are column blocks.
template <typename T>
struct AttentionCache {
  // probs[(i*heads + h)*keys + j], zero beyond the row's limit.
  std::vector<T> probs;
};

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    std::size_t heads, std::span<const std::size_t> limits,
                    AttentionCache<T>* cache = nullptr) {
  const std::size_t rq = q.rows(), d = q.cols(), nk = k.rows();
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("model_dim must be divisible by num_heads");
  }
  if (k.cols() != d || v.cols() != d || v.rows() != nk) {
    throw std::invalid_argument("attention dimension mismatch");
  }
  if (nk == 0) throw std::invalid_argument("attention over zero keys");
  if (limits.size() != rq) throw std::invalid_argument("attention limits size mismatch");
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Tensor<T> out(rq, d);
  std::vector<T> scores(nk), probs(nk);
  if (cache) cache->probs.assign(rq * heads * nk, T(0));
  for (std::size_t i = 0; i < rq; ++i) {
    const std::size_t lim = limits[i];
    if (lim == 0 || lim > nk) throw std::invalid_argument("attention limit out of range");
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t j = 0; j < lim; ++j) {
        T s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += q(i, off + c) * k(j, off + c);
        scores[j] = s * scale;
      }
      softmax_row<T>({scores.data(), lim}, {probs.data(), lim});
      for (std::size_t j = 0; j < lim; ++j) {
        const T p = probs[j];
        for (std::size_t c = 0; c < dh; ++c) out(i, off + c) += p * v(j, off + c);
      }
      if (cache) {
        std::copy(probs.begin(), probs.begin() + lim,
                  cache->probs.begin() + (i * heads + h) * nk);
      }
    }
  }
  return out;
}

template <typename T>
void attention_backward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                        std::size_t heads, std::span<const std::size_t> limits,
                        const AttentionCache<T>& cache, const Tensor<T>& gout,
                        Tensor<T>* gq, Tensor<T>* gk, Tensor<T>* gv) {
  const std::size_t rq = q.rows(), d = q.cols(), nk = k.rows();
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<T> dp(nk);
  for (std::size_t i = 0; i < rq; ++i) {
    const std::size_t lim = limits[i];
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      const T* p = cache.probs.data() + (i * heads + h) * nk;
      T dot = 0;
      for (std::size_t j = 0; j < lim; ++j) {
        T s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += gout(i, off + c) * v(j, off + c);
        dp[j] = s;
        dot += p[j] * s;
        if (gv) {
          for (std::size_t c = 0; c < dh; ++c) (*gv)(j, off + c) += p[j] * gout(i, off + c);
        }
      }
      for (std::size_t j = 0; j < lim; ++j) {
        const T ds = p[j] * (dp[j] - dot) * scale;
        if (gq) {
          for (std::size_t c = 0; c < dh; ++c) (*gq)(i, off + c) += ds * k(j, off + c);
        }
        if (gk) {
          for (std::size_t c = 0; c < dh; ++c) (*gk)(j, off + c) += ds * q(i, off + c);
        }
      }
    }
  }
}

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace catt::kernels
