// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "catt/tensor.hpp"

namespace catt {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Named parameters with gradient buffers. Iteration order is by name, which
// is also the checkpoint payload order.
template <typename T>
class ParamStore {
 public:
  Parameter<T>& add(const std::string& name, Tensor<T> init) {
    if (params_.count(name)) {
      throw std::invalid_argument("duplicate parameter name: " + name);
    }
    Parameter<T> p;
    p.name = name;
    p.grad = Tensor<T>(init.shape(), T(0));
    p.value = std::move(init);
    return params_.emplace(name, std::move(p)).first->second;
  }

  Parameter<T>& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter: " + name);
    return it->second;
  }
  const Parameter<T>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter: " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  void zero_grad() {
    for (auto& [_, p] : params_) p.grad.fill(T(0));
  }

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, p] : params_) out.add(name, p.value.template cast<U>());
    return out;
  }

 private:
  std::map<std::string, Parameter<T>> params_;
};

// Glorot-uniform matrix initializer.
template <typename T>
Tensor<T> glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor<T> t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

// Adam with global gradient-norm clipping.
template <typename T>
class AdamOptimizer {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 5.0;
  };

  explicit AdamOptimizer(Options opts) : opts_(opts) {}

  // Applies one update using the accumulated gradients scaled by
  // `grad_scale`. Returns the pre-clipping gradient norm.
  double step(ParamStore<T>& store, double grad_scale = 1.0) {
    double sq = 0.0;
    for (const auto& [_, p] : store) {
      for (std::size_t i = 0; i < p.grad.size(); ++i) {
        const double g = static_cast<double>(p.grad[i]) * grad_scale;
        sq += g * g;
      }
    }
    const double norm = std::sqrt(sq);
    double clip = 1.0;
    if (opts_.clip_norm > 0.0 && norm > opts_.clip_norm) clip = opts_.clip_norm / norm;

    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : store) {
      auto& [m, v] = moments_[name];
      if (m.size() != p.value.size()) {
        m.assign(p.value.size(), 0.0);
        v.assign(p.value.size(), 0.0);
      }
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = static_cast<double>(p.grad[i]) * grad_scale * clip;
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p.value[i] -= static_cast<T>(opts_.learning_rate * mhat /
                                     (std::sqrt(vhat) + opts_.epsilon));
      }
    }
    return norm;
  }

  std::int64_t steps() const { return t_; }

 private:
  Options opts_;
  std::int64_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

}  // namespace catt
