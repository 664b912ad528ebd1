#pragma once

#include <map>
#include <string>

#include "mmer/rng.hpp"
#include "mmer/tensor.hpp"

namespace mmer::nn {

// Named parameter tensors plus Adam state. One training loop owns a store.
template <class S>
struct ParamStoreT {
  std::map<std::string, TensorT<S>> params;
  int64_t step = 0;
  std::map<std::string, std::vector<S>> moment1, moment2;

  TensorT<S>& create(const std::string& name, Shape shape) {
    auto [it, inserted] = params.emplace(name, TensorT<S>::zeros(std::move(shape), true));
    if (!inserted) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    return it->second;
  }

  TensorT<S>& get(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end())
      throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }

  int64_t total_parameters() const {
    int64_t n = 0;
    for (const auto& [name, p] : params) n += p.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, p] : params) p.zero_grad();
  }

  // Bias-corrected Adam update applied in place; every parameter must carry
  // a gradient from the preceding backward pass.
  void adam_step(S lr, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8)) {
    for (const auto& [name, p] : params)
      if (!p.has_grad())
        throw std::runtime_error("adam_step: parameter '" + name + "' has no gradient");
    ++step;
    const S bc1 = S(1) - std::pow(beta1, static_cast<S>(step));
    const S bc2 = S(1) - std::pow(beta2, static_cast<S>(step));
    for (auto& [name, p] : params) {
      auto& m = moment1[name];
      auto& v = moment2[name];
      if (m.empty()) m.assign(p.numel(), S(0));
      if (v.empty()) v.assign(p.numel(), S(0));
      auto& data = p.data();
      const auto& g = p.grad();
      for (int64_t i = 0; i < p.numel(); ++i) {
        m[i] = beta1 * m[i] + (S(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (S(1) - beta2) * g[i] * g[i];
        const S mhat = m[i] / bc1;
        const S vhat = v[i] / bc2;
        data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

using ParamStore = ParamStoreT<float>;

// Initialization helpers (deterministic per rng stream).
template <class S>
void fill_normal(TensorT<S>& t, double stddev, Rng& rng) {
  for (auto& v : t.data()) v = static_cast<S>(stddev * rng.gauss());
}

// Truncated at two standard deviations, the transformer convention.
template <class S>
void fill_trunc_normal(TensorT<S>& t, double stddev, Rng& rng) {
  for (auto& v : t.data()) {
    double g = rng.gauss();
    while (std::abs(g) > 2.0) g = rng.gauss();
    v = static_cast<S>(stddev * g);
  }
}

template <class S>
void fill_constant(TensorT<S>& t, S value) {
  for (auto& v : t.data()) v = value;
}

// He initialization for conv/linear weights feeding a ReLU.
template <class S>
void fill_kaiming(TensorT<S>& t, int64_t fan_in, Rng& rng) {
  fill_normal(t, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

}  // namespace mmer::nn
