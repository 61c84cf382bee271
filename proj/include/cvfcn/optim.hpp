#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/error.hpp"

namespace cvfcn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments per real component (re and im are separate
/// coordinates) of every parameter tensor.
struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

namespace detail {

template <typename T>
void check_grads(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, const char* who) {
  if (params.size() != grads.size())
    throw ContractViolation(std::string(who) + ": " + std::to_string(grads.size()) + " gradients for " +
                            std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i].shape())
      throw ContractViolation(std::string(who) + ": gradient " + std::to_string(i) + " has shape " +
                              shape_str(grads[i].shape()) + ", parameter has " + shape_str(params[i]->shape()));
}

}  // namespace detail

/// Bias-corrected Adam applied independently to every real and imaginary
/// component.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState& st) {
  detail::check_grads(params, grads, "adam_step");
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.emplace_back(2 * p->size(), 0.0);
      st.v.emplace_back(2 * p->size(), 0.0);
    }
  }
  if (st.m.size() != params.size()) throw ContractViolation("adam_step: optimizer state belongs to another model");
  ++st.step;
  const auto& c = st.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    T* w = params[k]->real_data();
    const T* g = grads[k].real_data();
    auto& m = st.m[k];
    auto& v = st.v[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double gi = g[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double mhat = m[i] / bc1, vhat = v[i] / bc2;
      w[i] = static_cast<T>(w[i] - c.lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
}

/// W <- W - lr * (dJ/dre + j dJ/dim).
template <typename T>
void sgd_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, double lr) {
  detail::check_grads(params, grads, "sgd_step");
  for (std::size_t k = 0; k < params.size(); ++k) {
    T* w = params[k]->real_data();
    const T* g = grads[k].real_data();
    for (std::size_t i = 0; i < 2 * params[k]->size(); ++i) w[i] = static_cast<T>(w[i] - lr * g[i]);
  }
}

}  // namespace cvfcn
