#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "usad/nn.hpp"

namespace usad::optim {

template <typename T>
void check_finite_grads(const nn::ParamList<T>& params) {
  for (const auto& p : params) {
    for (T g : p.value.grad_view()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw std::runtime_error("non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }
}

template <typename T>
void zero_grads(nn::ParamList<T>& params) {
  for (auto& p : params) p.value.zero_grad();
}

template <typename T>
void sgd_step(nn::ParamList<T>& params, T lr) {
  if (!(lr > T(0))) throw std::invalid_argument("sgd_step: lr must be positive");
  check_finite_grads(params);
  for (auto& p : params) {
    if (!p.value.has_grad()) continue;
    auto v = p.value.data();
    auto g = p.value.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

template <typename T>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

template <typename T>
struct AdamState {
  struct Slot {
    std::vector<T> m, v;
  };
  std::vector<Slot> slots;
  long step = 0;
};

template <typename T>
void adam_step(nn::ParamList<T>& params, const AdamConfig<T>& cfg, AdamState<T>& state) {
  if (!(cfg.lr > T(0))) throw std::invalid_argument("adam_step: lr must be positive");
  check_finite_grads(params);
  if (state.slots.empty()) {
    state.slots.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto n = static_cast<std::size_t>(params[i].value.numel());
      state.slots[i].m.assign(n, T(0));
      state.slots[i].v.assign(n, T(0));
    }
  }
  if (state.slots.size() != params.size()) {
    throw std::logic_error("adam_step: state does not match parameter list");
  }
  ++state.step;
  const T bc1 = T(1) - std::pow(cfg.beta1, static_cast<T>(state.step));
  const T bc2 = T(1) - std::pow(cfg.beta2, static_cast<T>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    if (!p.value.has_grad()) continue;
    auto v = p.value.data();
    auto g = p.value.grad();
    auto& slot = state.slots[pi];
    for (std::size_t i = 0; i < v.size(); ++i) {
      slot.m[i] = cfg.beta1 * slot.m[i] + (T(1) - cfg.beta1) * g[i];
      slot.v[i] = cfg.beta2 * slot.v[i] + (T(1) - cfg.beta2) * g[i] * g[i];
      const T mhat = slot.m[i] / bc1;
      const T vhat = slot.v[i] / bc2;
      v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace usad::optim
