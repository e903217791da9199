#pragma once

#include <cmath>
#include <vector>

#include "ust/nn/tensor.hpp"

namespace ust::nn {

// Adam with bias correction. Moment buffers are held here, aligned with the
// parameter list the state was initialized from.
template <typename T>
struct AdamState {
  long step = 0;
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  std::vector<std::vector<T>> m, v;

  void init(const std::vector<Tensor<T>>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.value().size(), T(0));
      v.emplace_back(p.value().size(), T(0));
    }
  }
};

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  if (params.size() != state.m.size())
    throw usage_error("adam_step: state not initialized for this parameter list");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(double(state.beta1), double(state.step));
  const double bc2 = 1.0 - std::pow(double(state.beta2), double(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = params[pi].raw_value();
    auto& grad = params[pi].raw_grad();
    if (grad.size() != value.size())
      throw data_error("adam_step: grad/param shape mismatch at parameter " + std::to_string(pi));
    auto& mv = state.m[pi];
    auto& vv = state.v[pi];
    for (size_t i = 0; i < value.size(); ++i) {
      const T g = grad[i];
      mv[i] = state.beta1 * mv[i] + (T(1) - state.beta1) * g;
      vv[i] = state.beta2 * vv[i] + (T(1) - state.beta2) * g * g;
      const T mhat = T(double(mv[i]) / bc1);
      const T vhat = T(double(vv[i]) / bc2);
      value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace ust::nn
