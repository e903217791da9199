#pragma once

#include <cmath>

#include "ust/core/rng.hpp"
#include "ust/nn/tensor.hpp"

namespace ust::nn {

// Kaiming-uniform for ReLU fan-in: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
Tensor<T> kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor<T> t = Tensor<T>::zeros(shape, true);
  const double bound = std::sqrt(6.0 / double(fan_in));
  for (T& x : t.raw_value()) x = T(rng.uniform(-bound, bound));
  return t;
}

}  // namespace ust::nn
