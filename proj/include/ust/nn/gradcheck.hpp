#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ust/nn/tensor.hpp"

namespace ust::nn {

// Central finite-difference verification of tape gradients, run at 64-bit.
// `fn` must rebuild the forward graph from the given parameter tensors on
// every call (mutable layer state like batchnorm running stats is tolerated:
// train-mode outputs do not read it).

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t checked = 0;
  bool pass = true;
  std::string worst;
};

inline double rel_err(double ad, double fd, double floor = 1e-3) {
  // Denominator floored so FD truncation noise on near-zero gradients does
  // not register as disagreement; a genuinely wrong gradient still shows up
  // at the magnitude of the gradient itself. Deep compositions use a larger
  // floor (1e-2, the atol/rtol region PyTorch's gradcheck accepts) because
  // ReLU kink crossings within +-h contribute noise above the strict floor.
  return std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), floor});
}

inline GradCheckReport check_gradients(const std::function<Tensor<double>()>& fn,
                                       std::vector<Tensor<double>> params,
                                       const std::vector<std::string>& names = {},
                                       double h = 1e-3, double tol = 1e-3,
                                       size_t max_probes_per_param = 64,
                                       double floor = 1e-3) {
  GradCheckReport report;
  for (auto& p : params) p.zero_grad();
  Tensor<double> loss = fn();
  loss.backward();

  std::vector<std::vector<double>> ad_grads;
  ad_grads.reserve(params.size());
  for (auto& p : params) ad_grads.emplace_back(p.grad().begin(), p.grad().end());

  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = params[pi].raw_value();
    const size_t n = value.size();
    const size_t stride = n <= max_probes_per_param ? 1 : (n + max_probes_per_param - 1) / max_probes_per_param;
    for (size_t i = 0; i < n; i += stride) {
      const double saved = value[i];
      value[i] = saved + h;
      const double f_plus = fn().item();
      value[i] = saved - h;
      const double f_minus = fn().item();
      value[i] = saved;
      const double fd = (f_plus - f_minus) / (2.0 * h);
      const double err = rel_err(ad_grads[pi][i], fd, floor);
      ++report.checked;
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        const std::string name = pi < names.size() ? names[pi] : "param" + std::to_string(pi);
        report.worst = name + "[" + std::to_string(i) + "] ad=" + std::to_string(ad_grads[pi][i]) +
                       " fd=" + std::to_string(fd);
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace ust::nn
