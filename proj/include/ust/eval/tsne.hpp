#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ust::eval {

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  uint64_t seed = 0;
  double learning_rate = 200.0;
  double entropy_tolerance = 1e-4;  // bandwidth calibration target, in nats
};

struct TsneResult {
  std::vector<std::array<double, 2>> points;
  std::vector<double> entropy;  // achieved conditional entropy per point
  double initial_kl = 0;
  double final_kl = 0;
};

// Exact O(n^2) t-SNE: per-point bandwidths calibrated by binary search to
// the target perplexity, gradient descent with momentum, adaptive gains and
// early exaggeration. Deterministic under the seed.
TsneResult tsne(const std::vector<std::vector<float>>& vectors, const TsneConfig& config);

}  // namespace ust::eval
