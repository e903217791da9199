#pragma once

#include <cstdint>
#include <vector>

namespace ust::eval {

struct CoclassifyConfig {
  double train_ratio = 0.7;
  int k_nn = 5;
  int trials = 10;
  uint64_t seed = 0;
};

struct CoclassifyMetrics {
  double accuracy = 0;
  double precision = 0;  // macro over classes
  double recall = 0;
  double f1 = 0;
};

// Stratified 70:30 split, Euclidean kNN vote on the test split, macro
// precision/recall/F1; the reported value is the median over trials.
CoclassifyMetrics knn_coclassify(const std::vector<std::vector<double>>& points,
                                 const std::vector<int>& labels, const CoclassifyConfig& config);

// single-trial variant, exposed for the hand-built oracle tests
CoclassifyMetrics knn_classify_once(const std::vector<std::vector<double>>& points,
                                    const std::vector<int>& labels,
                                    const std::vector<size_t>& train_idx,
                                    const std::vector<size_t>& test_idx, int k_nn);

}  // namespace ust::eval
