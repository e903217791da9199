#include "ust/eval/knn.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ust/core/error.hpp"
#include "ust/core/rng.hpp"

namespace ust::eval {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0;
  for (size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

CoclassifyMetrics knn_classify_once(const std::vector<std::vector<double>>& points,
                                    const std::vector<int>& labels,
                                    const std::vector<size_t>& train_idx,
                                    const std::vector<size_t>& test_idx, int k_nn) {
  int max_label = 0;
  for (int l : labels) max_label = std::max(max_label, l);
  const int n_classes = max_label + 1;
  std::vector<long> tp(size_t(n_classes), 0), fp(size_t(n_classes), 0), fn(size_t(n_classes), 0);
  long correct = 0;

  std::vector<std::pair<double, size_t>> dist;
  for (size_t ti : test_idx) {
    dist.clear();
    for (size_t tr : train_idx) dist.emplace_back(sq_dist(points[ti], points[tr]), tr);
    const size_t k = std::min(size_t(k_nn), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + long(k), dist.end());
    // majority vote; ties broken by smaller summed distance, then label id
    std::map<int, std::pair<int, double>> votes;  // label -> (count, dist sum)
    for (size_t i = 0; i < k; ++i) {
      auto& v = votes[labels[dist[i].second]];
      v.first += 1;
      v.second += std::sqrt(dist[i].first);
    }
    int best_label = -1;
    std::pair<int, double> best{0, 0};
    for (const auto& [label, v] : votes) {
      const bool better = v.first > best.first ||
                          (v.first == best.first && v.second < best.second) ||
                          (v.first == best.first && v.second == best.second &&
                           (best_label < 0 || label < best_label));
      if (better) {
        best = v;
        best_label = label;
      }
    }
    const int want = labels[ti];
    if (best_label == want) {
      ++correct;
      ++tp[size_t(want)];
    } else {
      ++fp[size_t(best_label)];
      ++fn[size_t(want)];
    }
  }

  CoclassifyMetrics m;
  m.accuracy = test_idx.empty() ? 0.0 : double(correct) / double(test_idx.size());
  int active = 0;
  for (int c = 0; c < n_classes; ++c) {
    bool present = false;
    for (size_t ti : test_idx)
      if (labels[ti] == c) present = true;
    if (!present && tp[size_t(c)] + fp[size_t(c)] == 0) continue;
    ++active;
    const double prec = tp[size_t(c)] + fp[size_t(c)] > 0
                            ? double(tp[size_t(c)]) / double(tp[size_t(c)] + fp[size_t(c)])
                            : 0.0;
    const double rec = tp[size_t(c)] + fn[size_t(c)] > 0
                           ? double(tp[size_t(c)]) / double(tp[size_t(c)] + fn[size_t(c)])
                           : 0.0;
    m.precision += prec;
    m.recall += rec;
    m.f1 += (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  if (active) {
    m.precision /= active;
    m.recall /= active;
    m.f1 /= active;
  }
  return m;
}

CoclassifyMetrics knn_coclassify(const std::vector<std::vector<double>>& points,
                                 const std::vector<int>& labels, const CoclassifyConfig& config) {
  if (points.size() != labels.size()) throw data_error("knn: points/labels size mismatch");
  if (config.k_nn < 1 || config.trials < 1) throw data_error("knn: bad k or trial count");
  if (config.train_ratio <= 0 || config.train_ratio >= 1)
    throw data_error("knn: train_ratio must lie in (0,1)");

  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) throw data_error("knn: need at least 2 classes");
  for (const auto& [label, members] : by_class)
    if (members.size() < 2)
      throw data_error("knn: class " + std::to_string(label) + " has fewer than 2 members");

  std::vector<double> acc, prec, rec, f1;
  for (int trial = 0; trial < config.trials; ++trial) {
    Rng rng(derive_seed(config.seed, "knn-split", uint64_t(trial)));
    std::vector<size_t> train_idx, test_idx;
    for (const auto& [label, members] : by_class) {
      std::vector<size_t> order = members;
      rng.shuffle(order);
      // at least one sample on each side of the split
      const size_t n_tr = std::clamp<size_t>(
          size_t(std::lround(config.train_ratio * double(order.size()))), 1, order.size() - 1);
      for (size_t i = 0; i < order.size(); ++i)
        (i < n_tr ? train_idx : test_idx).push_back(order[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    auto m = knn_classify_once(points, labels, train_idx, test_idx, config.k_nn);
    acc.push_back(m.accuracy);
    prec.push_back(m.precision);
    rec.push_back(m.recall);
    f1.push_back(m.f1);
  }
  return {median(acc), median(prec), median(rec), median(f1)};
}

}  // namespace ust::eval
