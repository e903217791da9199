#include "ust/eval/tsne.hpp"

#include <algorithm>
#include <cmath>

#include "ust/core/error.hpp"
#include "ust/core/rng.hpp"

namespace ust::eval {

namespace {

std::vector<double> pairwise_sq_dist(const std::vector<std::vector<float>>& x) {
  const size_t n = x.size();
  std::vector<double> d(n * n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      double acc = 0;
      for (size_t k = 0; k < x[i].size(); ++k) {
        const double diff = double(x[i][k]) - double(x[j][k]);
        acc += diff * diff;
      }
      d[i * n + j] = d[j * n + i] = acc;
    }
  return d;
}

// conditional distribution for row i at precision beta; returns entropy (nats)
double row_probabilities(const std::vector<double>& d2, size_t n, size_t i, double beta,
                         std::vector<double>& p_row) {
  double sum = 0;
  for (size_t j = 0; j < n; ++j) {
    p_row[j] = (j == i) ? 0.0 : std::exp(-d2[i * n + j] * beta);
    sum += p_row[j];
  }
  if (sum <= 0) {
    // pathological row (all duplicates of i at identical positions)
    for (size_t j = 0; j < n; ++j) p_row[j] = (j == i) ? 0.0 : 1.0 / double(n - 1);
    return std::log(double(n - 1));
  }
  double h = 0;
  for (size_t j = 0; j < n; ++j) {
    p_row[j] /= sum;
    if (p_row[j] > 1e-300) h -= p_row[j] * std::log(p_row[j]);
  }
  return h;
}

}  // namespace

TsneResult tsne(const std::vector<std::vector<float>>& vectors, const TsneConfig& config) {
  const size_t n = vectors.size();
  if (config.perplexity <= 1.0) throw data_error("tsne: perplexity must be > 1");
  if (double(n) < 3.0 * config.perplexity)
    throw data_error("tsne: need at least 3*perplexity points, got " + std::to_string(n));
  for (const auto& v : vectors)
    if (v.size() != vectors[0].size()) throw data_error("tsne: ragged input vectors");

  const std::vector<double> d2 = pairwise_sq_dist(vectors);
  const double target_entropy = std::log(config.perplexity);

  // per-point bandwidth calibration
  std::vector<double> p_cond(n * n, 0.0), row(n, 0.0);
  TsneResult result;
  result.entropy.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
    double h = 0;
    for (int it = 0; it < 200; ++it) {
      h = row_probabilities(d2, n, i, beta, row);
      const double diff = h - target_entropy;
      if (std::abs(diff) < config.entropy_tolerance) break;
      if (diff > 0) {  // entropy too high -> sharpen
        beta_lo = beta;
        beta = std::isinf(beta_hi) ? beta * 2.0 : (beta + beta_hi) / 2.0;
      } else {
        beta_hi = beta;
        beta = (beta + beta_lo) / 2.0;
      }
    }
    result.entropy[i] = h;
    for (size_t j = 0; j < n; ++j) p_cond[i * n + j] = row[j];
  }

  // symmetrize
  std::vector<double> p(n * n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      p[i * n + j] = std::max((p_cond[i * n + j] + p_cond[j * n + i]) / (2.0 * double(n)), 1e-12);

  Rng rng(derive_seed(config.seed, "tsne-init"));
  std::vector<std::array<double, 2>> y(n);
  for (auto& pt : y) pt = {rng.normal() * 1e-4, rng.normal() * 1e-4};

  auto kl_divergence = [&](const std::vector<std::array<double, 2>>& pts) {
    double qsum = 0;
    std::vector<double> qnum(n * n, 0.0);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) {
        const double dx = pts[i][0] - pts[j][0], dy = pts[i][1] - pts[j][1];
        const double v = 1.0 / (1.0 + dx * dx + dy * dy);
        qnum[i * n + j] = qnum[j * n + i] = v;
        qsum += 2.0 * v;
      }
    double kl = 0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(qnum[i * n + j] / qsum, 1e-12);
        kl += p[i * n + j] * std::log(p[i * n + j] / q);
      }
    return kl;
  };

  result.initial_kl = kl_divergence(y);

  const int exaggeration_until = std::min(100, config.iterations / 4);
  std::vector<std::array<double, 2>> vel(n, {0, 0}), gains(n, {1, 1});
  std::vector<double> qnum(n * n, 0.0);

  for (int iter = 0; iter < config.iterations; ++iter) {
    const double exaggeration = iter < exaggeration_until ? 4.0 : 1.0;
    double qsum = 0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) {
        const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
        const double v = 1.0 / (1.0 + dx * dx + dy * dy);
        qnum[i * n + j] = qnum[j * n + i] = v;
        qsum += 2.0 * v;
      }
    const double momentum = iter < 250 ? 0.5 : 0.8;
    // gradients from the iteration's position snapshot, applied afterwards
    std::vector<std::array<double, 2>> grad(n, {0, 0});
    for (size_t i = 0; i < n; ++i) {
      double gx = 0, gy = 0;
      for (size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(qnum[i * n + j] / qsum, 1e-12);
        const double coeff = (exaggeration * p[i * n + j] - q) * qnum[i * n + j];
        gx += coeff * (y[i][0] - y[j][0]);
        gy += coeff * (y[i][1] - y[j][1]);
      }
      grad[i] = {4.0 * gx, 4.0 * gy};
    }
    for (size_t i = 0; i < n; ++i) {
      for (int dim = 0; dim < 2; ++dim) {
        const double g = grad[i][dim];
        const bool same_sign = (g > 0) == (vel[i][dim] > 0);
        gains[i][dim] = same_sign ? std::max(gains[i][dim] * 0.8, 0.01) : gains[i][dim] + 0.2;
        vel[i][dim] = momentum * vel[i][dim] - config.learning_rate * gains[i][dim] * g;
        y[i][dim] += vel[i][dim];
      }
    }
    // recenter
    double mx = 0, my = 0;
    for (const auto& pt : y) {
      mx += pt[0];
      my += pt[1];
    }
    mx /= double(n);
    my /= double(n);
    for (auto& pt : y) {
      pt[0] -= mx;
      pt[1] -= my;
    }
  }

  result.final_kl = kl_divergence(y);
  result.points = std::move(y);
  return result;
}

}  // namespace ust::eval
