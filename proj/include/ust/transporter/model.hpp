#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ust/core/json_io.hpp"
#include "ust/core/rng.hpp"
#include "ust/nn/cbam.hpp"
#include "ust/nn/init.hpp"
#include "ust/nn/ops.hpp"

namespace ust::transporter {

enum class AttentionMode { none, transport_weight, learned_sigma };

inline std::string attention_mode_name(AttentionMode m) {
  switch (m) {
    case AttentionMode::none: return "none";
    case AttentionMode::transport_weight: return "transport_weight";
    case AttentionMode::learned_sigma: return "learned_sigma";
  }
  return "none";
}

inline AttentionMode attention_mode_from(const std::string& s) {
  if (s == "none") return AttentionMode::none;
  if (s == "transport_weight") return AttentionMode::transport_weight;
  if (s == "learned_sigma") return AttentionMode::learned_sigma;
  throw data_error("unknown attention_mode \"" + s + "\"");
}

struct ModelConfig {
  int k = 10;
  int image_size = 256;
  int feature_channels = 32;  // C_f
  AttentionMode attention = AttentionMode::none;
  bool cbam = false;
  int cbam_reduction = 8;

  json to_json() const {
    return json{{"k", k},
                {"image_size", image_size},
                {"feature_channels", feature_channels},
                {"attention_mode", attention_mode_name(attention)},
                {"cbam", cbam},
                {"cbam_reduction", cbam_reduction}};
  }

  static ModelConfig from_json(const json& j) {
    reject_unknown_keys(j, {"k", "image_size", "feature_channels", "attention_mode", "cbam",
                            "cbam_reduction"},
                        "model config");
    ModelConfig c;
    c.k = j.value("k", c.k);
    c.image_size = j.value("image_size", c.image_size);
    c.feature_channels = j.value("feature_channels", c.feature_channels);
    c.attention = attention_mode_from(j.value("attention_mode", std::string("none")));
    c.cbam = j.value("cbam", c.cbam);
    c.cbam_reduction = j.value("cbam_reduction", c.cbam_reduction);
    c.validate();
    return c;
  }

  void validate() const {
    if (k < 1) throw data_error("model config: k must be >= 1");
    if (image_size % 4 != 0) throw data_error("model config: image_size must be divisible by 4");
    if (feature_channels < 2) throw data_error("model config: feature_channels must be >= 2");
    if (cbam_reduction < 1) throw data_error("model config: cbam_reduction must be >= 1");
  }

  // feature/heatmap resolution after the two stride-2 stages
  int feature_size() const { return image_size / 4; }

  std::string architecture_hash() const { return json_hash(to_json()); }
};

// conv + batchnorm + relu
template <typename T>
struct ConvBlock {
  nn::LayerSpec spec;
  nn::Tensor<T> weight, bias;
  nn::BatchNorm2d<T> bn;
  bool use_bn = true;
  bool use_relu = true;

  void init(int in_ch, int out_ch, int kernel, int stride, Rng& rng, bool with_bn = true,
            bool with_relu = true) {
    spec = nn::LayerSpec{nn::LayerKind::conv2d, kernel, kernel, stride, kernel / 2, in_ch, out_ch};
    weight = nn::kaiming_uniform<T>({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng);
    bias = nn::Tensor<T>::zeros({out_ch}, true);
    use_bn = with_bn;
    use_relu = with_relu;
    if (use_bn) bn.init(out_ch);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool train) {
    nn::Tensor<T> y = nn::conv2d(x, weight, bias, spec);
    if (use_bn) y = bn.forward(y, train);
    if (use_relu) y = nn::relu(y);
    return y;
  }

  void collect(const std::string& prefix, std::vector<std::pair<std::string, nn::Tensor<T>>>& out) {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
    if (use_bn) {
      out.emplace_back(prefix + ".bn.gamma", bn.gamma);
      out.emplace_back(prefix + ".bn.beta", bn.beta);
    }
  }
};

// Feature encoder Psi: six conv blocks, 7x7 first, two stride-2 stages,
// 10 -> C_f channels at quarter resolution. Optional CBAM after block 3.
template <typename T>
struct FFCNN {
  std::vector<ConvBlock<T>> blocks;
  nn::Cbam<T> cbam;
  bool cbam_enabled = false;

  void init(const ModelConfig& cfg, Rng& rng) {
    const int c = cfg.feature_channels;
    blocks.resize(6);
    blocks[0].init(10, c, 7, 2, rng);
    blocks[1].init(c, c, 3, 2, rng);
    blocks[2].init(c, 2 * c, 3, 1, rng);
    blocks[3].init(2 * c, 2 * c, 3, 1, rng);
    blocks[4].init(2 * c, 2 * c, 3, 1, rng);
    blocks[5].init(2 * c, c, 3, 1, rng);
    cbam_enabled = cfg.cbam;
    if (cbam_enabled) cbam.init(2 * c, cfg.cbam_reduction, rng);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& fpm10, bool train) {
    if (fpm10.ndim() != 4 || fpm10.dim(1) != 10)
      throw data_error("ffcnn: input must be [N,10,H,W], got " + nn::shape_str(fpm10.shape()));
    nn::Tensor<T> h = fpm10;
    for (size_t i = 0; i < blocks.size(); ++i) {
      h = blocks[i].forward(h, train);
      if (cbam_enabled && i == 2) h = cbam.forward(h);
    }
    return h;
  }

  void collect(std::vector<std::pair<std::string, nn::Tensor<T>>>& out) {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect("ffcnn.b" + std::to_string(i), out);
    if (cbam_enabled)
      for (auto& p : cbam.named_params("ffcnn.cbam")) out.push_back(p);
  }
};

template <typename T>
struct KeyNetOutput {
  nn::Tensor<T> coords;    // [N,K,2]
  nn::Tensor<T> heatmaps;  // [N,K,h,w] gaussian-rendered
  nn::Tensor<T> probs;     // [N,K,h,w] spatial-softmax mass
};

// Keypoint extractor Phi: six conv layers (7x7 first, 1x1 regressor last),
// spatial softmax, gaussian rendering at feature resolution.
template <typename T>
struct KeyNet {
  std::vector<ConvBlock<T>> blocks;
  int k = 0;

  void init(const ModelConfig& cfg, Rng& rng) {
    const int c = cfg.feature_channels;
    k = cfg.k;
    blocks.resize(6);
    blocks[0].init(10, c, 7, 2, rng);
    blocks[1].init(c, c, 3, 2, rng);
    blocks[2].init(c, 2 * c, 3, 1, rng);
    blocks[3].init(2 * c, 2 * c, 3, 1, rng);
    blocks[4].init(2 * c, 2 * c, 3, 1, rng);
    // final 1x1 regressor: k channels, no batchnorm / relu
    blocks[5].init(2 * c, cfg.k, 1, 1, rng, false, false);
  }

  // sigma: [K] positive widths (constant or softplus-reparameterized)
  KeyNetOutput<T> forward(const nn::Tensor<T>& fpm10, const nn::Tensor<T>& sigma, bool train) {
    if (fpm10.ndim() != 4 || fpm10.dim(1) != 10)
      throw data_error("keynet: input must be [N,10,H,W], got " + nn::shape_str(fpm10.shape()));
    nn::Tensor<T> h = fpm10;
    for (auto& b : blocks) h = b.forward(h, train);
    if (h.dim(1) != k)
      throw data_error("keynet: regressor produced " + std::to_string(h.dim(1)) +
                       " channels, expected k=" + std::to_string(k));
    auto ss = nn::spatial_softmax(h);
    KeyNetOutput<T> out;
    out.coords = ss.coords;
    out.probs = ss.probs;
    out.heatmaps = nn::gaussian_render(ss.coords, sigma, h.dim(2), h.dim(3));
    return out;
  }

  void collect(std::vector<std::pair<std::string, nn::Tensor<T>>>& out) {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect("keynet.b" + std::to_string(i), out);
  }
};

// Reconstruction decoder eta: three conv layers interleaved with three
// bilinear upsampling stages (x2, x2, x1) back to 10 channels at input
// resolution, sigmoid output.
template <typename T>
struct RefineNet {
  ConvBlock<T> b0, b1, b2;

  void init(const ModelConfig& cfg, Rng& rng) {
    const int c = cfg.feature_channels;
    b0.init(c, c, 3, 1, rng);
    b1.init(c, std::max(2, c / 2), 3, 1, rng);
    b2.init(std::max(2, c / 2), 10, 3, 1, rng, false, false);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& epsilon, bool train) {
    nn::Tensor<T> h = b0.forward(epsilon, train);
    h = nn::upsample_bilinear(h, 2);
    h = b1.forward(h, train);
    h = nn::upsample_bilinear(h, 2);
    h = b2.forward(h, train);
    h = nn::upsample_bilinear(h, 1);
    return nn::sigmoid(h);
  }

  void collect(std::vector<std::pair<std::string, nn::Tensor<T>>>& out) {
    b0.collect("refinenet.b0", out);
    b1.collect("refinenet.b1", out);
    b2.collect("refinenet.b2", out);
  }
};

// Feature transportation: starting from the source features, every keypoint
// suppresses its own neighborhood in both frames and pastes the target
// features at the target location, sequentially in fixed index order:
//   eps <- (1 - w phi_s,k)(1 - w phi_t,k) eps + w phi_t,k psi_t
template <typename T>
nn::Tensor<T> transport(const nn::Tensor<T>& psi_s, const nn::Tensor<T>& psi_t,
                        const nn::Tensor<T>& phi_s, const nn::Tensor<T>& phi_t,
                        const nn::Tensor<T>& weights) {
  if (psi_s.shape() != psi_t.shape())
    throw data_error("transport: feature shapes differ: " + nn::shape_str(psi_s.shape()) +
                     " vs " + nn::shape_str(psi_t.shape()));
  if (phi_s.shape() != phi_t.shape())
    throw data_error("transport: heatmap shapes differ");
  const int N = psi_s.dim(0), C = psi_s.dim(1), H = psi_s.dim(2), W = psi_s.dim(3);
  const int K = phi_s.dim(1);
  if (phi_s.dim(0) != N || phi_s.dim(2) != H || phi_s.dim(3) != W)
    throw data_error("transport: heatmaps " + nn::shape_str(phi_s.shape()) +
                     " do not match features " + nn::shape_str(psi_s.shape()));
  if (weights.ndim() != 1 || weights.dim(0) != K)
    throw data_error("transport: weights must be [K]");

  const size_t plane = size_t(H) * W;
  const size_t fcount = size_t(N) * C * plane;

  // e_stack[k] holds epsilon BEFORE keypoint k's update (e_stack[0] = psi_s)
  std::vector<std::vector<T>> e_stack;
  e_stack.reserve(size_t(K) + 1);
  e_stack.emplace_back(psi_s.value().begin(), psi_s.value().end());
  const T* pt = psi_t.value().data();
  const T* hs = phi_s.value().data();
  const T* ht = phi_t.value().data();
  const T* wv = weights.value().data();

  for (int kk = 0; kk < K; ++kk) {
    const std::vector<T>& prev = e_stack.back();
    std::vector<T> next(fcount);
    const T w = wv[size_t(kk)];
    for (int n = 0; n < N; ++n) {
      const T* s_map = hs + (size_t(n) * K + kk) * plane;
      const T* t_map = ht + (size_t(n) * K + kk) * plane;
      for (int c = 0; c < C; ++c) {
        const size_t base = (size_t(n) * C + c) * plane;
        for (size_t p = 0; p < plane; ++p) {
          const T su = T(1) - w * s_map[p];
          const T tu = T(1) - w * t_map[p];
          next[base + p] = su * tu * prev[base + p] + w * t_map[p] * pt[base + p];
        }
      }
    }
    e_stack.push_back(std::move(next));
  }

  std::vector<T> out = e_stack.back();

  auto backward = [N, C, K, H, W, plane, e_stack = std::move(e_stack)](nn::Node<T>& self) {
    auto& p_psi_s = *self.parents[0];
    auto& p_psi_t = *self.parents[1];
    auto& p_phi_s = *self.parents[2];
    auto& p_phi_t = *self.parents[3];
    auto& p_w = *self.parents[4];
    const T* pt = p_psi_t.value.data();
    const T* hs = p_phi_s.value.data();
    const T* ht = p_phi_t.value.data();
    const T* wv = p_w.value.data();

    std::vector<T> de(self.grad.begin(), self.grad.end());
    std::vector<T> de_prev(de.size());
    for (int kk = K - 1; kk >= 0; --kk) {
      const std::vector<T>& prev = e_stack[size_t(kk)];
      const T w = wv[size_t(kk)];
      double dw_acc = 0;
      for (int n = 0; n < N; ++n) {
        const T* s_map = hs + (size_t(n) * K + kk) * plane;
        const T* t_map = ht + (size_t(n) * K + kk) * plane;
        T* ds_map = p_phi_s.requires_grad ? p_phi_s.grad.data() + (size_t(n) * K + kk) * plane
                                          : nullptr;
        T* dt_map = p_phi_t.requires_grad ? p_phi_t.grad.data() + (size_t(n) * K + kk) * plane
                                          : nullptr;
        for (size_t p = 0; p < plane; ++p) {
          const T su = T(1) - w * s_map[p];
          const T tu = T(1) - w * t_map[p];
          T ds_sum = T(0), dt_sum = T(0);
          for (int c = 0; c < C; ++c) {
            const size_t idx = (size_t(n) * C + c) * plane + p;
            const T g = de[idx];
            de_prev[idx] = g * su * tu;
            if (p_psi_t.requires_grad) p_psi_t.grad[idx] += g * w * t_map[p];
            ds_sum += g * tu * prev[idx];
            dt_sum += g * (-w * su * prev[idx] + w * pt[idx]);
            if (p_w.requires_grad)
              dw_acc += double(g) * double(-s_map[p] * tu * prev[idx] -
                                           t_map[p] * su * prev[idx] + t_map[p] * pt[idx]);
          }
          if (ds_map) ds_map[p] += -w * ds_sum;
          if (dt_map) dt_map[p] += dt_sum;
        }
      }
      if (p_w.requires_grad) p_w.grad[size_t(kk)] += T(dw_acc);
      std::swap(de, de_prev);
    }
    if (p_psi_s.requires_grad)
      for (size_t i = 0; i < de.size(); ++i) p_psi_s.grad[i] += de[i];
  };

  return nn::make_result<T>(psi_s.shape(), std::move(out), {psi_s, psi_t, phi_s, phi_t, weights},
                            backward, "transport");
}

inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

template <typename T>
struct TransportResult {
  nn::Tensor<T> epsilon;
  KeyNetOutput<T> source_keys, target_keys;
  nn::Tensor<T> reconstruction;
};

// The three networks plus the attention parameters, with checkpointable
// named parameters and buffers.
template <typename T>
class TransporterModel {
 public:
  TransporterModel() = default;

  TransporterModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "model-init"));
    ffcnn_.init(cfg_, rng);
    keynet_.init(cfg_, rng);
    refinenet_.init(cfg_, rng);
    // sigma stored raw with sigma = softplus(raw) + 1e-3, started at 0.1
    const T raw0 = T(softplus_inverse(0.1 - 1e-3));
    raw_sigma_ = nn::Tensor<T>::filled({cfg_.k}, raw0,
                                       cfg_.attention == AttentionMode::learned_sigma);
    // transport weights through a sigmoid, started near vanilla behaviour
    raw_weight_ = nn::Tensor<T>::filled({cfg_.k}, T(2),
                                        cfg_.attention == AttentionMode::transport_weight);
  }

  const ModelConfig& config() const { return cfg_; }

  nn::Tensor<T> sigma() {
    if (cfg_.attention == AttentionMode::learned_sigma)
      return nn::add_scalar(nn::softplus(raw_sigma_), T(1e-3));
    return nn::Tensor<T>::filled({cfg_.k}, T(0.1), false);
  }

  nn::Tensor<T> transport_weights() {
    if (cfg_.attention == AttentionMode::transport_weight) return nn::sigmoid(raw_weight_);
    return nn::Tensor<T>::filled({cfg_.k}, T(1), false);
  }

  nn::Tensor<T> features(const nn::Tensor<T>& fpm10, bool train) {
    return ffcnn_.forward(fpm10, train);
  }

  KeyNetOutput<T> keypoints(const nn::Tensor<T>& fpm10, bool train) {
    return keynet_.forward(fpm10, sigma(), train);
  }

  nn::Tensor<T> refine(const nn::Tensor<T>& epsilon, bool train) {
    return refinenet_.forward(epsilon, train);
  }

  // Full training-step forward. Gradients flow only through the target
  // branch: the source pass runs off the tape entirely.
  std::pair<nn::Tensor<T>, TransportResult<T>> training_forward(const nn::Tensor<T>& fpm_source,
                                                                const nn::Tensor<T>& fpm_target,
                                                                bool train = true) {
    TransportResult<T> r;
    {
      nn::NoGradGuard off_tape;
      r.source_keys = keypoints(fpm_source, train);
    }
    nn::Tensor<T> psi_s;
    {
      nn::NoGradGuard off_tape;
      psi_s = features(fpm_source, train);
    }
    nn::Tensor<T> psi_t = features(fpm_target, train);
    r.target_keys = keypoints(fpm_target, train);
    r.epsilon = transport(psi_s, psi_t, r.source_keys.heatmaps, r.target_keys.heatmaps,
                          transport_weights());
    r.reconstruction = refine(r.epsilon, train);
    nn::Tensor<T> loss = nn::mse_loss(r.reconstruction, fpm_target.detach());
    return {loss, std::move(r)};
  }

  // The function the tape actually differentiates: the target branch with
  // the source-branch outputs held fixed. training_forward computes its
  // gradient; the finite-difference harness re-evaluates it directly.
  nn::Tensor<T> target_branch_loss(const nn::Tensor<T>& psi_source_const,
                                   const nn::Tensor<T>& heat_source_const,
                                   const nn::Tensor<T>& fpm_target, bool train = true) {
    nn::Tensor<T> psi_t = features(fpm_target, train);
    KeyNetOutput<T> keys_t = keypoints(fpm_target, train);
    nn::Tensor<T> eps = transport(psi_source_const, psi_t, heat_source_const, keys_t.heatmaps,
                                  transport_weights());
    return nn::mse_loss(refine(eps, train), fpm_target.detach());
  }

  // Trainable parameters for the active attention mode.
  std::vector<std::pair<std::string, nn::Tensor<T>>> named_parameters() {
    std::vector<std::pair<std::string, nn::Tensor<T>>> out;
    ffcnn_.collect(out);
    keynet_.collect(out);
    refinenet_.collect(out);
    if (cfg_.attention == AttentionMode::learned_sigma) out.emplace_back("raw_sigma", raw_sigma_);
    if (cfg_.attention == AttentionMode::transport_weight)
      out.emplace_back("raw_weight", raw_weight_);
    return out;
  }

  std::vector<nn::Tensor<T>> parameters() {
    std::vector<nn::Tensor<T>> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  // Non-trainable state: batchnorm running statistics plus the attention
  // parameters inactive in the current mode.
  std::vector<std::pair<std::string, std::vector<T>*>> named_buffers() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    auto add_bn = [&](const std::string& prefix, ConvBlock<T>& b) {
      if (!b.use_bn) return;
      out.emplace_back(prefix + ".bn.running_mean", &b.bn.running_mean);
      out.emplace_back(prefix + ".bn.running_var", &b.bn.running_var);
    };
    for (size_t i = 0; i < ffcnn_.blocks.size(); ++i)
      add_bn("ffcnn.b" + std::to_string(i), ffcnn_.blocks[i]);
    for (size_t i = 0; i < keynet_.blocks.size(); ++i)
      add_bn("keynet.b" + std::to_string(i), keynet_.blocks[i]);
    add_bn("refinenet.b0", refinenet_.b0);
    add_bn("refinenet.b1", refinenet_.b1);
    add_bn("refinenet.b2", refinenet_.b2);
    if (cfg_.attention != AttentionMode::learned_sigma)
      out.emplace_back("raw_sigma", &raw_sigma_.raw_value());
    if (cfg_.attention != AttentionMode::transport_weight)
      out.emplace_back("raw_weight", &raw_weight_.raw_value());
    return out;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.zero_grad();
  }

 private:
  ModelConfig cfg_;
  FFCNN<T> ffcnn_;
  KeyNet<T> keynet_;
  RefineNet<T> refinenet_;
  nn::Tensor<T> raw_sigma_, raw_weight_;
};

}  // namespace ust::transporter
