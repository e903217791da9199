#pragma once

#include "ust/nn/init.hpp"
#include "ust/nn/ops.hpp"

namespace ust::nn {

// Sequential channel-then-spatial attention gate. Channel gate: shared MLP
// over globally average- and max-pooled descriptors, summed, sigmoid.
// Spatial gate: 7x7 conv over the channel-wise mean/max maps, sigmoid.
template <typename T>
struct Cbam {
  Tensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  Tensor<T> spatial_weight, spatial_bias;
  LayerSpec spatial_spec;
  int channels = 0;

  Cbam() = default;

  Cbam(int in_channels, int reduction, Rng& rng) { init(in_channels, reduction, rng); }

  void init(int in_channels, int reduction, Rng& rng) {
    channels = in_channels;
    const int hidden = std::max(1, in_channels / reduction);
    mlp_w1 = kaiming_uniform<T>({hidden, in_channels}, in_channels, rng);
    mlp_b1 = Tensor<T>::zeros({hidden}, true);
    mlp_w2 = kaiming_uniform<T>({in_channels, hidden}, hidden, rng);
    mlp_b2 = Tensor<T>::zeros({in_channels}, true);
    spatial_spec = LayerSpec{LayerKind::conv2d, 7, 7, 1, 3, 2, 1};
    spatial_weight = kaiming_uniform<T>({1, 2, 7, 7}, 2 * 7 * 7, rng);
    spatial_bias = Tensor<T>::zeros({1}, true);
  }

  Tensor<T> shared_mlp(const Tensor<T>& descriptor) const {
    return linear(relu(linear(descriptor, mlp_w1, mlp_b1)), mlp_w2, mlp_b2);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> ch_gate = sigmoid(add(shared_mlp(global_avg_pool(x)),
                                    shared_mlp(global_max_pool(x))));
    Tensor<T> xc = mul_channel_gate(x, ch_gate);
    Tensor<T> sp_gate =
        sigmoid(conv2d(channel_mean_max(xc), spatial_weight, spatial_bias, spatial_spec));
    return mul_spatial_gate(xc, sp_gate);
  }

  std::vector<std::pair<std::string, Tensor<T>>> named_params(const std::string& prefix) {
    return {{prefix + ".mlp_w1", mlp_w1}, {prefix + ".mlp_b1", mlp_b1},
            {prefix + ".mlp_w2", mlp_w2}, {prefix + ".mlp_b2", mlp_b2},
            {prefix + ".spatial_weight", spatial_weight},
            {prefix + ".spatial_bias", spatial_bias}};
  }
};

}  // namespace ust::nn
