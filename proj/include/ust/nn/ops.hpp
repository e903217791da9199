#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ust/nn/gemm.hpp"
#include "ust/nn/tensor.hpp"

namespace ust::nn {

enum class LayerKind { conv2d, batchnorm2d, relu, spatial_softmax, bilinear_upsample, cbam };

struct LayerSpec {
  LayerKind kind = LayerKind::conv2d;
  int kh = 3, kw = 3;
  int stride = 1;
  int pad = 1;
  int in_channels = 1;
  int out_channels = 1;
};

inline int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// ---- conv2d ----

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 const LayerSpec& spec) {
  if (x.ndim() != 4) throw data_error("conv2d: input must be 4-D, got " + shape_str(x.shape()));
  if (w.ndim() != 4) throw data_error("conv2d: weight must be 4-D, got " + shape_str(w.shape()));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = w.dim(0);
  if (C != spec.in_channels || w.dim(1) != C)
    throw data_error("conv2d: channel axis mismatch: input C=" + std::to_string(C) +
                     ", weight C=" + std::to_string(w.dim(1)) +
                     ", spec in_channels=" + std::to_string(spec.in_channels));
  if (F != spec.out_channels)
    throw data_error("conv2d: output channel axis mismatch: weight F=" + std::to_string(F) +
                     ", spec out_channels=" + std::to_string(spec.out_channels));
  if (w.dim(2) != spec.kh || w.dim(3) != spec.kw)
    throw data_error("conv2d: kernel axes " + shape_str({w.dim(2), w.dim(3)}) +
                     " do not match spec " + shape_str({spec.kh, spec.kw}));
  const bool has_bias = b.defined();
  if (has_bias && (b.ndim() != 1 || b.dim(0) != F))
    throw data_error("conv2d: bias axis must be [" + std::to_string(F) + "], got " +
                     shape_str(b.shape()));
  const int Ho = conv_out_extent(H, spec.kh, spec.stride, spec.pad);
  const int Wo = conv_out_extent(W, spec.kw, spec.stride, spec.pad);
  if (Ho <= 0 || Wo <= 0)
    throw data_error("conv2d: non-positive output extent " + shape_str({Ho, Wo}) +
                     " for input " + shape_str(x.shape()));

  const int KK = C * spec.kh * spec.kw;
  const size_t plane = size_t(Ho) * Wo;
  std::vector<T> out(size_t(N) * F * plane, T(0));
  std::vector<T> cols(size_t(KK) * plane);
  for (int n = 0; n < N; ++n) {
    im2col(x.value().data() + size_t(n) * C * H * W, C, H, W, spec.kh, spec.kw, spec.stride,
           spec.pad, Ho, Wo, cols.data());
    T* on = out.data() + size_t(n) * F * plane;
    if (has_bias) {
      for (int f = 0; f < F; ++f) {
        const T bf = b.value()[size_t(f)];
        T* row = on + size_t(f) * plane;
        for (size_t p = 0; p < plane; ++p) row[p] = bf;
      }
    }
    gemm_nn(F, int(plane), KK, w.value().data(), cols.data(), on);
  }

  const int kh = spec.kh, kw = spec.kw, stride = spec.stride, pad = spec.pad;
  auto backward = [=](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    Node<T>* pb = has_bias ? self.parents[2].get() : nullptr;
    const T* g = self.grad.data();
    if (pb && pb->requires_grad) {
      for (int n = 0; n < N; ++n)
        for (int f = 0; f < F; ++f) {
          const T* row = g + (size_t(n) * F + f) * plane;
          T acc = T(0);
          for (size_t p = 0; p < plane; ++p) acc += row[p];
          pb->grad[size_t(f)] += acc;
        }
    }
    std::vector<T> cols2(size_t(KK) * plane);
    if (pw.requires_grad) {
      for (int n = 0; n < N; ++n) {
        im2col(px.value.data() + size_t(n) * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo,
               cols2.data());
        gemm_nt(F, KK, int(plane), g + size_t(n) * F * plane, cols2.data(), pw.grad.data());
      }
    }
    if (px.requires_grad) {
      std::vector<T> dcols(size_t(KK) * plane);
      for (int n = 0; n < N; ++n) {
        std::fill(dcols.begin(), dcols.end(), T(0));
        gemm_tn(KK, int(plane), F, pw.value.data(), g + size_t(n) * F * plane, dcols.data());
        col2im_add(dcols.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                   px.grad.data() + size_t(n) * C * H * W);
      }
    }
  };

  std::vector<Tensor<T>> inputs = {x, w};
  if (has_bias) inputs.push_back(b);
  return make_result<T>({N, F, Ho, Wo}, std::move(out), std::move(inputs), backward, "conv2d");
}

// ---- batchnorm2d ----

template <typename T>
struct BatchNorm2d {
  Tensor<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels) { init(channels); }

  void init(int channels) {
    gamma = Tensor<T>::filled({channels}, T(1), true);
    beta = Tensor<T>::zeros({channels}, true);
    running_mean.assign(size_t(channels), T(0));
    running_var.assign(size_t(channels), T(1));
  }

  int channels() const { return gamma.defined() ? gamma.dim(0) : 0; }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (x.ndim() != 4) throw data_error("batchnorm2d: input must be 4-D");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C != channels())
      throw data_error("batchnorm2d: channel axis " + std::to_string(C) + " != params " +
                       std::to_string(channels()));
    if (train && N < 2) throw data_error("batchnorm2d: train mode requires batch size >= 2");

    const size_t plane = size_t(H) * W;
    const size_t count = size_t(N) * plane;
    std::vector<T> out(x.value().size());
    std::vector<T> xhat(x.value().size());
    std::vector<T> inv_std(size_t(C), T(0));
    const T* xv = x.value().data();

    if (train) {
      std::vector<T> mean_c(size_t(C), T(0)), var_c(size_t(C), T(0));
      for (int c = 0; c < C; ++c) {
        double m = 0;
        for (int n = 0; n < N; ++n) {
          const T* p = xv + (size_t(n) * C + c) * plane;
          for (size_t i = 0; i < plane; ++i) m += double(p[i]);
        }
        m /= double(count);
        double v = 0;
        for (int n = 0; n < N; ++n) {
          const T* p = xv + (size_t(n) * C + c) * plane;
          for (size_t i = 0; i < plane; ++i) {
            double d = double(p[i]) - m;
            v += d * d;
          }
        }
        v /= double(count);  // biased, used for normalization
        mean_c[size_t(c)] = T(m);
        var_c[size_t(c)] = T(v);
        inv_std[size_t(c)] = T(1.0 / std::sqrt(v + double(eps)));
        // running stats use the unbiased variance, updated with momentum
        double unbiased = count > 1 ? v * double(count) / double(count - 1) : v;
        running_mean[size_t(c)] = (T(1) - momentum) * running_mean[size_t(c)] + momentum * T(m);
        running_var[size_t(c)] = (T(1) - momentum) * running_var[size_t(c)] + momentum * T(unbiased);
      }
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const T* p = xv + (size_t(n) * C + c) * plane;
          T* xh = xhat.data() + (size_t(n) * C + c) * plane;
          T* o = out.data() + (size_t(n) * C + c) * plane;
          const T m = mean_c[size_t(c)], is = inv_std[size_t(c)];
          const T gm = gamma.value()[size_t(c)], bt = beta.value()[size_t(c)];
          for (size_t i = 0; i < plane; ++i) {
            xh[i] = (p[i] - m) * is;
            o[i] = gm * xh[i] + bt;
          }
        }
    } else {
      for (int c = 0; c < C; ++c)
        inv_std[size_t(c)] = T(1.0 / std::sqrt(double(running_var[size_t(c)]) + double(eps)));
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const T* p = xv + (size_t(n) * C + c) * plane;
          T* xh = xhat.data() + (size_t(n) * C + c) * plane;
          T* o = out.data() + (size_t(n) * C + c) * plane;
          const T m = running_mean[size_t(c)], is = inv_std[size_t(c)];
          const T gm = gamma.value()[size_t(c)], bt = beta.value()[size_t(c)];
          for (size_t i = 0; i < plane; ++i) {
            xh[i] = (p[i] - m) * is;
            o[i] = gm * xh[i] + bt;
          }
        }
    }

    auto backward = [N, C, plane, count, train, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)](Node<T>& self) {
      auto& px = *self.parents[0];
      auto& pg = *self.parents[1];
      auto& pbta = *self.parents[2];
      const T* g = self.grad.data();
      for (int c = 0; c < C; ++c) {
        double sum_g = 0, sum_gx = 0;
        for (int n = 0; n < N; ++n) {
          const T* gr = g + (size_t(n) * C + c) * plane;
          const T* xh = xhat.data() + (size_t(n) * C + c) * plane;
          for (size_t i = 0; i < plane; ++i) {
            sum_g += double(gr[i]);
            sum_gx += double(gr[i]) * double(xh[i]);
          }
        }
        if (pg.requires_grad) pg.grad[size_t(c)] += T(sum_gx);
        if (pbta.requires_grad) pbta.grad[size_t(c)] += T(sum_g);
        if (px.requires_grad) {
          const T gm = pg.value[size_t(c)];
          const T is = inv_std[size_t(c)];
          if (train) {
            const T mg = T(sum_g / double(count));
            const T mgx = T(sum_gx / double(count));
            for (int n = 0; n < N; ++n) {
              const T* gr = g + (size_t(n) * C + c) * plane;
              const T* xh = xhat.data() + (size_t(n) * C + c) * plane;
              T* dx = px.grad.data() + (size_t(n) * C + c) * plane;
              for (size_t i = 0; i < plane; ++i)
                dx[i] += gm * is * (gr[i] - mg - xh[i] * mgx);
            }
          } else {
            for (int n = 0; n < N; ++n) {
              const T* gr = g + (size_t(n) * C + c) * plane;
              T* dx = px.grad.data() + (size_t(n) * C + c) * plane;
              for (size_t i = 0; i < plane; ++i) dx[i] += gm * is * gr[i];
            }
          }
        }
      }
    };

    return make_result<T>(x.shape(), std::move(out), {x, gamma, beta}, backward, "batchnorm2d");
  }
};

// ---- spatial softmax ----

template <typename T>
Tensor<T> softmax_hw(const Tensor<T>& logits) {
  if (logits.ndim() != 4) throw data_error("softmax_hw: input must be 4-D");
  const int N = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  if (H < 2 || W < 2) throw data_error("softmax_hw: spatial extents must be >= 2");
  const size_t plane = size_t(H) * W;
  std::vector<T> out(logits.value().size());
  const T* lv = logits.value().data();
  for (int nk = 0; nk < N * K; ++nk) {
    const T* p = lv + size_t(nk) * plane;
    T* o = out.data() + size_t(nk) * plane;
    T mx = p[0];
    for (size_t i = 1; i < plane; ++i) mx = std::max(mx, p[i]);
    double z = 0;
    for (size_t i = 0; i < plane; ++i) {
      o[i] = std::exp(p[i] - mx);
      z += double(o[i]);
    }
    const T inv = T(1.0 / z);
    for (size_t i = 0; i < plane; ++i) o[i] *= inv;
  }
  auto backward = [N, K, plane](Node<T>& self) {
    auto& pl = *self.parents[0];
    if (!pl.requires_grad) return;
    const T* g = self.grad.data();
    const T* y = self.value.data();
    for (int nk = 0; nk < N * K; ++nk) {
      const T* gp = g + size_t(nk) * plane;
      const T* yp = y + size_t(nk) * plane;
      T* dl = pl.grad.data() + size_t(nk) * plane;
      double dot = 0;
      for (size_t i = 0; i < plane; ++i) dot += double(gp[i]) * double(yp[i]);
      for (size_t i = 0; i < plane; ++i) dl[i] += yp[i] * (gp[i] - T(dot));
    }
  };
  return make_result<T>(logits.shape(), std::move(out), {logits}, backward, "softmax_hw");
}

// Normalized [-1,1] grid coordinate of a pixel index (align-corners).
template <typename T>
inline T grid_coord(int idx, int extent) {
  return T(-1) + T(2) * T(idx) / T(extent - 1);
}

// Probability-weighted expectation of grid position: probs[N,K,H,W] -> [N,K,2] (x,y).
template <typename T>
Tensor<T> grid_expectation(const Tensor<T>& probs) {
  const int N = probs.dim(0), K = probs.dim(1), H = probs.dim(2), W = probs.dim(3);
  const size_t plane = size_t(H) * W;
  std::vector<T> out(size_t(N) * K * 2);
  const T* pv = probs.value().data();
  for (int nk = 0; nk < N * K; ++nk) {
    const T* p = pv + size_t(nk) * plane;
    double cx = 0, cy = 0;
    for (int i = 0; i < H; ++i) {
      const T gy = grid_coord<T>(i, H);
      for (int j = 0; j < W; ++j) {
        const double pij = double(p[size_t(i) * W + j]);
        cx += pij * double(grid_coord<T>(j, W));
        cy += pij * double(gy);
      }
    }
    out[size_t(nk) * 2] = T(cx);
    out[size_t(nk) * 2 + 1] = T(cy);
  }
  auto backward = [N, K, H, W, plane](Node<T>& self) {
    auto& pp = *self.parents[0];
    if (!pp.requires_grad) return;
    const T* g = self.grad.data();
    for (int nk = 0; nk < N * K; ++nk) {
      const T gx_w = g[size_t(nk) * 2];
      const T gy_w = g[size_t(nk) * 2 + 1];
      T* dp = pp.grad.data() + size_t(nk) * plane;
      for (int i = 0; i < H; ++i) {
        const T gy = grid_coord<T>(i, H);
        for (int j = 0; j < W; ++j)
          dp[size_t(i) * W + j] += gx_w * grid_coord<T>(j, W) + gy_w * gy;
      }
    }
  };
  return make_result<T>({N, K, 2}, std::move(out), {probs}, backward, "grid_expectation");
}

template <typename T>
struct SpatialSoftmaxResult {
  Tensor<T> coords;  // [N,K,2], (x,y) in [-1,1]
  Tensor<T> probs;   // [N,K,H,W], sums to 1 per map
};

template <typename T>
SpatialSoftmaxResult<T> spatial_softmax(const Tensor<T>& logits) {
  SpatialSoftmaxResult<T> r;
  r.probs = softmax_hw(logits);
  r.coords = grid_expectation(r.probs);
  return r;
}

// ---- gaussian heatmap rendering ----

// out[n,k,i,j] = exp(-(|g(i,j) - coord(n,k)|^2) / (2 sigma_k^2)), grid in [-1,1]^2.
template <typename T>
Tensor<T> gaussian_render(const Tensor<T>& coords, const Tensor<T>& sigma, int H, int W) {
  if (coords.ndim() != 3 || coords.dim(2) != 2)
    throw data_error("gaussian_render: coords must be [N,K,2]");
  const int N = coords.dim(0), K = coords.dim(1);
  if (sigma.ndim() != 1 || sigma.dim(0) != K)
    throw data_error("gaussian_render: sigma must be [K]");
  if (H < 2 || W < 2) throw data_error("gaussian_render: grid extents must be >= 2");
  for (int k = 0; k < K; ++k)
    if (!(sigma.value()[size_t(k)] > T(0)))
      throw numeric_error("gaussian_render: sigma must be positive");

  const size_t plane = size_t(H) * W;
  std::vector<T> out(size_t(N) * K * plane);
  const T* cv = coords.value().data();
  const T* sv = sigma.value().data();
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) {
      const T cx = cv[(size_t(n) * K + k) * 2];
      const T cy = cv[(size_t(n) * K + k) * 2 + 1];
      const T inv2s2 = T(1) / (T(2) * sv[size_t(k)] * sv[size_t(k)]);
      T* o = out.data() + (size_t(n) * K + k) * plane;
      for (int i = 0; i < H; ++i) {
        const T dy = grid_coord<T>(i, H) - cy;
        for (int j = 0; j < W; ++j) {
          const T dx = grid_coord<T>(j, W) - cx;
          o[size_t(i) * W + j] = std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
      }
    }

  auto backward = [N, K, H, W, plane](Node<T>& self) {
    auto& pc = *self.parents[0];
    auto& ps = *self.parents[1];
    const T* g = self.grad.data();
    const T* y = self.value.data();
    const T* cv2 = pc.value.data();
    const T* sv2 = ps.value.data();
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k) {
        const T cx = cv2[(size_t(n) * K + k) * 2];
        const T cy = cv2[(size_t(n) * K + k) * 2 + 1];
        const T s = sv2[size_t(k)];
        const T inv_s2 = T(1) / (s * s);
        const T* gp = g + (size_t(n) * K + k) * plane;
        const T* yp = y + (size_t(n) * K + k) * plane;
        double dcx = 0, dcy = 0, ds = 0;
        for (int i = 0; i < H; ++i) {
          const T dy = grid_coord<T>(i, H) - cy;
          for (int j = 0; j < W; ++j) {
            const T dx = grid_coord<T>(j, W) - cx;
            const double gy_ = double(gp[size_t(i) * W + j]) * double(yp[size_t(i) * W + j]);
            dcx += gy_ * double(dx * inv_s2);
            dcy += gy_ * double(dy * inv_s2);
            ds += gy_ * double((dx * dx + dy * dy) * inv_s2 / s);
          }
        }
        if (pc.requires_grad) {
          pc.grad[(size_t(n) * K + k) * 2] += T(dcx);
          pc.grad[(size_t(n) * K + k) * 2 + 1] += T(dcy);
        }
        if (ps.requires_grad) ps.grad[size_t(k)] += T(ds);
      }
  };
  return make_result<T>({N, K, H, W}, std::move(out), {coords, sigma}, backward,
                        "gaussian_render");
}

// ---- bilinear upsampling (align-corners) ----

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int factor) {
  if (factor < 1) throw data_error("upsample_bilinear: factor must be >= 1");
  if (x.ndim() != 4) throw data_error("upsample_bilinear: input must be 4-D");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = H * factor, Wo = W * factor;

  // per-axis source index pairs and interpolation weights
  auto make_axis = [](int in, int out) {
    std::vector<int> i0(out), i1(out);
    std::vector<T> wgt(out);
    const double s = (out > 1 && in > 1) ? double(in - 1) / double(out - 1) : 0.0;
    for (int o = 0; o < out; ++o) {
      double f = o * s;
      int a = int(f);
      i0[o] = a;
      i1[o] = std::min(a + 1, in - 1);
      wgt[o] = T(f - a);
    }
    return std::tuple(i0, i1, wgt);
  };
  auto [y0, y1, wy] = make_axis(H, Ho);
  auto [x0, x1, wx] = make_axis(W, Wo);

  std::vector<T> out(size_t(N) * C * Ho * Wo);
  const T* xv = x.value().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* p = xv + size_t(nc) * H * W;
    T* o = out.data() + size_t(nc) * Ho * Wo;
    for (int i = 0; i < Ho; ++i) {
      const T* r0 = p + size_t(y0[i]) * W;
      const T* r1 = p + size_t(y1[i]) * W;
      const T vy = wy[i];
      for (int j = 0; j < Wo; ++j) {
        const T vx = wx[j];
        const T top = (T(1) - vx) * r0[x0[j]] + vx * r0[x1[j]];
        const T bot = (T(1) - vx) * r1[x0[j]] + vx * r1[x1[j]];
        o[size_t(i) * Wo + j] = (T(1) - vy) * top + vy * bot;
      }
    }
  }

  auto backward = [N, C, H, W, Ho, Wo, y0 = y0, y1 = y1, wy = wy, x0 = x0, x1 = x1,
                   wx = wx](Node<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    const T* g = self.grad.data();
    for (int nc = 0; nc < N * C; ++nc) {
      T* dx = px.grad.data() + size_t(nc) * H * W;
      const T* gp = g + size_t(nc) * Ho * Wo;
      for (int i = 0; i < Ho; ++i) {
        const T vy = wy[i];
        for (int j = 0; j < Wo; ++j) {
          const T vx = wx[j];
          const T gv = gp[size_t(i) * Wo + j];
          dx[size_t(y0[i]) * W + x0[j]] += (T(1) - vy) * (T(1) - vx) * gv;
          dx[size_t(y0[i]) * W + x1[j]] += (T(1) - vy) * vx * gv;
          dx[size_t(y1[i]) * W + x0[j]] += vy * (T(1) - vx) * gv;
          dx[size_t(y1[i]) * W + x1[j]] += vy * vx * gv;
        }
      }
    }
  };
  return make_result<T>({N, C, Ho, Wo}, std::move(out), {x}, backward, "upsample_bilinear");
}

// ---- pooling and gating primitives (CBAM building blocks) ----

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const int N = x.dim(0), C = x.dim(1);
  const size_t plane = size_t(x.dim(2)) * x.dim(3);
  std::vector<T> out(size_t(N) * C);
  const T* xv = x.value().data();
  for (int nc = 0; nc < N * C; ++nc) {
    double acc = 0;
    const T* p = xv + size_t(nc) * plane;
    for (size_t i = 0; i < plane; ++i) acc += double(p[i]);
    out[size_t(nc)] = T(acc / double(plane));
  }
  auto backward = [N, C, plane](Node<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    const T inv = T(1) / T(plane);
    for (int nc = 0; nc < N * C; ++nc) {
      const T g = self.grad[size_t(nc)] * inv;
      T* dx = px.grad.data() + size_t(nc) * plane;
      for (size_t i = 0; i < plane; ++i) dx[i] += g;
    }
  };
  return make_result<T>({N, C}, std::move(out), {x}, backward, "global_avg_pool");
}

template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& x) {
  const int N = x.dim(0), C = x.dim(1);
  const size_t plane = size_t(x.dim(2)) * x.dim(3);
  std::vector<T> out(size_t(N) * C);
  std::vector<size_t> arg(size_t(N) * C);
  const T* xv = x.value().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* p = xv + size_t(nc) * plane;
    size_t best = 0;
    for (size_t i = 1; i < plane; ++i)
      if (p[i] > p[best]) best = i;
    out[size_t(nc)] = p[best];
    arg[size_t(nc)] = best;
  }
  auto backward = [N, C, plane, arg = std::move(arg)](Node<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    for (int nc = 0; nc < N * C; ++nc)
      px.grad[size_t(nc) * plane + arg[size_t(nc)]] += self.grad[size_t(nc)];
  };
  return make_result<T>({N, C}, std::move(out), {x}, backward, "global_max_pool");
}

// Channel-wise mean and max maps stacked into [N,2,H,W].
template <typename T>
Tensor<T> channel_mean_max(const Tensor<T>& x) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const size_t plane = size_t(H) * W;
  std::vector<T> out(size_t(N) * 2 * plane);
  std::vector<int> arg(size_t(N) * plane);
  const T* xv = x.value().data();
  for (int n = 0; n < N; ++n) {
    T* omean = out.data() + size_t(n) * 2 * plane;
    T* omax = omean + plane;
    int* am = arg.data() + size_t(n) * plane;
    for (size_t p = 0; p < plane; ++p) {
      double acc = 0;
      T best = xv[(size_t(n) * C) * plane + p];
      int bc = 0;
      for (int c = 0; c < C; ++c) {
        const T v = xv[(size_t(n) * C + c) * plane + p];
        acc += double(v);
        if (v > best) {
          best = v;
          bc = c;
        }
      }
      omean[p] = T(acc / double(C));
      omax[p] = best;
      am[p] = bc;
    }
  }
  auto backward = [N, C, plane, arg = std::move(arg)](Node<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    const T invC = T(1) / T(C);
    for (int n = 0; n < N; ++n) {
      const T* gmean = self.grad.data() + size_t(n) * 2 * plane;
      const T* gmax = gmean + plane;
      const int* am = arg.data() + size_t(n) * plane;
      for (size_t p = 0; p < plane; ++p) {
        const T gm = gmean[p] * invC;
        for (int c = 0; c < C; ++c) px.grad[(size_t(n) * C + c) * plane + p] += gm;
        px.grad[(size_t(n) * C + am[p]) * plane + p] += gmax[p];
      }
    }
  };
  return make_result<T>({N, 2, H, W}, std::move(out), {x}, backward, "channel_mean_max");
}

// y[N,O] = x[N,I] W[O,I]^T + b[O]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const int N = x.dim(0), I = x.dim(1), O = w.dim(0);
  if (w.dim(1) != I) throw data_error("linear: in-feature axis mismatch");
  std::vector<T> out(size_t(N) * O, T(0));
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) out[size_t(n) * O + o] = b.value()[size_t(o)];
  gemm_nt(N, O, I, x.value().data(), w.value().data(), out.data());
  auto backward = [N, I, O](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    const T* g = self.grad.data();
    if (pb.requires_grad)
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o) pb.grad[size_t(o)] += g[size_t(n) * O + o];
    if (pw.requires_grad) gemm_tn(O, I, N, g, px.value.data(), pw.grad.data());
    if (px.requires_grad) gemm_nn(N, I, O, g, pw.value.data(), px.grad.data());
  };
  return make_result<T>({N, O}, std::move(out), {x, w, b}, backward, "linear");
}

// broadcast multiply: per-channel gate [N,C]
template <typename T>
Tensor<T> mul_channel_gate(const Tensor<T>& x, const Tensor<T>& gate) {
  const int N = x.dim(0), C = x.dim(1);
  const size_t plane = size_t(x.dim(2)) * x.dim(3);
  if (gate.ndim() != 2 || gate.dim(0) != N || gate.dim(1) != C)
    throw data_error("mul_channel_gate: gate must be [N,C]");
  std::vector<T> out(x.value().size());
  const T* xv = x.value().data();
  const T* gv = gate.value().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T g = gv[size_t(nc)];
    const T* p = xv + size_t(nc) * plane;
    T* o = out.data() + size_t(nc) * plane;
    for (size_t i = 0; i < plane; ++i) o[i] = p[i] * g;
  }
  auto backward = [N, C, plane](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    const T* g = self.grad.data();
    for (int nc = 0; nc < N * C; ++nc) {
      const T* gp = g + size_t(nc) * plane;
      if (px.requires_grad) {
        const T gv = pg.value[size_t(nc)];
        T* dx = px.grad.data() + size_t(nc) * plane;
        for (size_t i = 0; i < plane; ++i) dx[i] += gp[i] * gv;
      }
      if (pg.requires_grad) {
        const T* xp = px.value.data() + size_t(nc) * plane;
        double acc = 0;
        for (size_t i = 0; i < plane; ++i) acc += double(gp[i]) * double(xp[i]);
        pg.grad[size_t(nc)] += T(acc);
      }
    }
  };
  return make_result<T>(x.shape(), std::move(out), {x, gate}, backward, "mul_channel_gate");
}

// broadcast multiply: spatial gate [N,1,H,W]
template <typename T>
Tensor<T> mul_spatial_gate(const Tensor<T>& x, const Tensor<T>& gate) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const size_t plane = size_t(H) * W;
  if (gate.ndim() != 4 || gate.dim(0) != N || gate.dim(1) != 1 || gate.dim(2) != H ||
      gate.dim(3) != W)
    throw data_error("mul_spatial_gate: gate must be [N,1,H,W]");
  std::vector<T> out(x.value().size());
  const T* xv = x.value().data();
  const T* gv = gate.value().data();
  for (int n = 0; n < N; ++n) {
    const T* gp = gv + size_t(n) * plane;
    for (int c = 0; c < C; ++c) {
      const T* p = xv + (size_t(n) * C + c) * plane;
      T* o = out.data() + (size_t(n) * C + c) * plane;
      for (size_t i = 0; i < plane; ++i) o[i] = p[i] * gp[i];
    }
  }
  auto backward = [N, C, plane](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    const T* g = self.grad.data();
    for (int n = 0; n < N; ++n) {
      const T* gatev = pg.value.data() + size_t(n) * plane;
      for (int c = 0; c < C; ++c) {
        const T* gp = g + (size_t(n) * C + c) * plane;
        if (px.requires_grad) {
          T* dx = px.grad.data() + (size_t(n) * C + c) * plane;
          for (size_t i = 0; i < plane; ++i) dx[i] += gp[i] * gatev[i];
        }
        if (pg.requires_grad) {
          const T* xp = px.value.data() + (size_t(n) * C + c) * plane;
          T* dg = pg.grad.data() + size_t(n) * plane;
          for (size_t i = 0; i < plane; ++i) dg[i] += gp[i] * xp[i];
        }
      }
    }
  };
  return make_result<T>(x.shape(), std::move(out), {x, gate}, backward, "mul_spatial_gate");
}

}  // namespace ust::nn
