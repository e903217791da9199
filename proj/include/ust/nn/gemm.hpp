#pragma once

#include <cstddef>

namespace ust::nn {

// Small dense kernels backing conv2d. Row-major throughout, all variants
// accumulate into C. Loop order is chosen so the innermost loop runs over
// contiguous memory and auto-vectorizes.

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int i = 0; i < M; ++i) {
    const T* a = A + size_t(i) * K;
    T* c = C + size_t(i) * N;
    for (int k = 0; k < K; ++k) {
      const T aik = a[k];
      const T* b = B + size_t(k) * N;
      for (int j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int i = 0; i < M; ++i) {
    const T* a = A + size_t(i) * K;
    T* c = C + size_t(i) * N;
    for (int j = 0; j < N; ++j) {
      const T* b = B + size_t(j) * K;
      T acc = T(0);
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] += acc;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int k = 0; k < K; ++k) {
    const T* a = A + size_t(k) * M;
    const T* b = B + size_t(k) * N;
    for (int i = 0; i < M; ++i) {
      const T aki = a[i];
      T* c = C + size_t(i) * N;
      for (int j = 0; j < N; ++j) c[j] += aki * b[j];
    }
  }
}

// Unrolls conv patches: x[C,H,W] -> cols[C*kh*kw, Ho*Wo], zero padding.
template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad,
            int Ho, int Wo, T* cols) {
  const size_t plane = size_t(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* dst = cols + (size_t(c) * kh * kw + size_t(ki) * kw + kj) * plane;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* drow = dst + size_t(oy) * Wo;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < Wo; ++ox) drow[ox] = T(0);
            continue;
          }
          const T* srow = x + (size_t(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            drow[ox] = (ix >= 0 && ix < W) ? srow[ix] : T(0);
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-adds cols back into the image gradient.
template <typename T>
void col2im_add(const T* cols, int C, int H, int W, int kh, int kw, int stride, int pad,
                int Ho, int Wo, T* x) {
  const size_t plane = size_t(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* src = cols + (size_t(c) * kh * kw + size_t(ki) * kw + kj) * plane;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= H) continue;
          const T* srow = src + size_t(oy) * Wo;
          T* drow = x + (size_t(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < W) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace ust::nn
