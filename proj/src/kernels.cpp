#include "qpl/kernels.hpp"

#include <algorithm>
#include <cstring>

#include "qpl/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qpl::kernels {

namespace {
inline bool nested() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}
}  // namespace

int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// ikj loop order: the j-inner axpy keeps B and C rows streaming and lets the
// compiler vectorize. K is blocked so a panel of B stays in cache.
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  constexpr int KB = 256;
#pragma omp parallel for schedule(static) if (!nested())
  for (int i = 0; i < M; ++i) {
    T* crow = C + static_cast<std::size_t>(i) * N;
    if (!accumulate) std::fill(crow, crow + N, T(0));
    for (int k0 = 0; k0 < K; k0 += KB) {
      const int k1 = std::min(K, k0 + KB);
      for (int k = k0; k < k1; ++k) {
        const T a = A[static_cast<std::size_t>(i) * K + k];
        if (a == T(0)) continue;
        const T* brow = B + static_cast<std::size_t>(k) * N;
        for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
    }
  }
}

template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  // dot products with eight fixed-order partial sums: the reassociation is
  // pinned by the source, so results stay deterministic while the lanes
  // vectorize
#pragma omp parallel for schedule(static) if (!nested())
  for (int i = 0; i < M; ++i) {
    const T* arow = A + static_cast<std::size_t>(i) * K;
    T* crow = C + static_cast<std::size_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const T* brow = B + static_cast<std::size_t>(j) * K;
      T lanes[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
      int k = 0;
      for (; k + 8 <= K; k += 8)
        for (int l = 0; l < 8; ++l) lanes[l] += arow[k + l] * brow[k + l];
      T acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
              ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
      for (; k < K; ++k) acc += arow[k] * brow[k];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
#pragma omp parallel for schedule(static) if (!nested())
  for (int i = 0; i < M; ++i) {
    T* crow = C + static_cast<std::size_t>(i) * N;
    if (!accumulate) std::fill(crow, crow + N, T(0));
    for (int k = 0; k < K; ++k) {
      const T a = A[static_cast<std::size_t>(k) * M + i];
      if (a == T(0)) continue;
      const T* brow = B + static_cast<std::size_t>(k) * N;
      for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, T* col) {
  const int oh = conv_out_dim(H, kh, stride, pad);
  const int ow = conv_out_dim(W, kw, stride, pad);
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < C; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        T* crow = col + ((static_cast<std::size_t>(c) * kh + i) * kw + j) * ohw;
        for (int r = 0; r < oh; ++r) {
          const int hi = r * stride - pad + i;
          T* out = crow + static_cast<std::size_t>(r) * ow;
          if (hi < 0 || hi >= H) {
            std::fill(out, out + ow, T(0));
            continue;
          }
          const T* xrow = xc + static_cast<std::size_t>(hi) * W;
          for (int s = 0; s < ow; ++s) {
            const int wi = s * stride - pad + j;
            out[s] = (wi >= 0 && wi < W) ? xrow[wi] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad, T* x) {
  const int oh = conv_out_dim(H, kh, stride, pad);
  const int ow = conv_out_dim(W, kw, stride, pad);
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < C; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T* crow = col + ((static_cast<std::size_t>(c) * kh + i) * kw + j) * ohw;
        for (int r = 0; r < oh; ++r) {
          const int hi = r * stride - pad + i;
          if (hi < 0 || hi >= H) continue;
          T* xrow = xc + static_cast<std::size_t>(hi) * W;
          const T* in = crow + static_cast<std::size_t>(r) * ow;
          for (int s = 0; s < ow; ++s) {
            const int wi = s * stride - pad + j;
            if (wi >= 0 && wi < W) xrow[wi] += in[s];
          }
        }
      }
    }
  }
}

namespace ref {

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) {
      T acc = T(0);
      for (int k = 0; k < K; ++k)
        acc += A[static_cast<std::size_t>(i) * K + k] * B[static_cast<std::size_t>(k) * N + j];
      std::size_t idx = static_cast<std::size_t>(i) * N + j;
      C[idx] = accumulate ? C[idx] + acc : acc;
    }
  }
}

template <typename T>
void conv2d_direct(const T* x, int N, int C, int H, int W, const T* w, int O, int kh, int kw,
                   const T* b, int stride, int pad, T* y) {
  const int oh = conv_out_dim(H, kh, stride, pad);
  const int ow = conv_out_dim(W, kw, stride, pad);
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < O; ++o) {
      for (int r = 0; r < oh; ++r) {
        for (int s = 0; s < ow; ++s) {
          T acc = b ? b[o] : T(0);
          for (int c = 0; c < C; ++c) {
            for (int i = 0; i < kh; ++i) {
              const int hi = r * stride - pad + i;
              if (hi < 0 || hi >= H) continue;
              for (int j = 0; j < kw; ++j) {
                const int wi = s * stride - pad + j;
                if (wi < 0 || wi >= W) continue;
                acc += x[((static_cast<std::size_t>(n) * C + c) * H + hi) * W + wi] *
                       w[((static_cast<std::size_t>(o) * C + c) * kh + i) * kw + j];
              }
            }
          }
          y[((static_cast<std::size_t>(n) * O + o) * oh + r) * ow + s] = acc;
        }
      }
    }
  }
}

template void gemm_nn<float>(int, int, int, const float*, const float*, float*, bool);
template void gemm_nn<double>(int, int, int, const double*, const double*, double*, bool);
template void conv2d_direct<float>(const float*, int, int, int, int, const float*, int, int, int,
                                   const float*, int, int, float*);
template void conv2d_direct<double>(const double*, int, int, int, int, const double*, int, int,
                                    int, const double*, int, int, double*);

}  // namespace ref

template void gemm_nn<float>(int, int, int, const float*, const float*, float*, bool);
template void gemm_nn<double>(int, int, int, const double*, const double*, double*, bool);
template void gemm_nt<float>(int, int, int, const float*, const float*, float*, bool);
template void gemm_nt<double>(int, int, int, const double*, const double*, double*, bool);
template void gemm_tn<float>(int, int, int, const float*, const float*, float*, bool);
template void gemm_tn<double>(int, int, int, const double*, const double*, double*, bool);
template void im2col<float>(const float*, int, int, int, int, int, int, int, float*);
template void im2col<double>(const double*, int, int, int, int, int, int, int, double*);
template void col2im_add<float>(const float*, int, int, int, int, int, int, int, float*);
template void col2im_add<double>(const double*, int, int, int, int, int, int, int, double*);

}  // namespace qpl::kernels
