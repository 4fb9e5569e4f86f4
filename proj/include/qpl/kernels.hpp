#pragma once

#include <cstddef>

namespace qpl::kernels {

// Dense kernels behind the autodiff ops. The parallel versions split work
// over independent output rows only, so results are bit-identical for any
// thread count. qpl::kernels::ref holds the serial reference
// implementations used by the tests and the kernel benchmark.

// C[M,N] = A[M,K] * B[K,N] + (accumulate ? C : 0)
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate = false);

// C[M,N] = A[M,K] * B[N,K]^T + (accumulate ? C : 0)
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate = false);

// C[M,N] = A[K,M]^T * B[K,N] + (accumulate ? C : 0)
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate = false);

// Single-image NCHW -> column matrix [C*kh*kw, oh*ow]
template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, T* col);

// Scatter-add inverse of im2col into a zeroed [C,H,W] buffer.
template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad, T* x);

int conv_out_dim(int in, int k, int stride, int pad);

namespace ref {

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate = false);

// Direct 7-loop convolution, batch NCHW. Oracle for the im2col+GEMM path.
template <typename T>
void conv2d_direct(const T* x, int N, int C, int H, int W, const T* w, int O, int kh, int kw,
                   const T* b, int stride, int pad, T* y);

}  // namespace ref

}  // namespace qpl::kernels
