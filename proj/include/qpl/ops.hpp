#pragma once

#include <array>
#include <vector>

#include "qpl/tape.hpp"
#include "qpl/tensor.hpp"

namespace qpl::ops {

// Reverse-mode ops. Pass tape=nullptr for a pure forward evaluation.
// All outputs are freshly allocated; inputs are never written.

template <typename T>
TensorT<T> add(TapeT<T>* tape, const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> mul(TapeT<T>* tape, const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> scale(TapeT<T>* tape, const TensorT<T>& x, T c);

template <typename T>
TensorT<T> relu(TapeT<T>* tape, const TensorT<T>& x);

template <typename T>
TensorT<T> sum(TapeT<T>* tape, const TensorT<T>& x);

// x NCHW, w OIHW, optional bias O.
template <typename T>
TensorT<T> conv2d(TapeT<T>* tape, const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b,
                  int stride, int pad);

// Training mode normalizes by batch statistics and EMA-updates the running
// buffers in place; eval mode reads the running buffers.
template <typename T>
TensorT<T> batchnorm2d(TapeT<T>* tape, const TensorT<T>& x, const TensorT<T>& gamma,
                       const TensorT<T>& beta, TensorT<T>& running_mean, TensorT<T>& running_var,
                       bool training, T momentum, T eps);

template <typename T>
TensorT<T> maxpool2d(TapeT<T>* tape, const TensorT<T>& x, int k, int stride);

// NCHW -> [N, C]
template <typename T>
TensorT<T> avgpool_global(TapeT<T>* tape, const TensorT<T>& x);

template <typename T>
TensorT<T> flatten(TapeT<T>* tape, const TensorT<T>& x);

// x [N,F], w [O,F], optional bias O -> [N,O]
template <typename T>
TensorT<T> dense(TapeT<T>* tape, const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b);

// Fixed per-channel input normalization, (x - mean) / std on NCHW.
template <typename T>
TensorT<T> channel_norm(TapeT<T>* tape, const TensorT<T>& x, const std::array<T, 3>& mean,
                        const std::array<T, 3>& std);

// Mean cross-entropy over the batch via log-sum-exp. Scalar output.
template <typename T>
TensorT<T> softmax_cross_entropy(TapeT<T>* tape, const TensorT<T>& logits,
                                 const std::vector<int>& labels);

// Eval helpers (no tape participation).
template <typename T>
std::vector<int> argmax_rows(const TensorT<T>& logits);

template <typename T>
TensorT<T> softmax(const TensorT<T>& logits);

}  // namespace qpl::ops
