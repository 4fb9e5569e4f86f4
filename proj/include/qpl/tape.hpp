#pragma once

#include <functional>
#include <vector>

#include "qpl/tensor.hpp"

namespace qpl {

// Per-forward-pass gradient tape. Ops push backward closures in construction
// order; backward() runs them once in reverse and consumes the tape. No
// higher-order gradients.
template <typename T>
class TapeT {
 public:
  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  std::size_t size() const { return nodes_.size(); }

  void backward(TensorT<T>& loss) {
    if (loss.numel() != 1) throw UsageError("backward requires a scalar loss");
    if (consumed_) throw UsageError("tape already consumed by a backward pass");
    if (nodes_.empty()) throw UsageError("backward on an empty tape");
    loss.ensure_grad();
    loss.grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
    consumed_ = true;
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

}  // namespace qpl
