#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace qpl {

// Error taxonomy. The CLI maps these onto stable exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct UsageError : Error {
  using Error::Error;
};

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool shape_eq(const Shape& a, const Shape& b);

// Dense n-d array with an optional gradient buffer. Copies share storage
// (data and grad), so a tensor captured by a tape closure sees gradient
// updates made through any other copy. clone() makes an independent buffer.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape shape, T fill = T(0))
      : shape_(std::move(shape)),
        st_(std::make_shared<Storage>()) {
    st_->data.assign(shape_numel(shape_), fill);
  }

  static TensorT from_data(Shape shape, std::vector<T> data) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor data size " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    TensorT t;
    t.shape_ = std::move(shape);
    t.st_ = std::make_shared<Storage>();
    t.st_->data = std::move(data);
    return t;
  }

  bool defined() const { return static_cast<bool>(st_); }
  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return st_ ? st_->data.size() : 0; }

  T* data() { return st_->data.data(); }
  const T* data() const { return st_->data.data(); }
  std::vector<T>& vec() { return st_->data; }
  const std::vector<T>& vec() const { return st_->data; }

  bool requires_grad() const { return st_ && st_->requires_grad; }
  void set_requires_grad(bool v) {
    st_->requires_grad = v;
    if (v) ensure_grad();
  }

  bool has_grad() const { return st_ && !st_->grad.empty(); }
  void ensure_grad() {
    if (st_->grad.size() != st_->data.size()) st_->grad.assign(st_->data.size(), T(0));
  }
  void zero_grad() {
    if (has_grad()) std::fill(st_->grad.begin(), st_->grad.end(), T(0));
  }
  T* grad() {
    ensure_grad();
    return st_->grad.data();
  }
  const T* grad() const { return st_->grad.data(); }

  // Flat and NCHW accessors, mostly for tests and small glue code.
  T& operator[](std::size_t i) { return st_->data[i]; }
  const T& operator[](std::size_t i) const { return st_->data[i]; }
  T& at4(int n, int c, int h, int w) {
    return st_->data[((static_cast<std::size_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }
  const T& at4(int n, int c, int h, int w) const {
    return st_->data[((static_cast<std::size_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }

  bool same_storage(const TensorT& o) const { return st_ == o.st_; }

  TensorT clone() const {
    TensorT t;
    t.shape_ = shape_;
    t.st_ = std::make_shared<Storage>();
    t.st_->data = st_->data;
    return t;
  }

  // Metadata-only reshape; shares storage with this tensor.
  TensorT viewed(Shape shape) const {
    if (shape_numel(shape) != numel())
      throw ShapeError("view " + shape_str(shape) + " incompatible with " + shape_str(shape_));
    TensorT t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

 private:
  struct Storage {
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  Shape shape_;
  std::shared_ptr<Storage> st_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// Debug-build finiteness sweep; release builds compile it out.
template <typename T>
void debug_check_finite(const TensorT<T>& t, const char* where) {
#ifndef NDEBUG
  for (std::size_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t.data()[i]))
      throw DataError(std::string("non-finite value produced by ") + where);
#else
  (void)t;
  (void)where;
#endif
}

// xoshiro256++ seeded through splitmix64. Integer-only state transitions,
// so identical seeds give identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  int uniform_int(int lo, int hi);         // inclusive bounds, unbiased
  double normal();                         // standard normal, Box-Muller
  Rng split(std::uint64_t tag);            // independent child stream

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& x);

// Stable per-task seed derivation used everywhere randomness fans out.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

// Worker-count contract: fixes the OpenMP thread pool size.
void set_workers(int n);
int workers();

}  // namespace qpl
