#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sau {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major tensor of rank 1-5. Rank-4 tensors are read as N x C x H x W.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape dims, T fill = T(0)) : dims_(std::move(dims)) {
    validate_dims(dims_);
    data_.assign(shape_numel(dims_), fill);
  }

  Tensor(Shape dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    validate_dims(dims_);
    if (data_.size() != shape_numel(dims_)) {
      throw ShapeError("tensor payload has " + std::to_string(data_.size()) +
                       " elements, shape " + to_string(dims_) + " needs " +
                       std::to_string(shape_numel(dims_)));
    }
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

  const Shape& shape() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessors (N, C, H, W)
  int n() const { return dims_[0]; }
  int c() const { return dims_[1]; }
  int h() const { return dims_[2]; }
  int w() const { return dims_[3]; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w;
  }
  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  /// Same payload, new extents. Element count must match.
  Tensor reshaped(Shape dims) const {
    return Tensor(std::move(dims), data_);
  }

  bool all_finite() const {
    for (const T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Tensor& other) const {
    return dims_ == other.dims_ && data_ == other.data_;
  }

 private:
  static void validate_dims(const Shape& dims) {
    if (dims.empty() || dims.size() > 5) {
      throw ShapeError("tensor rank must be 1-5, got " + std::to_string(dims.size()));
    }
    for (const int d : dims) {
      if (d < 1) throw ShapeError("tensor extents must be >= 1, got " + to_string(dims));
    }
  }

  Shape dims_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& x) {
  std::vector<To> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<To>(x[i]);
  return Tensor<To>(x.shape(), std::move(out));
}

template <typename T>
void require_rank4(const Tensor<T>& x, const char* what) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(what) + ": expected a rank-4 N x C x H x W tensor, got " +
                     to_string(x.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename T>
void require_finite(const Tensor<T>& x, const char* what) {
  if (!x.all_finite()) throw NumericError(std::string(what) + ": non-finite input");
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace sau
