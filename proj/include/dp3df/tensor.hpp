// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "dp3df/error.hpp"

namespace dp3df {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Cache-line aligned buffers, so vectorized kernels see the same alignment
/// (and therefore the same rounding) on every run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t n) noexcept { ::operator delete(p, n * sizeof(T), kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major array. The axis meaning is fixed by each caller
/// (NCHW for the backbone, HWC / THWC for frames and filter fields).
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  AlignedVector<T>& storage() { return data_; }
  const AlignedVector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  template <class... I>
  T& operator()(I... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <class... I>
  const T& operator()(I... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  void fill(T value);
  /// Same data, new shape; element count must match.
  void reshape(Shape shape);
  BasicTensor reshaped(Shape shape) const;

  bool all_finite() const;
  /// Throws NumericError naming `what` if any element is NaN or Inf.
  void check_finite(const std::string& what) const;

  template <class U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    std::copy(data_.begin(), data_.end(), out.data());
    return out;
  }

  BasicTensor& operator+=(const BasicTensor& other);
  BasicTensor& operator*=(T scale);

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  AlignedVector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Value with a same-shaped gradient, the carrier for hand-chained backward passes.
template <class T>
struct GradPair {
  GradPair(BasicTensor<T> v, BasicTensor<T> g) : value(std::move(v)), grad(std::move(g)) {
    require(value.shape() == grad.shape(), "GradPair: value shape " + shape_string(value.shape()) +
                                               " != grad shape " + shape_string(grad.shape()));
  }
  BasicTensor<T> value;
  BasicTensor<T> grad;
};

template <class T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const std::string& what) {
  require(a.shape() == b.shape(),
          what + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace dp3df
