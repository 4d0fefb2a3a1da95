// SPDX-License-Identifier: Apache-2.0
#include "dp3df/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace dp3df {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  require(data_.size() == shape_size(shape_), "tensor: " + std::to_string(data_.size()) +
                                                  " values do not fill shape " + shape_string(shape_));
}

template <class T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  require(axis < shape_.size(), "tensor: axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  return shape_[axis];
}

template <class T>
std::size_t BasicTensor<T>::offset(std::initializer_list<std::size_t> idx) const {
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) off = off * shape_[axis++] + i;
  return off;
}

template <class T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <class T>
void BasicTensor<T>::reshape(Shape shape) {
  require(shape_size(shape) == data_.size(),
          "tensor: cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  shape_ = std::move(shape);
}

template <class T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  BasicTensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

template <class T>
bool BasicTensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <class T>
void BasicTensor<T>::check_finite(const std::string& what) const {
  if (!all_finite()) throw NumericError(what + ": non-finite value");
}

template <class T>
BasicTensor<T>& BasicTensor<T>::operator+=(const BasicTensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

template <class T>
BasicTensor<T>& BasicTensor<T>::operator*=(T scale) {
  for (T& v : data_) v *= scale;
  return *this;
}

template <class T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template double max_abs_diff(const BasicTensor<float>&, const BasicTensor<float>&);
template double max_abs_diff(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace dp3df
