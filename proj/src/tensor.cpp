// SPDX-License-Identifier: Apache-2.0
#include "tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ald {

Shape::Shape(std::initializer_list<int64_t> dims) {
  if (dims.size() > 4) throw std::invalid_argument("Shape: rank > 4 not supported");
  rank = static_cast<int>(dims.size());
  int i = 0;
  for (int64_t d : dims) {
    if (d < 0) throw std::invalid_argument("Shape: negative dimension");
    dim[static_cast<size_t>(i++)] = d;
  }
}

int64_t Shape::numel() const {
  int64_t n = 1;
  for (int i = 0; i < rank; ++i) n *= dim[static_cast<size_t>(i)];
  return n;
}

bool Shape::operator==(const Shape& o) const {
  if (rank != o.rank) return false;
  for (int i = 0; i < rank; ++i)
    if (dim[static_cast<size_t>(i)] != o.dim[static_cast<size_t>(i)]) return false;
  return true;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < rank; ++i) os << (i ? "," : "") << dim[static_cast<size_t>(i)];
  os << ")";
  return os.str();
}

template <typename S>
TensorT<S>::TensorT(const Shape& shape)
    : shape_(shape), buf_(std::make_shared<std::vector<S>>(static_cast<size_t>(shape.numel()), S(0))) {}

template <typename S>
TensorT<S>::TensorT(const Shape& shape, std::vector<S> values) : shape_(shape), buf_() {
  if (static_cast<int64_t>(values.size()) != shape.numel())
    throw std::invalid_argument("Tensor: data length " + std::to_string(values.size()) +
                                " does not match shape " + shape.str());
  buf_ = std::make_shared<std::vector<S>>(std::move(values));
}

template <typename S>
TensorT<S> TensorT<S>::full(const Shape& shape, S v) {
  TensorT t(shape);
  t.fill(v);
  return t;
}

template <typename S>
TensorT<S> TensorT<S>::scalar(S v) {
  TensorT t{Shape::scalar()};
  t.mutable_data()[0] = v;
  return t;
}

template <typename S>
TensorT<S> TensorT<S>::one_hot(int64_t index, int64_t depth) {
  if (index < 0 || index >= depth)
    throw std::invalid_argument("one_hot: index " + std::to_string(index) + " out of range for depth " +
                                std::to_string(depth));
  TensorT t{Shape{depth}};
  t.mutable_data()[index] = S(1);
  return t;
}

template <typename S>
S* TensorT<S>::mutable_data() {
  if (buf_.use_count() > 1) buf_ = std::make_shared<std::vector<S>>(*buf_);
  return buf_->data();
}

template <typename S>
TensorT<S> TensorT<S>::reshaped(const Shape& shape) const {
  if (shape.numel() != numel())
    throw std::invalid_argument("reshape: numel mismatch " + shape_.str() + " -> " + shape.str());
  TensorT t = *this;
  t.shape_ = shape;
  return t;
}

template <typename S>
bool TensorT<S>::all_finite() const {
  for (int64_t i = 0; i < numel(); ++i)
    if (!std::isfinite(at(i))) return false;
  return true;
}

template <typename S>
void TensorT<S>::fill(S v) {
  S* p = mutable_data();
  for (int64_t i = 0; i < numel(); ++i) p[i] = v;
}

template <typename S>
void TensorT<S>::add_in_place(const TensorT& other) {
  if (shape_ != other.shape_)
    throw std::invalid_argument("add_in_place: shape mismatch " + shape_.str() + " vs " + other.shape_.str());
  S* p = mutable_data();
  const S* q = other.data();
  for (int64_t i = 0; i < numel(); ++i) p[i] += q[i];
}

template class TensorT<float>;
template class TensorT<double>;

}  // namespace ald
