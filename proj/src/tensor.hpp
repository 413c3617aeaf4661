// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace ald {

// Dense shapes up to rank 4.
struct Shape {
  std::array<int64_t, 4> dim{1, 1, 1, 1};
  int rank = 0;

  Shape() = default;
  Shape(std::initializer_list<int64_t> dims);
  static Shape scalar() { return Shape{}; }

  int64_t operator[](int i) const { return dim[static_cast<size_t>(i)]; }
  int64_t& operator[](int i) { return dim[static_cast<size_t>(i)]; }
  int64_t numel() const;
  int64_t last() const { return rank == 0 ? 1 : dim[static_cast<size_t>(rank - 1)]; }
  bool operator==(const Shape& o) const;
  bool operator!=(const Shape& o) const { return !(*this == o); }
  std::string str() const;
};

// Dense tensor with a copy-on-write buffer. Copies are O(1) until one side
// mutates. A single Tensor object must not be accessed from two threads at
// once; distinct copies sharing a buffer may live on different threads.
template <typename S>
class TensorT {
 public:
  TensorT() : TensorT(Shape::scalar()) {}
  explicit TensorT(const Shape& shape);
  TensorT(const Shape& shape, std::vector<S> values);

  static TensorT zeros(const Shape& shape) { return TensorT(shape); }
  static TensorT full(const Shape& shape, S v);
  static TensorT scalar(S v);
  static TensorT one_hot(int64_t index, int64_t depth);

  const Shape& shape() const { return shape_; }
  int64_t numel() const { return shape_.numel(); }
  int rank() const { return shape_.rank; }

  const S* data() const { return buf_->data(); }
  S* mutable_data();

  S at(int64_t i) const { return (*buf_)[static_cast<size_t>(i)]; }
  S operator()(int64_t i) const { return at(i); }
  S operator()(int64_t i, int64_t j) const { return at(i * shape_[1] + j); }
  S operator()(int64_t i, int64_t j, int64_t k) const {
    return at((i * shape_[1] + j) * shape_[2] + k);
  }
  S operator()(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return at(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l);
  }
  void set(int64_t i, S v) { mutable_data()[i] = v; }

  // O(1): shares the buffer under a new shape with identical numel.
  TensorT reshaped(const Shape& shape) const;

  bool all_finite() const;
  void fill(S v);
  void add_in_place(const TensorT& other);  // shapes must match

  template <typename T>
  TensorT<T> cast() const;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<S>> buf_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

extern template class TensorT<float>;
extern template class TensorT<double>;

template <typename S>
template <typename T>
TensorT<T> TensorT<S>::cast() const {
  std::vector<T> out(static_cast<size_t>(numel()));
  for (int64_t i = 0; i < numel(); ++i) out[static_cast<size_t>(i)] = static_cast<T>(at(i));
  return TensorT<T>(shape_, std::move(out));
}

}  // namespace ald
