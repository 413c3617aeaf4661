// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tensor.hpp"

namespace ald {

template <typename S>
class TapeT;

// Handle to a node on a tape. Cheap to copy; valid until the tape is reset.
template <typename S>
struct VarT {
  TapeT<S>* tape = nullptr;
  int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const TensorT<S>& value() const;
  const Shape& shape() const;
};

// Reverse-mode tape. Ops append nodes in topological order; backward walks
// the records in reverse, accumulating gradients into every node reachable
// from the loss. Single-threaded by contract.
template <typename S>
class TapeT {
 public:
  explicit TapeT(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  // Differentiable input (parameters). Gradient is tracked when enabled.
  VarT<S> leaf(TensorT<S> value);
  // Non-differentiable input (data, targets).
  VarT<S> constant(TensorT<S> value);

  const TensorT<S>& value(const VarT<S>& v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  bool needs_grad(const VarT<S>& v) const { return nodes_[static_cast<size_t>(v.id)].needs_grad; }

  // Gradient accumulated by the last backward(); zeros if the node was not
  // reached.
  TensorT<S> grad(const VarT<S>& v) const;

  void backward(const VarT<S>& loss);

  // Drops all nodes; outstanding VarT handles become invalid. Bindings can
  // detect this through the epoch counter.
  void reset();

  uint64_t epoch() const { return epoch_; }
  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  int32_t push(TensorT<S> value, bool needs_grad, std::function<void(const TensorT<S>&)> back);
  void accumulate(int32_t id, const TensorT<S>& g);
  const TensorT<S>& node_value(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }

 private:
  struct Node {
    TensorT<S> value;
    std::function<void(const TensorT<S>&)> back;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<TensorT<S>> grads_;
  std::vector<char> has_grad_;
  bool grad_enabled_;
  uint64_t epoch_ = 0;
};

template <typename S>
const TensorT<S>& VarT<S>::value() const {
  return tape->value(*this);
}
template <typename S>
const Shape& VarT<S>::shape() const {
  return tape->value(*this).shape();
}

// ---- primitive ops ----------------------------------------------------
// Elementwise ops broadcast with numpy rules (lower-rank operand is padded
// with leading 1s; each dim must match or be 1).

template <typename S>
VarT<S> add(VarT<S> a, VarT<S> b);
template <typename S>
VarT<S> sub(VarT<S> a, VarT<S> b);
template <typename S>
VarT<S> mul(VarT<S> a, VarT<S> b);
template <typename S>
VarT<S> scale(VarT<S> a, S c);
template <typename S>
VarT<S> add_const(VarT<S> a, S c);
template <typename S>
VarT<S> neg(VarT<S> a) {
  return scale(a, S(-1));
}
template <typename S>
VarT<S> square(VarT<S> a) {
  return mul(a, a);
}

template <typename S>
VarT<S> matmul(VarT<S> a, VarT<S> b);  // (m,k) x (k,n)
template <typename S>
VarT<S> batched_matmul(VarT<S> a, VarT<S> b);  // (B,m,k) x (B,k,n)

template <typename S>
VarT<S> transpose(VarT<S> a, const std::vector<int>& perm);
template <typename S>
VarT<S> reshape(VarT<S> a, const Shape& shape);

template <typename S>
VarT<S> sigmoid(VarT<S> a);
template <typename S>
VarT<S> tanh_(VarT<S> a);
template <typename S>
VarT<S> relu(VarT<S> a);
template <typename S>
VarT<S> exp_(VarT<S> a);

// Over the last dimension.
template <typename S>
VarT<S> softmax(VarT<S> a);
template <typename S>
VarT<S> log_softmax(VarT<S> a);

// Normalizes over the last dimension; eps sits inside the square root so a
// constant vector maps to zeros before the affine part.
template <typename S>
VarT<S> layer_norm(VarT<S> x, VarT<S> gain, VarT<S> bias, S eps = S(1e-5));

template <typename S>
VarT<S> embedding(VarT<S> table, const std::vector<int64_t>& indices);

template <typename S>
VarT<S> concat(const std::vector<VarT<S>>& parts, int dim);
template <typename S>
VarT<S> slice(VarT<S> a, int dim, int64_t start, int64_t len);

template <typename S>
VarT<S> sum_all(VarT<S> a);
template <typename S>
VarT<S> mean_all(VarT<S> a);
template <typename S>
VarT<S> sum_axis(VarT<S> a, int axis);

// out[h,t,s] = a[h,t,idx[t*s_cols+s]]; gradient scatter-adds back.
template <typename S>
VarT<S> index_last(VarT<S> a, const std::vector<int64_t>& idx, int64_t s_cols);

template <typename S>
VarT<S> stop_gradient(VarT<S> a);

// softmax((q k^T)/sqrt(d) + mask) v with q,k,v rank-3 (H,T,d)/(H,Sd)/(H,S,d)
// and an additive mask of shape (T,S) broadcast over heads.
template <typename S>
VarT<S> scaled_dot_attention(VarT<S> q, VarT<S> k, VarT<S> v, VarT<S> mask);

// ---- categorical distribution helpers (from logits) -------------------

// mean over rows of D_KL(p || q), logits shape (rows, n) or (n).
template <typename S>
VarT<S> categorical_kl_mean(VarT<S> p_logits, VarT<S> q_logits);
// mean over rows of entropy H(p).
template <typename S>
VarT<S> categorical_entropy_mean(VarT<S> logits);
// log p(action) per row; actions.size() == rows. Result shape (rows).
template <typename S>
VarT<S> log_prob_selected(VarT<S> logits, const std::vector<int64_t>& actions);

template <typename S>
VarT<S> operator+(VarT<S> a, VarT<S> b) {
  return add(a, b);
}
template <typename S>
VarT<S> operator-(VarT<S> a, VarT<S> b) {
  return sub(a, b);
}
template <typename S>
VarT<S> operator*(VarT<S> a, VarT<S> b) {
  return mul(a, b);
}

using Tape = TapeT<float>;
using Var = VarT<float>;

extern template class TapeT<float>;
extern template class TapeT<double>;

}  // namespace ald
