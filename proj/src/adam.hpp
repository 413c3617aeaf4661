// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "tensor.hpp"

namespace ald {

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  // L2 norm ceiling applied to the whole gradient list; 0 disables clipping.
  float max_grad_norm = 0.0f;
};

// Adam with bias correction. Holds first/second moment estimates per tensor;
// `step` applies one update in place. The moment list is keyed by position,
// so the parameter list must keep a stable order across calls.
template <typename S>
class AdamT {
 public:
  explicit AdamT(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  void set_lr(float lr) { cfg_.lr = lr; }
  int64_t steps() const { return t_; }

  // Computes the update for `grads` and applies it to `params`.
  void step(std::vector<TensorT<S>>& params, const std::vector<TensorT<S>>& grads);

  // Same update, but written as deltas into `out` instead of touching
  // params (used when several workers share one parameter store).
  void step_delta(const std::vector<TensorT<S>>& params, const std::vector<TensorT<S>>& grads,
                  std::vector<TensorT<S>>& out);

  // Optimizer state for checkpointing: [m..., v...] plus the step counter.
  std::vector<TensorT<S>> state() const;
  void restore(const std::vector<TensorT<S>>& state, int64_t steps);

 private:
  void ensure_state(const std::vector<TensorT<S>>& params);
  void compute(const std::vector<TensorT<S>>& grads, std::vector<TensorT<S>>& deltas);

  AdamConfig cfg_;
  std::vector<TensorT<S>> m_, v_;
  int64_t t_ = 0;
};

using Adam = AdamT<float>;

extern template class AdamT<float>;
extern template class AdamT<double>;

// L2 norm over a list of tensors.
template <typename S>
double global_norm(const std::vector<TensorT<S>>& grads);

}  // namespace ald
