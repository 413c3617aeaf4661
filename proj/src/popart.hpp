// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "tensor.hpp"

namespace ald {

struct PopArtConfig {
  float decay = 3e-4f;  // EMA step toward the batch statistics
  float sigma_min = 1e-4f;
  float sigma_max = 1e6f;
};

// Adaptive target normalization for the value head. Tracks mean and second
// moment of denormalized targets with an EMA; when the statistics move, the
// head weights are rescaled so denormalized predictions are preserved.
class PopArt {
 public:
  explicit PopArt(PopArtConfig cfg = {}) : cfg_(cfg) {}

  double mean() const { return mu_; }
  double sigma() const;

  double normalize(double x) const { return (x - mu_) / sigma(); }
  double denormalize(double y) const { return sigma() * y + mu_; }

  // Folds a batch of denormalized targets into the statistics and rescales
  // the linear value head (w: any shape, b: scalar or length-1) in place.
  void update(const std::vector<float>& targets, Tensor& head_w, Tensor& head_b);

  // Stats-only update (used when the head lives elsewhere).
  void update_stats(const std::vector<float>& targets);

  void set_stats(double mu, double nu);
  double nu() const { return nu_; }

 private:
  PopArtConfig cfg_;
  double mu_ = 0.0;
  double nu_ = 1.0;  // second moment
};

}  // namespace ald
