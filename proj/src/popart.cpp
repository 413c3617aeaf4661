// SPDX-License-Identifier: Apache-2.0
#include "popart.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ald {

double PopArt::sigma() const {
  double var = nu_ - mu_ * mu_;
  double s = std::sqrt(std::max(var, 0.0));
  return std::clamp(s, static_cast<double>(cfg_.sigma_min), static_cast<double>(cfg_.sigma_max));
}

void PopArt::update_stats(const std::vector<float>& targets) {
  if (targets.empty()) return;
  double m = 0, m2 = 0;
  for (float t : targets) {
    m += t;
    m2 += static_cast<double>(t) * t;
  }
  m /= static_cast<double>(targets.size());
  m2 /= static_cast<double>(targets.size());
  double b = cfg_.decay;
  mu_ = (1.0 - b) * mu_ + b * m;
  nu_ = (1.0 - b) * nu_ + b * m2;
}

void PopArt::update(const std::vector<float>& targets, Tensor& head_w, Tensor& head_b) {
  if (head_b.numel() != 1) throw std::invalid_argument("popart: bias must be a single element");
  double mu_old = mu_, sg_old = sigma();
  update_stats(targets);
  double sg_new = sigma();
  float* wd = head_w.mutable_data();
  for (int64_t i = 0; i < head_w.numel(); ++i)
    wd[i] = static_cast<float>(wd[i] * sg_old / sg_new);
  float* bd = head_b.mutable_data();
  bd[0] = static_cast<float>((sg_old * bd[0] + mu_old - mu_) / sg_new);
}

void PopArt::set_stats(double mu, double nu) {
  mu_ = mu;
  nu_ = nu;
}

}  // namespace ald
