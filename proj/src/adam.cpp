// SPDX-License-Identifier: Apache-2.0
#include "adam.hpp"

#include <cmath>
#include <stdexcept>

namespace ald {

template <typename S>
double global_norm(const std::vector<TensorT<S>>& grads) {
  double sq = 0;
  for (const auto& g : grads)
    for (int64_t i = 0; i < g.numel(); ++i) sq += static_cast<double>(g.at(i)) * g.at(i);
  return std::sqrt(sq);
}

template <typename S>
void AdamT<S>::ensure_state(const std::vector<TensorT<S>>& params) {
  if (!m_.empty()) {
    if (m_.size() != params.size())
      throw std::invalid_argument("adam: parameter list size changed between steps");
    return;
  }
  for (const auto& p : params) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

template <typename S>
void AdamT<S>::compute(const std::vector<TensorT<S>>& grads, std::vector<TensorT<S>>& deltas) {
  ++t_;
  double scale = 1.0;
  if (cfg_.max_grad_norm > 0) {
    double norm = global_norm(grads);
    if (norm > cfg_.max_grad_norm) scale = cfg_.max_grad_norm / norm;
  }
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  deltas.clear();
  for (size_t k = 0; k < grads.size(); ++k) {
    const TensorT<S>& g = grads[k];
    if (g.shape() != m_[k].shape())
      throw std::invalid_argument("adam: gradient shape " + g.shape().str() + " does not match state " +
                                  m_[k].shape().str());
    TensorT<S> d(g.shape());
    S* dd = d.mutable_data();
    S* md = m_[k].mutable_data();
    S* vd = v_[k].mutable_data();
    const S* gd = g.data();
    for (int64_t i = 0; i < g.numel(); ++i) {
      double gi = static_cast<double>(gd[i]) * scale;
      double m = b1 * md[i] + (1.0 - b1) * gi;
      double v = b2 * vd[i] + (1.0 - b2) * gi * gi;
      md[i] = static_cast<S>(m);
      vd[i] = static_cast<S>(v);
      double mhat = m / bc1;
      double vhat = v / bc2;
      dd[i] = static_cast<S>(-static_cast<double>(cfg_.lr) * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
    deltas.push_back(std::move(d));
  }
}

template <typename S>
void AdamT<S>::step(std::vector<TensorT<S>>& params, const std::vector<TensorT<S>>& grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam: params/grads size mismatch");
  ensure_state(params);
  std::vector<TensorT<S>> deltas;
  compute(grads, deltas);
  for (size_t k = 0; k < params.size(); ++k) params[k].add_in_place(deltas[k]);
}

template <typename S>
void AdamT<S>::step_delta(const std::vector<TensorT<S>>& params, const std::vector<TensorT<S>>& grads,
                          std::vector<TensorT<S>>& out) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam: params/grads size mismatch");
  ensure_state(params);
  compute(grads, out);
}

template <typename S>
std::vector<TensorT<S>> AdamT<S>::state() const {
  std::vector<TensorT<S>> out = m_;
  out.insert(out.end(), v_.begin(), v_.end());
  return out;
}

template <typename S>
void AdamT<S>::restore(const std::vector<TensorT<S>>& state, int64_t steps) {
  if (state.size() % 2 != 0) throw std::invalid_argument("adam: state list must hold m and v pairs");
  size_t half = state.size() / 2;
  m_.assign(state.begin(), state.begin() + static_cast<ptrdiff_t>(half));
  v_.assign(state.begin() + static_cast<ptrdiff_t>(half), state.end());
  t_ = steps;
}

template class AdamT<float>;
template class AdamT<double>;
template double global_norm<float>(const std::vector<TensorT<float>>&);
template double global_norm<double>(const std::vector<TensorT<double>>&);

}  // namespace ald
