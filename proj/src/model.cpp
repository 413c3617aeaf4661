// SPDX-License-Identifier: Apache-2.0
#include "model.hpp"

#include <stdexcept>

#include "model_core.hpp"
#include "rng.hpp"

namespace ald {

template <typename S>
void SequenceModelT<S>::set_params(const std::vector<TensorT<S>>& p) {
  if (p.size() != params_.size())
    throw std::invalid_argument("model: set_params got " + std::to_string(p.size()) +
                                " tensors, expected " + std::to_string(params_.size()));
  for (size_t i = 0; i < p.size(); ++i)
    if (p[i].shape() != params_[i].shape())
      throw std::invalid_argument("model: param " + names_[i] + " shape " + p[i].shape().str() +
                                  " does not match " + params_[i].shape().str());
  params_ = p;
  bound_valid_ = false;
}

template <typename S>
int64_t SequenceModelT<S>::param_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

template <typename S>
void SequenceModelT<S>::bind(TapeT<S>& tape) {
  if (bound_valid_ && bound_tape_ == &tape && bound_epoch_ == tape.epoch() &&
      leaves_.size() == params_.size())
    return;
  leaves_.clear();
  leaves_.reserve(params_.size());
  for (auto& p : params_) leaves_.push_back(tape.leaf(p));
  bound_tape_ = &tape;
  bound_epoch_ = tape.epoch();
  bound_valid_ = true;
}

template <typename S>
std::vector<TensorT<S>> SequenceModelT<S>::grads(const TapeT<S>& tape) const {
  std::vector<TensorT<S>> out;
  out.reserve(leaves_.size());
  for (const auto& v : leaves_) out.push_back(tape.grad(v));
  return out;
}

template <typename S>
StepOutT<S> SequenceModelT<S>::step(const TensorT<S>& obs, const ModelStateT<S>& state) {
  scratch_.reset();
  UnrollOutT<S> u = unroll(scratch_, {obs}, {0}, state);
  StepOutT<S> out;
  out.logits = u.logits.value().reshaped(Shape{num_actions()});
  out.value = u.values.value().at(0);
  out.state = std::move(u.final_state);
  return out;
}

template <typename S>
CompositeModelT<S>::CompositeModelT(const ModelSpec& spec, uint64_t seed)
    : SequenceModelT<S>(spec) {
  if (this->spec_.obs_dim <= 0 || this->spec_.num_actions <= 0)
    throw std::invalid_argument("composite model: obs_dim and num_actions must be positive");
  if (this->spec_.lstm.input_dim <= 0) this->spec_.lstm.input_dim = this->spec_.lstm.hidden;
  std::mt19937_64 prng = make_rng(seed, 17);
  std::mt19937_64 vrng = make_rng(seed, 23);
  pidx_ = detail::build_lstm<S>(this->params_, this->names_, "pi.", this->spec_.lstm,
                                this->spec_.obs_dim, this->spec_.num_actions, prng);
  policy_count_ = this->params_.size();
  vidx_ = detail::build_gtrxl<S>(this->params_, this->names_, "v.", this->spec_.gtrxl,
                                 this->spec_.obs_dim, this->spec_.num_actions, vrng);
}

template <typename S>
ModelStateT<S> CompositeModelT<S>::initial_state() const {
  ModelStateT<S> st;
  detail::lstm_init_slots<S>(this->spec_.lstm, &st.slots);
  detail::gtrxl_init_slots<S>(this->spec_.gtrxl, &st.slots);
  return st;
}

template <typename S>
UnrollOutT<S> CompositeModelT<S>::unroll(TapeT<S>& tape, const std::vector<TensorT<S>>& obs,
                                         const std::vector<uint8_t>& boundary,
                                         const ModelStateT<S>& start) {
  this->bind(tape);
  UnrollOutT<S> out;
  VarT<S> pol_values, val_logits;
  detail::lstm_unroll_core<S>(tape, this->leaves_, pidx_, this->spec_.lstm,
                              this->spec_.num_actions, obs, boundary, start, 0, &out.logits,
                              &pol_values, &out.final_state.slots);
  detail::gtrxl_unroll_core<S>(tape, this->leaves_, vidx_, this->spec_.gtrxl,
                               this->spec_.num_actions, obs, boundary, start,
                               static_cast<size_t>(detail::lstm_slot_count()), &val_logits,
                               &out.values, &out.final_state.slots);
  return out;
}

template <typename S>
std::unique_ptr<SequenceModelT<S>> make_model(const ModelSpec& spec, uint64_t seed) {
  switch (spec.kind) {
    case ModelKind::Lstm:
      return std::make_unique<LstmModelT<S>>(spec, seed);
    case ModelKind::Gtrxl:
      return std::make_unique<GtrxlModelT<S>>(spec, seed);
    case ModelKind::Composite:
      return std::make_unique<CompositeModelT<S>>(spec, seed);
  }
  throw std::invalid_argument("make_model: unknown model kind");
}

template class SequenceModelT<float>;
template class SequenceModelT<double>;
template class CompositeModelT<float>;
template class CompositeModelT<double>;
template std::unique_ptr<SequenceModelT<float>> make_model<float>(const ModelSpec&, uint64_t);
template std::unique_ptr<SequenceModelT<double>> make_model<double>(const ModelSpec&, uint64_t);

}  // namespace ald
