// SPDX-License-Identifier: Apache-2.0
#include <stdexcept>

#include "init.hpp"
#include "model_core.hpp"
#include "rng.hpp"

namespace ald {

namespace detail {

template <typename S>
LstmIdx build_lstm(std::vector<TensorT<S>>& params, std::vector<std::string>& names,
                   const std::string& prefix, const LstmConfig& cfg, int64_t obs_dim,
                   int64_t actions, std::mt19937_64& rng) {
  const int64_t H = cfg.hidden, In = cfg.input_dim;
  auto add = [&](const std::string& n, Tensor t) {
    params.push_back(t.template cast<S>());
    names.push_back(prefix + n);
    return params.size() - 1;
  };
  LstmIdx ix;
  ix.e_w = add("enc.w", fan_in_uniform(obs_dim, Shape{obs_dim, In}, rng));
  ix.e_b = add("enc.b", Tensor::zeros(Shape{In}));
  ix.w_x = add("cell.w_x", fan_in_uniform(In, Shape{In, 4 * H}, rng));
  ix.w_h = add("cell.w_h", orthogonal_init(H, 4 * H, rng));
  Tensor bias = Tensor::zeros(Shape{4 * H});
  for (int64_t i = H; i < 2 * H; ++i) bias.set(i, 1.0f);  // forget gate opens at init
  ix.b = add("cell.b", bias);
  ix.p_w = add("pi.w", orthogonal_init(H, actions, rng, 0.01f));
  ix.p_b = add("pi.b", Tensor::zeros(Shape{actions}));
  ix.v_w = add("v.w", orthogonal_init(H, 1, rng));
  ix.v_b = add("v.b", Tensor::zeros(Shape{1}));
  return ix;
}

template <typename S>
void lstm_init_slots(const LstmConfig& cfg, std::vector<TensorT<S>>* slots) {
  slots->push_back(TensorT<S>::zeros(Shape{cfg.hidden}));
  slots->push_back(TensorT<S>::zeros(Shape{cfg.hidden}));
}

template <typename S>
void lstm_unroll_core(TapeT<S>& tape, const std::vector<VarT<S>>& L, const LstmIdx& ix,
                      const LstmConfig& cfg, int64_t actions, const std::vector<TensorT<S>>& obs,
                      const std::vector<uint8_t>& boundary, const ModelStateT<S>& start,
                      size_t slot_off, VarT<S>* logits, VarT<S>* values,
                      std::vector<TensorT<S>>* out_slots) {
  (void)actions;
  const int64_t H = cfg.hidden;
  const int64_t N = static_cast<int64_t>(obs.size());
  if (N < 1) throw std::invalid_argument("lstm unroll: empty observation window");
  if (boundary.size() != obs.size())
    throw std::invalid_argument("lstm unroll: boundary flags do not match window length");
  const int64_t D = L[ix.e_w].shape()[0];

  VarT<S> h = tape.constant(start.slots.at(slot_off).reshaped(Shape{1, H}));
  VarT<S> c = tape.constant(start.slots.at(slot_off + 1).reshaped(Shape{1, H}));
  VarT<S> ew = L[ix.e_w], eb = L[ix.e_b], wx = L[ix.w_x], wh = L[ix.w_h], bb = L[ix.b];
  VarT<S> pw = L[ix.p_w], pb = L[ix.p_b], vw = L[ix.v_w], vb = L[ix.v_b];

  std::vector<VarT<S>> lrows, vrows;
  lrows.reserve(obs.size());
  vrows.reserve(obs.size());
  for (int64_t t = 0; t < N; ++t) {
    if (boundary[static_cast<size_t>(t)]) {
      h = tape.constant(TensorT<S>::zeros(Shape{1, H}));
      c = tape.constant(TensorT<S>::zeros(Shape{1, H}));
    }
    VarT<S> x = tape.constant(obs[static_cast<size_t>(t)].reshaped(Shape{1, D}));
    VarT<S> e = relu(add(matmul(x, ew), eb));
    VarT<S> gates = add(add(matmul(e, wx), matmul(h, wh)), bb);
    VarT<S> ig = sigmoid(slice(gates, 1, 0, H));
    VarT<S> fg = sigmoid(slice(gates, 1, H, H));
    VarT<S> gg = tanh_(slice(gates, 1, 2 * H, H));
    VarT<S> og = sigmoid(slice(gates, 1, 3 * H, H));
    c = add(mul(fg, c), mul(ig, gg));
    h = mul(og, tanh_(c));
    lrows.push_back(add(matmul(h, pw), pb));
    vrows.push_back(add(matmul(h, vw), vb));
  }
  *logits = concat(lrows, 0);
  *values = reshape(concat(vrows, 0), Shape{N});
  out_slots->push_back(h.value().reshaped(Shape{H}));
  out_slots->push_back(c.value().reshaped(Shape{H}));
}

#define ALD_INST_LSTM_CORE(S)                                                                     \
  template LstmIdx build_lstm<S>(std::vector<TensorT<S>>&, std::vector<std::string>&,             \
                                 const std::string&, const LstmConfig&, int64_t, int64_t,         \
                                 std::mt19937_64&);                                               \
  template void lstm_init_slots<S>(const LstmConfig&, std::vector<TensorT<S>>*);                  \
  template void lstm_unroll_core<S>(TapeT<S>&, const std::vector<VarT<S>>&, const LstmIdx&,       \
                                    const LstmConfig&, int64_t, const std::vector<TensorT<S>>&,   \
                                    const std::vector<uint8_t>&, const ModelStateT<S>&, size_t,   \
                                    VarT<S>*, VarT<S>*, std::vector<TensorT<S>>*);

ALD_INST_LSTM_CORE(float)
ALD_INST_LSTM_CORE(double)
#undef ALD_INST_LSTM_CORE

}  // namespace detail

template <typename S>
LstmModelT<S>::LstmModelT(const ModelSpec& spec, uint64_t seed) : SequenceModelT<S>(spec) {
  if (this->spec_.obs_dim <= 0 || this->spec_.num_actions <= 0)
    throw std::invalid_argument("lstm model: obs_dim and num_actions must be positive");
  if (this->spec_.lstm.hidden <= 0) throw std::invalid_argument("lstm model: hidden dim must be positive");
  if (this->spec_.lstm.input_dim <= 0) this->spec_.lstm.input_dim = this->spec_.lstm.hidden;
  std::mt19937_64 rng = make_rng(seed, 17);
  idx_ = detail::build_lstm<S>(this->params_, this->names_, "lstm.", this->spec_.lstm,
                               this->spec_.obs_dim, this->spec_.num_actions, rng);
}

template <typename S>
ModelStateT<S> LstmModelT<S>::initial_state() const {
  ModelStateT<S> st;
  detail::lstm_init_slots<S>(this->spec_.lstm, &st.slots);
  return st;
}

template <typename S>
UnrollOutT<S> LstmModelT<S>::unroll(TapeT<S>& tape, const std::vector<TensorT<S>>& obs,
                                    const std::vector<uint8_t>& boundary,
                                    const ModelStateT<S>& start) {
  this->bind(tape);
  UnrollOutT<S> out;
  detail::lstm_unroll_core<S>(tape, this->leaves_, idx_, this->spec_.lstm, this->spec_.num_actions,
                              obs, boundary, start, 0, &out.logits, &out.values,
                              &out.final_state.slots);
  return out;
}

template class LstmModelT<float>;
template class LstmModelT<double>;

}  // namespace ald
