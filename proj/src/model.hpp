// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tape.hpp"
#include "tensor.hpp"

namespace ald {

struct LstmConfig {
  int64_t input_dim = 0;  // encoder output width; 0 = same as hidden
  int64_t hidden = 32;
};

struct GtrxlConfig {
  int layers = 2;
  int64_t embed = 64;
  int heads = 4;
  int64_t head_dim = 16;
  float gate_bias = 2.0f;
  int64_t memory = 32;
  bool relative_pos = true;  // false: learned absolute (episode-timestep) positions
  bool pos_shared = true;    // share positional projection/biases across layers
  int64_t pos_table = 512;   // timestep embedding rows in absolute mode
};

inline GtrxlConfig gtrxl_paper_config() {
  GtrxlConfig c;
  c.layers = 4;
  c.embed = 256;
  c.heads = 8;
  c.head_dim = 32;
  c.memory = 64;
  return c;
}

enum class ModelKind { Lstm, Gtrxl, Composite };

// Composite: policy tower = LSTM, value tower = GTrXL (asymmetric critic).
struct ModelSpec {
  ModelKind kind = ModelKind::Lstm;
  int64_t obs_dim = 0;
  int64_t num_actions = 0;
  LstmConfig lstm;
  GtrxlConfig gtrxl;
};

// Recurrent state as an opaque list of tensors (layout is model-specific).
template <typename S>
struct ModelStateT {
  std::vector<TensorT<S>> slots;
};

template <typename S>
struct StepOutT {
  TensorT<S> logits;  // (A)
  S value = 0;        // normalized value-head output
  ModelStateT<S> state;
};

template <typename S>
struct UnrollOutT {
  VarT<S> logits;  // (N, A)
  VarT<S> values;  // (N), normalized
  ModelStateT<S> final_state;
};

namespace detail {
struct LstmIdx {
  size_t e_w, e_b, w_x, w_h, b, p_w, p_b, v_w, v_b;
};
struct GtrxlLayerIdx {
  size_t ln1_g, ln1_b, w_q, w_k, w_v, w_o, w_r, u_b, v_b;
  size_t g1_w, g1_u, g1_b;
  size_t ln2_g, ln2_b, f1_w, f1_b, f2_w, f2_b;
  size_t g2_w, g2_u, g2_b;
};
struct GtrxlIdx {
  size_t e_w, e_b, pos = 0, p_w, p_b, v_w, v_b;
  std::vector<GtrxlLayerIdx> layers;
};
}  // namespace detail

// A policy+value sequence model over flat observations. Parameters are held
// as a stable ordered list; `unroll` binds them as tape leaves (rebinding is
// cached per tape epoch) so several unrolls on one tape accumulate into the
// same gradients. `step` is an inference-only single-token unroll on an
// internal no-grad scratch tape.
template <typename S>
class SequenceModelT {
 public:
  virtual ~SequenceModelT() = default;

  const ModelSpec& spec() const { return spec_; }
  int64_t obs_dim() const { return spec_.obs_dim; }
  int64_t num_actions() const { return spec_.num_actions; }

  std::vector<TensorT<S>>& params() { return params_; }
  const std::vector<TensorT<S>>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return names_; }
  void set_params(const std::vector<TensorT<S>>& p);
  int64_t param_count() const;  // total scalars

  // Number of leading params that belong to the policy tower; the rest (if
  // any) are value-tower-only. Equal to params().size() for plain models.
  virtual size_t policy_param_count() const { return params_.size(); }
  virtual size_t value_w_index() const = 0;
  virtual size_t value_b_index() const = 0;

  virtual ModelStateT<S> initial_state() const = 0;

  StepOutT<S> step(const TensorT<S>& obs, const ModelStateT<S>& state);

  // boundary[t] = 1 resets the recurrent state just before consuming obs[t].
  virtual UnrollOutT<S> unroll(TapeT<S>& tape, const std::vector<TensorT<S>>& obs,
                               const std::vector<uint8_t>& boundary,
                               const ModelStateT<S>& start) = 0;

  // Leaves created by the last unroll, in params() order.
  const std::vector<VarT<S>>& leaves() const { return leaves_; }
  std::vector<TensorT<S>> grads(const TapeT<S>& tape) const;

  void bind(TapeT<S>& tape);

 protected:
  explicit SequenceModelT(ModelSpec spec) : spec_(std::move(spec)), scratch_(false) {}

  ModelSpec spec_;
  std::vector<TensorT<S>> params_;
  std::vector<std::string> names_;
  std::vector<VarT<S>> leaves_;
  TapeT<S>* bound_tape_ = nullptr;
  uint64_t bound_epoch_ = 0;
  bool bound_valid_ = false;
  TapeT<S> scratch_;
};

template <typename S>
class LstmModelT : public SequenceModelT<S> {
 public:
  LstmModelT(const ModelSpec& spec, uint64_t seed);
  size_t value_w_index() const override { return idx_.v_w; }
  size_t value_b_index() const override { return idx_.v_b; }
  ModelStateT<S> initial_state() const override;
  UnrollOutT<S> unroll(TapeT<S>& tape, const std::vector<TensorT<S>>& obs,
                       const std::vector<uint8_t>& boundary, const ModelStateT<S>& start) override;

 private:
  detail::LstmIdx idx_;
};

template <typename S>
class GtrxlModelT : public SequenceModelT<S> {
 public:
  GtrxlModelT(const ModelSpec& spec, uint64_t seed);
  size_t value_w_index() const override { return idx_.v_w; }
  size_t value_b_index() const override { return idx_.v_b; }
  ModelStateT<S> initial_state() const override;
  UnrollOutT<S> unroll(TapeT<S>& tape, const std::vector<TensorT<S>>& obs,
                       const std::vector<uint8_t>& boundary, const ModelStateT<S>& start) override;

 private:
  detail::GtrxlIdx idx_;
};

// LSTM policy tower + GTrXL value tower over separate encoders; actors only
// need the policy prefix of the parameter list.
template <typename S>
class CompositeModelT : public SequenceModelT<S> {
 public:
  CompositeModelT(const ModelSpec& spec, uint64_t seed);
  size_t policy_param_count() const override { return policy_count_; }
  size_t value_w_index() const override { return vidx_.v_w; }
  size_t value_b_index() const override { return vidx_.v_b; }
  ModelStateT<S> initial_state() const override;
  UnrollOutT<S> unroll(TapeT<S>& tape, const std::vector<TensorT<S>>& obs,
                       const std::vector<uint8_t>& boundary, const ModelStateT<S>& start) override;

 private:
  detail::LstmIdx pidx_;
  detail::GtrxlIdx vidx_;
  size_t policy_count_ = 0;
};

template <typename S>
std::unique_ptr<SequenceModelT<S>> make_model(const ModelSpec& spec, uint64_t seed);

using SequenceModel = SequenceModelT<float>;
using ModelState = ModelStateT<float>;
using StepOut = StepOutT<float>;
using UnrollOut = UnrollOutT<float>;

extern template class SequenceModelT<float>;
extern template class SequenceModelT<double>;
extern template class LstmModelT<float>;
extern template class LstmModelT<double>;
extern template class GtrxlModelT<float>;
extern template class GtrxlModelT<double>;
extern template class CompositeModelT<float>;
extern template class CompositeModelT<double>;

}  // namespace ald
