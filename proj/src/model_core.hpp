// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared tower builders and unroll cores used by the plain models and the
// composite model (internal header).

#include <random>

#include "model.hpp"

namespace ald::detail {

template <typename S>
LstmIdx build_lstm(std::vector<TensorT<S>>& params, std::vector<std::string>& names,
                   const std::string& prefix, const LstmConfig& cfg, int64_t obs_dim,
                   int64_t actions, std::mt19937_64& rng);

template <typename S>
GtrxlIdx build_gtrxl(std::vector<TensorT<S>>& params, std::vector<std::string>& names,
                     const std::string& prefix, const GtrxlConfig& cfg, int64_t obs_dim,
                     int64_t actions, std::mt19937_64& rng);

// Both cores read recurrent slots from start.slots at slot_off and append the
// successor slots to *out_slots (LSTM: h, c; GTrXL: per-layer memory + valid
// count). Logits/values land in *logits / *values.
template <typename S>
void lstm_unroll_core(TapeT<S>& tape, const std::vector<VarT<S>>& L, const LstmIdx& ix,
                      const LstmConfig& cfg, int64_t actions, const std::vector<TensorT<S>>& obs,
                      const std::vector<uint8_t>& boundary, const ModelStateT<S>& start,
                      size_t slot_off, VarT<S>* logits, VarT<S>* values,
                      std::vector<TensorT<S>>* out_slots);

template <typename S>
void gtrxl_unroll_core(TapeT<S>& tape, const std::vector<VarT<S>>& L, const GtrxlIdx& ix,
                       const GtrxlConfig& cfg, int64_t actions, const std::vector<TensorT<S>>& obs,
                       const std::vector<uint8_t>& boundary, const ModelStateT<S>& start,
                       size_t slot_off, VarT<S>* logits, VarT<S>* values,
                       std::vector<TensorT<S>>* out_slots);

template <typename S>
void lstm_init_slots(const LstmConfig& cfg, std::vector<TensorT<S>>* slots);

template <typename S>
void gtrxl_init_slots(const GtrxlConfig& cfg, std::vector<TensorT<S>>* slots);

inline int lstm_slot_count() { return 2; }
inline int gtrxl_slot_count(const GtrxlConfig& cfg) { return cfg.layers + 2; }

}  // namespace ald::detail
