// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "init.hpp"
#include "model_core.hpp"
#include "rng.hpp"

namespace ald {

namespace detail {

template <typename S>
GtrxlIdx build_gtrxl(std::vector<TensorT<S>>& params, std::vector<std::string>& names,
                     const std::string& prefix, const GtrxlConfig& cfg, int64_t obs_dim,
                     int64_t actions, std::mt19937_64& rng) {
  const int64_t E = cfg.embed, P = static_cast<int64_t>(cfg.heads) * cfg.head_dim;
  auto add = [&](const std::string& n, Tensor t) {
    params.push_back(t.template cast<S>());
    names.push_back(prefix + n);
    return params.size() - 1;
  };
  GtrxlIdx ix;
  ix.e_w = add("enc.w", fan_in_uniform(obs_dim, Shape{obs_dim, E}, rng));
  ix.e_b = add("enc.b", Tensor::zeros(Shape{E}));
  if (!cfg.relative_pos)
    ix.pos = add("pos.table", normal_init(Shape{cfg.pos_table, E}, rng, 0.02f));
  for (int l = 0; l < cfg.layers; ++l) {
    std::string lp = "l" + std::to_string(l) + ".";
    GtrxlLayerIdx lx{};
    lx.ln1_g = add(lp + "attn.ln.g", Tensor::full(Shape{E}, 1.0f));
    lx.ln1_b = add(lp + "attn.ln.b", Tensor::zeros(Shape{E}));
    lx.w_q = add(lp + "attn.w_q", orthogonal_init(E, P, rng));
    lx.w_k = add(lp + "attn.w_k", orthogonal_init(E, P, rng));
    lx.w_v = add(lp + "attn.w_v", orthogonal_init(E, P, rng));
    lx.w_o = add(lp + "attn.w_o", orthogonal_init(P, E, rng));
    if (cfg.relative_pos) {
      if (cfg.pos_shared && l > 0) {
        lx.w_r = ix.layers[0].w_r;
        lx.u_b = ix.layers[0].u_b;
        lx.v_b = ix.layers[0].v_b;
      } else {
        lx.w_r = add(lp + "attn.w_r", orthogonal_init(E, P, rng));
        lx.u_b = add(lp + "attn.u", Tensor::zeros(Shape{cfg.heads, cfg.head_dim}));
        lx.v_b = add(lp + "attn.v", Tensor::zeros(Shape{cfg.heads, cfg.head_dim}));
      }
    }
    lx.g1_w = add(lp + "attn.gate.w", orthogonal_init(E, E, rng));
    lx.g1_u = add(lp + "attn.gate.u", orthogonal_init(E, E, rng));
    lx.g1_b = add(lp + "attn.gate.b", Tensor::full(Shape{E}, cfg.gate_bias));
    lx.ln2_g = add(lp + "ffn.ln.g", Tensor::full(Shape{E}, 1.0f));
    lx.ln2_b = add(lp + "ffn.ln.b", Tensor::zeros(Shape{E}));
    lx.f1_w = add(lp + "ffn.w1", orthogonal_init(E, 4 * E, rng));
    lx.f1_b = add(lp + "ffn.b1", Tensor::zeros(Shape{4 * E}));
    lx.f2_w = add(lp + "ffn.w2", orthogonal_init(4 * E, E, rng));
    lx.f2_b = add(lp + "ffn.b2", Tensor::zeros(Shape{E}));
    lx.g2_w = add(lp + "ffn.gate.w", orthogonal_init(E, E, rng));
    lx.g2_u = add(lp + "ffn.gate.u", orthogonal_init(E, E, rng));
    lx.g2_b = add(lp + "ffn.gate.b", Tensor::full(Shape{E}, cfg.gate_bias));
    ix.layers.push_back(lx);
  }
  ix.p_w = add("pi.w", orthogonal_init(E, actions, rng, 0.01f));
  ix.p_b = add("pi.b", Tensor::zeros(Shape{actions}));
  ix.v_w = add("v.w", orthogonal_init(E, 1, rng));
  ix.v_b = add("v.b", Tensor::zeros(Shape{1}));
  return ix;
}

template <typename S>
void gtrxl_init_slots(const GtrxlConfig& cfg, std::vector<TensorT<S>>* slots) {
  for (int l = 0; l < cfg.layers; ++l)
    slots->push_back(TensorT<S>::zeros(Shape{cfg.memory, cfg.embed}));
  slots->push_back(TensorT<S>::zeros(Shape{1}));  // valid memory rows
  slots->push_back(TensorT<S>::zeros(Shape{1}));  // episode timestep at window start
}

namespace {

// Sinusoidal encodings for relative distances 0..len-1, width E.
template <typename S>
TensorT<S> rel_encoding(int64_t len, int64_t E) {
  TensorT<S> r{Shape{len, E}};
  S* d = r.mutable_data();
  for (int64_t p = 0; p < len; ++p)
    for (int64_t i = 0; i < E; ++i) {
      double freq = std::pow(10000.0, -2.0 * static_cast<double>(i / 2) / static_cast<double>(E));
      double a = static_cast<double>(p) * freq;
      d[p * E + i] = static_cast<S>((i % 2 == 0) ? std::sin(a) : std::cos(a));
    }
  return r;
}

}  // namespace

template <typename S>
void gtrxl_unroll_core(TapeT<S>& tape, const std::vector<VarT<S>>& L, const GtrxlIdx& ix,
                       const GtrxlConfig& cfg, int64_t actions, const std::vector<TensorT<S>>& obs,
                       const std::vector<uint8_t>& boundary, const ModelStateT<S>& start,
                       size_t slot_off, VarT<S>* logits, VarT<S>* values,
                       std::vector<TensorT<S>>* out_slots) {
  (void)actions;
  const int64_t E = cfg.embed, M = cfg.memory, Hn = cfg.heads, Dh = cfg.head_dim;
  const int64_t P = Hn * Dh;
  const int64_t N = static_cast<int64_t>(obs.size());
  if (N < 1) throw std::invalid_argument("gtrxl unroll: empty observation window");
  if (boundary.size() != obs.size())
    throw std::invalid_argument("gtrxl unroll: boundary flags do not match window length");
  const int64_t S_len = M + N;
  const int64_t D = L[ix.e_w].shape()[0];

  const size_t valid_slot = slot_off + static_cast<size_t>(cfg.layers);
  int64_t valid = static_cast<int64_t>(start.slots.at(valid_slot).at(0));
  int64_t pos0 = static_cast<int64_t>(start.slots.at(valid_slot + 1).at(0));
  valid = std::clamp<int64_t>(valid, 0, M);
  if (boundary[0]) {
    valid = 0;
    pos0 = 0;
  }

  // Segment ids: tokens separated by an episode boundary must not see each
  // other; memory belongs to segment 0.
  std::vector<int> seg(static_cast<size_t>(N), 0);
  std::vector<int64_t> tok_pos(static_cast<size_t>(N), 0);
  int64_t last_b = boundary[0] ? 0 : -1;
  for (int64_t t = 0; t < N; ++t) {
    if (t > 0) {
      seg[static_cast<size_t>(t)] = seg[static_cast<size_t>(t - 1)] + (boundary[static_cast<size_t>(t)] ? 1 : 0);
      if (boundary[static_cast<size_t>(t)]) last_b = t;
    }
    tok_pos[static_cast<size_t>(t)] =
        (seg[static_cast<size_t>(t)] == 0) ? pos0 + t : t - last_b;
  }
  // Recompute last boundary over the whole window for the state update.
  int64_t final_last_b = -1;
  for (int64_t t = 0; t < N; ++t)
    if (boundary[static_cast<size_t>(t)]) final_last_b = t;

  TensorT<S> mask_t{Shape{N, S_len}};
  S* md = mask_t.mutable_data();
  for (int64_t t = 0; t < N; ++t)
    for (int64_t s = 0; s < S_len; ++s) {
      bool ok;
      if (s < M) {
        ok = seg[static_cast<size_t>(t)] == 0 && s >= M - valid;
      } else {
        int64_t j = s - M;
        ok = seg[static_cast<size_t>(j)] == seg[static_cast<size_t>(t)] && j <= t;
      }
      md[t * S_len + s] = ok ? S(0) : S(-1e9);
    }
  VarT<S> mask = tape.constant(std::move(mask_t));

  VarT<S> rproj_shared;  // lazily built when pos params are shared
  bool rproj_ready = false;
  std::vector<int64_t> gather_idx;
  VarT<S> rconst;
  if (cfg.relative_pos) {
    rconst = tape.constant(rel_encoding<S>(S_len, E));
    gather_idx.resize(static_cast<size_t>(N * S_len));
    for (int64_t t = 0; t < N; ++t)
      for (int64_t s = 0; s < S_len; ++s)
        gather_idx[static_cast<size_t>(t * S_len + s)] =
            std::clamp<int64_t>(M + t - s, 0, S_len - 1);
  }

  // Absolute mode: episode-timestep index per context row (memory + tokens).
  std::vector<int64_t> ctx_pos, q_pos;
  if (!cfg.relative_pos) {
    ctx_pos.resize(static_cast<size_t>(S_len));
    for (int64_t s = 0; s < M; ++s)
      ctx_pos[static_cast<size_t>(s)] = std::clamp<int64_t>(pos0 - (M - s), 0, cfg.pos_table - 1);
    q_pos.resize(static_cast<size_t>(N));
    for (int64_t t = 0; t < N; ++t) {
      int64_t p = std::clamp<int64_t>(tok_pos[static_cast<size_t>(t)], 0, cfg.pos_table - 1);
      ctx_pos[static_cast<size_t>(M + t)] = p;
      q_pos[static_cast<size_t>(t)] = p;
    }
  }

  TensorT<S> obs_mat{Shape{N, D}};
  for (int64_t t = 0; t < N; ++t) {
    const TensorT<S>& o = obs[static_cast<size_t>(t)];
    if (o.numel() != D)
      throw std::invalid_argument("gtrxl unroll: observation size " + std::to_string(o.numel()) +
                                  " does not match encoder width " + std::to_string(D));
    S* row = obs_mat.mutable_data() + t * D;
    for (int64_t i = 0; i < D; ++i) row[i] = o.at(i);
  }
  VarT<S> stream = relu(add(matmul(tape.constant(std::move(obs_mat)), L[ix.e_w]), L[ix.e_b]));

  const S inv_sqrt = S(1) / static_cast<S>(std::sqrt(static_cast<double>(Dh)));
  std::vector<TensorT<S>> entries;
  entries.reserve(static_cast<size_t>(cfg.layers));

  for (int l = 0; l < cfg.layers; ++l) {
    const GtrxlLayerIdx& lx = ix.layers[static_cast<size_t>(l)];
    entries.push_back(stream.value());
    VarT<S> mem = tape.constant(start.slots.at(slot_off + static_cast<size_t>(l)));
    VarT<S> ctx = concat<S>({mem, stream}, 0);
    VarT<S> normed = layer_norm(ctx, L[lx.ln1_g], L[lx.ln1_b]);
    VarT<S> q_in = slice(normed, 0, M, N);
    VarT<S> k_in = normed;
    if (!cfg.relative_pos) {
      q_in = add(q_in, embedding(L[ix.pos], q_pos));
      k_in = add(k_in, embedding(L[ix.pos], ctx_pos));
    }
    VarT<S> q = transpose(reshape(matmul(q_in, L[lx.w_q]), Shape{N, Hn, Dh}), {1, 0, 2});
    VarT<S> k = transpose(reshape(matmul(k_in, L[lx.w_k]), Shape{S_len, Hn, Dh}), {1, 0, 2});
    VarT<S> v = transpose(reshape(matmul(normed, L[lx.w_v]), Shape{S_len, Hn, Dh}), {1, 0, 2});
    VarT<S> scores;
    if (cfg.relative_pos) {
      VarT<S> qu = add(q, reshape(L[lx.u_b], Shape{Hn, 1, Dh}));
      VarT<S> qv = add(q, reshape(L[lx.v_b], Shape{Hn, 1, Dh}));
      VarT<S> content = batched_matmul(qu, transpose(k, {0, 2, 1}));
      VarT<S> rproj;
      if (cfg.pos_shared) {
        if (!rproj_ready) {
          rproj_shared =
              transpose(reshape(matmul(rconst, L[lx.w_r]), Shape{S_len, Hn, Dh}), {1, 0, 2});
          rproj_ready = true;
        }
        rproj = rproj_shared;
      } else {
        rproj = transpose(reshape(matmul(rconst, L[lx.w_r]), Shape{S_len, Hn, Dh}), {1, 0, 2});
      }
      VarT<S> pos_full = batched_matmul(qv, transpose(rproj, {0, 2, 1}));
      VarT<S> pos = index_last(pos_full, gather_idx, S_len);
      scores = scale(add(content, pos), inv_sqrt);
    } else {
      scores = scale(batched_matmul(q, transpose(k, {0, 2, 1})), inv_sqrt);
    }
    VarT<S> att = softmax(add(scores, mask));
    VarT<S> merged = reshape(transpose(batched_matmul(att, v), {1, 0, 2}), Shape{N, P});
    VarT<S> y = relu(matmul(merged, L[lx.w_o]));
    stream = add(stream, mul(sigmoid(sub(matmul(y, L[lx.g1_w]), L[lx.g1_b])),
                             tanh_(matmul(y, L[lx.g1_u]))));
    VarT<S> n2 = layer_norm(stream, L[lx.ln2_g], L[lx.ln2_b]);
    VarT<S> f =
        add(matmul(relu(add(matmul(n2, L[lx.f1_w]), L[lx.f1_b])), L[lx.f2_w]), L[lx.f2_b]);
    VarT<S> y2 = relu(f);
    stream = add(stream, mul(sigmoid(sub(matmul(y2, L[lx.g2_w]), L[lx.g2_b])),
                             tanh_(matmul(y2, L[lx.g2_u]))));
  }

  *logits = add(matmul(stream, L[ix.p_w]), L[ix.p_b]);
  *values = reshape(add(matmul(stream, L[ix.v_w]), L[ix.v_b]), Shape{N});

  int64_t new_valid =
      final_last_b >= 0 ? std::min<int64_t>(M, N - final_last_b) : std::min<int64_t>(M, valid + N);
  int64_t new_pos0 = final_last_b >= 0 ? N - final_last_b : pos0 + N;
  for (int l = 0; l < cfg.layers; ++l) {
    const TensorT<S>& old_mem = start.slots.at(slot_off + static_cast<size_t>(l));
    const TensorT<S>& entry = entries[static_cast<size_t>(l)];
    TensorT<S> nm{Shape{M, E}};
    S* nd = nm.mutable_data();
    for (int64_t r = 0; r < M; ++r) {
      int64_t src = N + r;  // index into [old_mem(M); entry(N)] shifted left by N
      const S* row = (src < M) ? old_mem.data() + src * E : entry.data() + (src - M) * E;
      for (int64_t i = 0; i < E; ++i) nd[r * E + i] = row[i];
    }
    out_slots->push_back(std::move(nm));
  }
  out_slots->push_back(TensorT<S>::full(Shape{1}, static_cast<S>(new_valid)));
  out_slots->push_back(TensorT<S>::full(Shape{1}, static_cast<S>(new_pos0)));
}

#define ALD_INST_GTRXL_CORE(S)                                                                    \
  template GtrxlIdx build_gtrxl<S>(std::vector<TensorT<S>>&, std::vector<std::string>&,           \
                                   const std::string&, const GtrxlConfig&, int64_t, int64_t,      \
                                   std::mt19937_64&);                                             \
  template void gtrxl_init_slots<S>(const GtrxlConfig&, std::vector<TensorT<S>>*);                \
  template void gtrxl_unroll_core<S>(TapeT<S>&, const std::vector<VarT<S>>&, const GtrxlIdx&,     \
                                     const GtrxlConfig&, int64_t, const std::vector<TensorT<S>>&, \
                                     const std::vector<uint8_t>&, const ModelStateT<S>&, size_t,  \
                                     VarT<S>*, VarT<S>*, std::vector<TensorT<S>>*);

ALD_INST_GTRXL_CORE(float)
ALD_INST_GTRXL_CORE(double)
#undef ALD_INST_GTRXL_CORE

}  // namespace detail

template <typename S>
GtrxlModelT<S>::GtrxlModelT(const ModelSpec& spec, uint64_t seed) : SequenceModelT<S>(spec) {
  const GtrxlConfig& g = this->spec_.gtrxl;
  if (this->spec_.obs_dim <= 0 || this->spec_.num_actions <= 0)
    throw std::invalid_argument("gtrxl model: obs_dim and num_actions must be positive");
  if (g.layers < 1 || g.embed < 1 || g.heads < 1 || g.head_dim < 1 || g.memory < 0)
    throw std::invalid_argument("gtrxl model: bad architecture config");
  std::mt19937_64 rng = make_rng(seed, 23);
  idx_ = detail::build_gtrxl<S>(this->params_, this->names_, "gtrxl.", g, this->spec_.obs_dim,
                                this->spec_.num_actions, rng);
}

template <typename S>
ModelStateT<S> GtrxlModelT<S>::initial_state() const {
  ModelStateT<S> st;
  detail::gtrxl_init_slots<S>(this->spec_.gtrxl, &st.slots);
  return st;
}

template <typename S>
UnrollOutT<S> GtrxlModelT<S>::unroll(TapeT<S>& tape, const std::vector<TensorT<S>>& obs,
                                     const std::vector<uint8_t>& boundary,
                                     const ModelStateT<S>& start) {
  this->bind(tape);
  UnrollOutT<S> out;
  detail::gtrxl_unroll_core<S>(tape, this->leaves_, idx_, this->spec_.gtrxl,
                               this->spec_.num_actions, obs, boundary, start, 0, &out.logits,
                               &out.values, &out.final_state.slots);
  return out;
}

template class GtrxlModelT<float>;
template class GtrxlModelT<double>;

}  // namespace ald
