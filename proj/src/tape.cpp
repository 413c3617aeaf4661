// SPDX-License-Identifier: Apache-2.0
#include "tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ald {

namespace {

struct Dims4 {
  int64_t d[4] = {1, 1, 1, 1};
};

Dims4 pad4(const Shape& s) {
  Dims4 p;
  for (int i = 0; i < s.rank; ++i) p.d[4 - s.rank + i] = s[i];
  return p;
}

// Contiguous strides over padded dims; zero stride where the dim broadcasts.
void bcast_strides(const Dims4& in, const Dims4& out, int64_t stride[4], const char* op,
                   const Shape& sa, const Shape& sb) {
  int64_t acc = 1;
  for (int i = 3; i >= 0; --i) {
    if (in.d[i] != out.d[i] && in.d[i] != 1)
      throw std::invalid_argument(std::string(op) + ": shapes not broadcastable " + sa.str() + " vs " +
                                  sb.str());
    stride[i] = (in.d[i] == 1) ? 0 : acc;
    acc *= in.d[i];
  }
}

template <typename S, typename F>
TensorT<S> bcast_apply(const TensorT<S>& a, const TensorT<S>& b, F f, const char* op) {
  Dims4 pa = pad4(a.shape()), pb = pad4(b.shape()), po;
  for (int i = 0; i < 4; ++i) {
    if (pa.d[i] != pb.d[i] && pa.d[i] != 1 && pb.d[i] != 1)
      throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                                  b.shape().str());
    po.d[i] = std::max(pa.d[i], pb.d[i]);
  }
  int rank = std::max(a.rank(), b.rank());
  Shape os;
  os.rank = rank;
  for (int i = 0; i < rank; ++i) os[i] = po.d[4 - rank + i];

  int64_t sa[4], sb[4];
  bcast_strides(pa, po, sa, op, a.shape(), b.shape());
  bcast_strides(pb, po, sb, op, a.shape(), b.shape());

  TensorT<S> out(os);
  S* od = out.mutable_data();
  const S* ad = a.data();
  const S* bd = b.data();
  int64_t n = 0;
  for (int64_t i0 = 0; i0 < po.d[0]; ++i0)
    for (int64_t i1 = 0; i1 < po.d[1]; ++i1)
      for (int64_t i2 = 0; i2 < po.d[2]; ++i2)
        for (int64_t i3 = 0; i3 < po.d[3]; ++i3)
          od[n++] = f(ad[i0 * sa[0] + i1 * sa[1] + i2 * sa[2] + i3 * sa[3]],
                      bd[i0 * sb[0] + i1 * sb[1] + i2 * sb[2] + i3 * sb[3]]);
  return out;
}

// Sum g down to `target` by collapsing broadcast axes.
template <typename S>
TensorT<S> reduce_to_shape(const TensorT<S>& g, const Shape& target) {
  if (g.shape() == target) return g;
  Dims4 pg = pad4(g.shape()), pt = pad4(target);
  int64_t st[4];
  int64_t acc = 1;
  for (int i = 3; i >= 0; --i) {
    st[i] = (pt.d[i] == 1) ? 0 : acc;
    acc *= pt.d[i];
  }
  TensorT<S> out(target);
  S* od = out.mutable_data();
  const S* gd = g.data();
  int64_t n = 0;
  for (int64_t i0 = 0; i0 < pg.d[0]; ++i0)
    for (int64_t i1 = 0; i1 < pg.d[1]; ++i1)
      for (int64_t i2 = 0; i2 < pg.d[2]; ++i2)
        for (int64_t i3 = 0; i3 < pg.d[3]; ++i3)
          od[i0 * st[0] + i1 * st[1] + i2 * st[2] + i3 * st[3]] += gd[n++];
  return out;
}

// c(m,n) += a(m,k) b(k,n)
template <typename S>
void gemm_nn(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      const S av = a[i * k + p];
      const S* br = b + p * n;
      S* cr = c + i * n;
      for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
}

// c(m,k) += a(m,n) b(k,n)^T
template <typename S>
void gemm_nt(const S* a, const S* b, S* c, int64_t m, int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      const S* ar = a + i * n;
      const S* br = b + p * n;
      S dot = 0;
      for (int64_t j = 0; j < n; ++j) dot += ar[j] * br[j];
      c[i * k + p] += dot;
    }
}

// c(k,n) += a(m,k)^T g(m,n)
template <typename S>
void gemm_tn(const S* a, const S* g, S* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      const S av = a[i * k + p];
      const S* gr = g + i * n;
      S* cr = c + p * n;
      for (int64_t j = 0; j < n; ++j) cr[j] += av * gr[j];
    }
}

template <typename S>
void check_same_tape(VarT<S> a, VarT<S> b, const char* op) {
  if (a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": operands from different tapes");
}

}  // namespace

// ---- TapeT ------------------------------------------------------------

template <typename S>
VarT<S> TapeT<S>::leaf(TensorT<S> value) {
  int32_t id = push(std::move(value), grad_enabled_, nullptr);
  return {this, id};
}

template <typename S>
VarT<S> TapeT<S>::constant(TensorT<S> value) {
  int32_t id = push(std::move(value), false, nullptr);
  return {this, id};
}

template <typename S>
int32_t TapeT<S>::push(TensorT<S> value, bool needs_grad, std::function<void(const TensorT<S>&)> back) {
  nodes_.push_back(Node{std::move(value), std::move(back), needs_grad && grad_enabled_});
  return static_cast<int32_t>(nodes_.size() - 1);
}

template <typename S>
void TapeT<S>::accumulate(int32_t id, const TensorT<S>& g) {
  size_t i = static_cast<size_t>(id);
  if (!nodes_[i].needs_grad) return;
  if (!has_grad_[i]) {
    grads_[i] = g;
    has_grad_[i] = 1;
  } else {
    grads_[i].add_in_place(g);
  }
}

template <typename S>
TensorT<S> TapeT<S>::grad(const VarT<S>& v) const {
  size_t i = static_cast<size_t>(v.id);
  if (i < has_grad_.size() && has_grad_[i]) return grads_[i];
  return TensorT<S>::zeros(nodes_[i].value.shape());
}

template <typename S>
void TapeT<S>::backward(const VarT<S>& loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss is not on this tape");
  if (loss.value().rank() != 0)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + loss.value().shape().str());
  grads_.assign(nodes_.size(), TensorT<S>());
  has_grad_.assign(nodes_.size(), 0);
  if (!nodes_[static_cast<size_t>(loss.id)].needs_grad) return;
  grads_[static_cast<size_t>(loss.id)] = TensorT<S>::scalar(S(1));
  has_grad_[static_cast<size_t>(loss.id)] = 1;
  for (int32_t i = loss.id; i >= 0; --i) {
    size_t u = static_cast<size_t>(i);
    if (has_grad_[u] && nodes_[u].back) nodes_[u].back(grads_[u]);
  }
}

template <typename S>
void TapeT<S>::reset() {
  nodes_.clear();
  grads_.clear();
  has_grad_.clear();
  ++epoch_;
}

// ---- elementwise ------------------------------------------------------

template <typename S>
VarT<S> add(VarT<S> a, VarT<S> b) {
  check_same_tape(a, b, "add");
  TapeT<S>* tp = a.tape;
  TensorT<S> out = bcast_apply(a.value(), b.value(), [](S x, S y) { return x + y; }, "add");
  bool ng = tp->grad_enabled() && (tp->needs_grad(a) || tp->needs_grad(b));
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    Shape as = a.shape(), bs = b.shape();
    int32_t ia = a.id, ib = b.id;
    back = [tp, ia, ib, as, bs](const TensorT<S>& g) {
      tp->accumulate(ia, reduce_to_shape(g, as));
      tp->accumulate(ib, reduce_to_shape(g, bs));
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

template <typename S>
VarT<S> sub(VarT<S> a, VarT<S> b) {
  check_same_tape(a, b, "sub");
  TapeT<S>* tp = a.tape;
  TensorT<S> out = bcast_apply(a.value(), b.value(), [](S x, S y) { return x - y; }, "sub");
  bool ng = tp->grad_enabled() && (tp->needs_grad(a) || tp->needs_grad(b));
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    Shape as = a.shape(), bs = b.shape();
    int32_t ia = a.id, ib = b.id;
    back = [tp, ia, ib, as, bs](const TensorT<S>& g) {
      tp->accumulate(ia, reduce_to_shape(g, as));
      TensorT<S> gn = g;
      S* p = gn.mutable_data();
      for (int64_t i = 0; i < gn.numel(); ++i) p[i] = -p[i];
      tp->accumulate(ib, reduce_to_shape(gn, bs));
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

template <typename S>
VarT<S> mul(VarT<S> a, VarT<S> b) {
  check_same_tape(a, b, "mul");
  TapeT<S>* tp = a.tape;
  TensorT<S> out = bcast_apply(a.value(), b.value(), [](S x, S y) { return x * y; }, "mul");
  bool ng = tp->grad_enabled() && (tp->needs_grad(a) || tp->needs_grad(b));
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    TensorT<S> av = a.value(), bv = b.value();
    int32_t ia = a.id, ib = b.id;
    back = [tp, ia, ib, av, bv](const TensorT<S>& g) {
      tp->accumulate(ia, reduce_to_shape(bcast_apply(g, bv, [](S x, S y) { return x * y; }, "mul"),
                                         av.shape()));
      tp->accumulate(ib, reduce_to_shape(bcast_apply(g, av, [](S x, S y) { return x * y; }, "mul"),
                                         bv.shape()));
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

template <typename S>
VarT<S> scale(VarT<S> a, S c) {
  TapeT<S>* tp = a.tape;
  TensorT<S> out = a.value();
  S* p = out.mutable_data();
  for (int64_t i = 0; i < out.numel(); ++i) p[i] *= c;
  bool ng = tp->grad_enabled() && tp->needs_grad(a);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    int32_t ia = a.id;
    back = [tp, ia, c](const TensorT<S>& g) {
      TensorT<S> gs = g;
      S* q = gs.mutable_data();
      for (int64_t i = 0; i < gs.numel(); ++i) q[i] *= c;
      tp->accumulate(ia, gs);
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

template <typename S>
VarT<S> add_const(VarT<S> a, S c) {
  TapeT<S>* tp = a.tape;
  TensorT<S> out = a.value();
  S* p = out.mutable_data();
  for (int64_t i = 0; i < out.numel(); ++i) p[i] += c;
  bool ng = tp->grad_enabled() && tp->needs_grad(a);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    int32_t ia = a.id;
    back = [tp, ia](const TensorT<S>& g) { tp->accumulate(ia, g); };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

// ---- matmul -----------------------------------------------------------

template <typename S>
VarT<S> matmul(VarT<S> a, VarT<S> b) {
  check_same_tape(a, b, "matmul");
  TapeT<S>* tp = a.tape;
  const TensorT<S>& av = a.value();
  const TensorT<S>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0])
    throw std::invalid_argument("matmul: incompatible shapes " + av.shape().str() + " x " +
                                bv.shape().str());
  int64_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  TensorT<S> out{Shape{m, n}};
  gemm_nn(av.data(), bv.data(), out.mutable_data(), m, k, n);
  bool ng = tp->grad_enabled() && (tp->needs_grad(a) || tp->needs_grad(b));
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    TensorT<S> ac = av, bc = bv;
    int32_t ia = a.id, ib = b.id;
    back = [tp, ia, ib, ac, bc, m, k, n](const TensorT<S>& g) {
      TensorT<S> ga{Shape{m, k}};
      gemm_nt(g.data(), bc.data(), ga.mutable_data(), m, n, k);
      tp->accumulate(ia, ga);
      TensorT<S> gb{Shape{k, n}};
      gemm_tn(ac.data(), g.data(), gb.mutable_data(), m, k, n);
      tp->accumulate(ib, gb);
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

template <typename S>
VarT<S> batched_matmul(VarT<S> a, VarT<S> b) {
  check_same_tape(a, b, "batched_matmul");
  TapeT<S>* tp = a.tape;
  const TensorT<S>& av = a.value();
  const TensorT<S>& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.shape()[0] != bv.shape()[0] ||
      av.shape()[2] != bv.shape()[1])
    throw std::invalid_argument("batched_matmul: incompatible shapes " + av.shape().str() + " x " +
                                bv.shape().str());
  int64_t bsz = av.shape()[0], m = av.shape()[1], k = av.shape()[2], n = bv.shape()[2];
  TensorT<S> out{Shape{bsz, m, n}};
  for (int64_t q = 0; q < bsz; ++q)
    gemm_nn(av.data() + q * m * k, bv.data() + q * k * n, out.mutable_data() + q * m * n, m, k, n);
  bool ng = tp->grad_enabled() && (tp->needs_grad(a) || tp->needs_grad(b));
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    TensorT<S> ac = av, bc = bv;
    int32_t ia = a.id, ib = b.id;
    back = [tp, ia, ib, ac, bc, bsz, m, k, n](const TensorT<S>& g) {
      TensorT<S> ga{Shape{bsz, m, k}}, gb{Shape{bsz, k, n}};
      for (int64_t q = 0; q < bsz; ++q) {
        gemm_nt(g.data() + q * m * n, bc.data() + q * k * n, ga.mutable_data() + q * m * k, m, n, k);
        gemm_tn(ac.data() + q * m * k, g.data() + q * m * n, gb.mutable_data() + q * k * n, m, k, n);
      }
      tp->accumulate(ia, ga);
      tp->accumulate(ib, gb);
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

// ---- layout -----------------------------------------------------------

namespace {
template <typename S>
TensorT<S> permute_tensor(const TensorT<S>& in, const std::vector<int>& perm) {
  int r = in.rank();
  Shape os;
  os.rank = r;
  for (int i = 0; i < r; ++i) os[i] = in.shape()[perm[static_cast<size_t>(i)]];
  // in strides
  int64_t ist[4] = {0, 0, 0, 0};
  int64_t acc = 1;
  for (int i = r - 1; i >= 0; --i) {
    ist[i] = acc;
    acc *= in.shape()[i];
  }
  Dims4 po = pad4(os);
  // stride of the input coordinate that each output axis walks
  int64_t st[4] = {0, 0, 0, 0};
  for (int i = 0; i < r; ++i) st[4 - r + i] = ist[perm[static_cast<size_t>(i)]];
  TensorT<S> out(os);
  S* od = out.mutable_data();
  const S* id = in.data();
  int64_t n = 0;
  for (int64_t i0 = 0; i0 < po.d[0]; ++i0)
    for (int64_t i1 = 0; i1 < po.d[1]; ++i1)
      for (int64_t i2 = 0; i2 < po.d[2]; ++i2)
        for (int64_t i3 = 0; i3 < po.d[3]; ++i3)
          od[n++] = id[i0 * st[0] + i1 * st[1] + i2 * st[2] + i3 * st[3]];
  return out;
}
}  // namespace

template <typename S>
VarT<S> transpose(VarT<S> a, const std::vector<int>& perm) {
  TapeT<S>* tp = a.tape;
  const TensorT<S>& av = a.value();
  if (static_cast<int>(perm.size()) != av.rank())
    throw std::invalid_argument("transpose: perm size does not match rank of " + av.shape().str());
  TensorT<S> out = permute_tensor(av, perm);
  bool ng = tp->grad_enabled() && tp->needs_grad(a);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
    int32_t ia = a.id;
    back = [tp, ia, inv](const TensorT<S>& g) { tp->accumulate(ia, permute_tensor(g, inv)); };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

template <typename S>
VarT<S> reshape(VarT<S> a, const Shape& shape) {
  TapeT<S>* tp = a.tape;
  TensorT<S> out = a.value().reshaped(shape);
  bool ng = tp->grad_enabled() && tp->needs_grad(a);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    Shape orig = a.shape();
    int32_t ia = a.id;
    back = [tp, ia, orig](const TensorT<S>& g) { tp->accumulate(ia, g.reshaped(orig)); };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

// ---- unary ------------------------------------------------------------

namespace {
template <typename S, typename FwdF, typename GradF>
VarT<S> unary_op(VarT<S> a, FwdF fwd, GradF grad_from_saved, bool save_output) {
  TapeT<S>* tp = a.tape;
  const TensorT<S>& av = a.value();
  TensorT<S> out(av.shape());
  S* od = out.mutable_data();
  const S* id = av.data();
  for (int64_t i = 0; i < av.numel(); ++i) od[i] = fwd(id[i]);
  bool ng = tp->grad_enabled() && tp->needs_grad(a);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    TensorT<S> saved = save_output ? out : av;
    int32_t ia = a.id;
    back = [tp, ia, saved, grad_from_saved](const TensorT<S>& g) {
      TensorT<S> gi(g.shape());
      S* p = gi.mutable_data();
      const S* gd = g.data();
      const S* sd = saved.data();
      for (int64_t i = 0; i < gi.numel(); ++i) p[i] = gd[i] * grad_from_saved(sd[i]);
      tp->accumulate(ia, gi);
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}
}  // namespace

template <typename S>
VarT<S> sigmoid(VarT<S> a) {
  return unary_op(
      a,
      [](S x) {
        if (x >= 0) return S(1) / (S(1) + std::exp(-x));
        S e = std::exp(x);
        return e / (S(1) + e);
      },
      [](S y) { return y * (S(1) - y); }, true);
}

template <typename S>
VarT<S> tanh_(VarT<S> a) {
  return unary_op(a, [](S x) { return std::tanh(x); }, [](S y) { return S(1) - y * y; }, true);
}

template <typename S>
VarT<S> relu(VarT<S> a) {
  return unary_op(a, [](S x) { return x > 0 ? x : S(0); }, [](S x) { return x > 0 ? S(1) : S(0); },
                  false);
}

template <typename S>
VarT<S> exp_(VarT<S> a) {
  return unary_op(a, [](S x) { return std::exp(x); }, [](S y) { return y; }, true);
}

// ---- softmax family ---------------------------------------------------

template <typename S>
VarT<S> softmax(VarT<S> a) {
  TapeT<S>* tp = a.tape;
  const TensorT<S>& av = a.value();
  int64_t n = av.shape().last();
  int64_t rows = av.numel() / n;
  TensorT<S> out(av.shape());
  S* od = out.mutable_data();
  const S* id = av.data();
  for (int64_t r = 0; r < rows; ++r) {
    const S* x = id + r * n;
    S* y = od + r * n;
    S m = x[0];
    for (int64_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    double sum = 0;
    for (int64_t i = 0; i < n; ++i) {
      y[i] = std::exp(x[i] - m);
      sum += y[i];
    }
    for (int64_t i = 0; i < n; ++i) y[i] = static_cast<S>(y[i] / sum);
  }
  bool ng = tp->grad_enabled() && tp->needs_grad(a);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    TensorT<S> yv = out;
    int32_t ia = a.id;
    back = [tp, ia, yv, rows, n](const TensorT<S>& g) {
      TensorT<S> gi(yv.shape());
      S* p = gi.mutable_data();
      const S* gd = g.data();
      const S* yd = yv.data();
      for (int64_t r = 0; r < rows; ++r) {
        double dot = 0;
        for (int64_t i = 0; i < n; ++i) dot += static_cast<double>(gd[r * n + i]) * yd[r * n + i];
        for (int64_t i = 0; i < n; ++i)
          p[r * n + i] = static_cast<S>(yd[r * n + i] * (gd[r * n + i] - dot));
      }
      tp->accumulate(ia, gi);
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

template <typename S>
VarT<S> log_softmax(VarT<S> a) {
  TapeT<S>* tp = a.tape;
  const TensorT<S>& av = a.value();
  int64_t n = av.shape().last();
  int64_t rows = av.numel() / n;
  TensorT<S> out(av.shape());
  S* od = out.mutable_data();
  const S* id = av.data();
  for (int64_t r = 0; r < rows; ++r) {
    const S* x = id + r * n;
    S* y = od + r * n;
    S m = x[0];
    for (int64_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    double sum = 0;
    for (int64_t i = 0; i < n; ++i) sum += std::exp(static_cast<double>(x[i] - m));
    S lse = static_cast<S>(std::log(sum)) + m;
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] - lse;
  }
  bool ng = tp->grad_enabled() && tp->needs_grad(a);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    TensorT<S> yv = out;
    int32_t ia = a.id;
    back = [tp, ia, yv, rows, n](const TensorT<S>& g) {
      TensorT<S> gi(yv.shape());
      S* p = gi.mutable_data();
      const S* gd = g.data();
      const S* yd = yv.data();
      for (int64_t r = 0; r < rows; ++r) {
        double gsum = 0;
        for (int64_t i = 0; i < n; ++i) gsum += gd[r * n + i];
        for (int64_t i = 0; i < n; ++i)
          p[r * n + i] = static_cast<S>(gd[r * n + i] - std::exp(static_cast<double>(yd[r * n + i])) * gsum);
      }
      tp->accumulate(ia, gi);
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

// ---- layer norm -------------------------------------------------------

template <typename S>
VarT<S> layer_norm(VarT<S> x, VarT<S> gain, VarT<S> bias, S eps) {
  check_same_tape(x, gain, "layer_norm");
  check_same_tape(x, bias, "layer_norm");
  TapeT<S>* tp = x.tape;
  const TensorT<S>& xv = x.value();
  int64_t n = xv.shape().last();
  if (gain.value().numel() != n || bias.value().numel() != n)
    throw std::invalid_argument("layer_norm: gain/bias length must be " + std::to_string(n) +
                                ", got " + gain.value().shape().str() + " / " + bias.value().shape().str());
  int64_t rows = xv.numel() / n;
  TensorT<S> out(xv.shape());
  TensorT<S> xhat(xv.shape());
  TensorT<S> inv_std{Shape{rows}};
  const S* xd = xv.data();
  const S* gd = gain.value().data();
  const S* bd = bias.value().data();
  S* od = out.mutable_data();
  S* hd = xhat.mutable_data();
  S* sd = inv_std.mutable_data();
  for (int64_t r = 0; r < rows; ++r) {
    const S* xr = xd + r * n;
    double mu = 0;
    for (int64_t i = 0; i < n; ++i) mu += xr[i];
    mu /= static_cast<double>(n);
    double var = 0;
    for (int64_t i = 0; i < n; ++i) {
      double d = xr[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    sd[r] = static_cast<S>(is);
    for (int64_t i = 0; i < n; ++i) {
      hd[r * n + i] = static_cast<S>((xr[i] - mu) * is);
      od[r * n + i] = hd[r * n + i] * gd[i] + bd[i];
    }
  }
  bool ng = tp->grad_enabled() && (tp->needs_grad(x) || tp->needs_grad(gain) || tp->needs_grad(bias));
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    TensorT<S> gv = gain.value();
    int32_t ix = x.id, ig = gain.id, ib = bias.id;
    back = [tp, ix, ig, ib, xhat, inv_std, gv, rows, n](const TensorT<S>& g) {
      TensorT<S> gx(xhat.shape());
      TensorT<S> ggain{gv.shape()};
      TensorT<S> gbias{gv.shape()};
      S* gxd = gx.mutable_data();
      S* ggd = ggain.mutable_data();
      S* gbd = gbias.mutable_data();
      const S* gd2 = g.data();
      const S* hd2 = xhat.data();
      const S* sd2 = inv_std.data();
      const S* gvd = gv.data();
      for (int64_t r = 0; r < rows; ++r) {
        double m1 = 0, m2 = 0;
        for (int64_t i = 0; i < n; ++i) {
          double gy = static_cast<double>(gd2[r * n + i]) * gvd[i];
          m1 += gy;
          m2 += gy * hd2[r * n + i];
        }
        m1 /= static_cast<double>(n);
        m2 /= static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
          double gy = static_cast<double>(gd2[r * n + i]) * gvd[i];
          gxd[r * n + i] = static_cast<S>((gy - m1 - hd2[r * n + i] * m2) * sd2[r]);
          ggd[i] += static_cast<S>(gd2[r * n + i] * hd2[r * n + i]);
          gbd[i] += gd2[r * n + i];
        }
      }
      tp->accumulate(ix, gx);
      tp->accumulate(ig, ggain);
      tp->accumulate(ib, gbias);
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

// ---- gather / scatter -------------------------------------------------

template <typename S>
VarT<S> embedding(VarT<S> table, const std::vector<int64_t>& indices) {
  TapeT<S>* tp = table.tape;
  const TensorT<S>& tv = table.value();
  if (tv.rank() != 2) throw std::invalid_argument("embedding: table must be rank 2, got " + tv.shape().str());
  int64_t v = tv.shape()[0], d = tv.shape()[1];
  int64_t rows = static_cast<int64_t>(indices.size());
  TensorT<S> out{Shape{rows, d}};
  S* od = out.mutable_data();
  for (int64_t r = 0; r < rows; ++r) {
    int64_t ix = indices[static_cast<size_t>(r)];
    if (ix < 0 || ix >= v)
      throw std::invalid_argument("embedding: index " + std::to_string(ix) + " out of range for table " +
                                  tv.shape().str());
    const S* src = tv.data() + ix * d;
    for (int64_t j = 0; j < d; ++j) od[r * d + j] = src[j];
  }
  bool ng = tp->grad_enabled() && tp->needs_grad(table);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    int32_t it = table.id;
    Shape ts = tv.shape();
    back = [tp, it, ts, indices, d](const TensorT<S>& g) {
      TensorT<S> gt(ts);
      S* p = gt.mutable_data();
      const S* gd = g.data();
      for (size_t r = 0; r < indices.size(); ++r) {
        S* dst = p + indices[r] * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += gd[static_cast<int64_t>(r) * d + j];
      }
      tp->accumulate(it, gt);
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

template <typename S>
VarT<S> index_last(VarT<S> a, const std::vector<int64_t>& idx, int64_t s_cols) {
  TapeT<S>* tp = a.tape;
  const TensorT<S>& av = a.value();
  if (av.rank() != 3) throw std::invalid_argument("index_last: input must be rank 3, got " + av.shape().str());
  int64_t h = av.shape()[0], t = av.shape()[1], d = av.shape()[2];
  if (static_cast<int64_t>(idx.size()) != t * s_cols)
    throw std::invalid_argument("index_last: index table size mismatch");
  TensorT<S> out{Shape{h, t, s_cols}};
  S* od = out.mutable_data();
  const S* id = av.data();
  for (int64_t q = 0; q < h; ++q)
    for (int64_t r = 0; r < t; ++r)
      for (int64_t s = 0; s < s_cols; ++s) {
        int64_t j = idx[static_cast<size_t>(r * s_cols + s)];
        if (j < 0 || j >= d) throw std::invalid_argument("index_last: index out of range");
        od[(q * t + r) * s_cols + s] = id[(q * t + r) * d + j];
      }
  bool ng = tp->grad_enabled() && tp->needs_grad(a);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    int32_t ia = a.id;
    Shape as = av.shape();
    back = [tp, ia, as, idx, s_cols, h, t, d](const TensorT<S>& g) {
      TensorT<S> gi(as);
      S* p = gi.mutable_data();
      const S* gd = g.data();
      for (int64_t q = 0; q < h; ++q)
        for (int64_t r = 0; r < t; ++r)
          for (int64_t s = 0; s < s_cols; ++s)
            p[(q * t + r) * d + idx[static_cast<size_t>(r * s_cols + s)]] +=
                gd[(q * t + r) * s_cols + s];
      tp->accumulate(ia, gi);
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

// ---- concat / slice ---------------------------------------------------

template <typename S>
VarT<S> concat(const std::vector<VarT<S>>& parts, int dim) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  TapeT<S>* tp = parts[0].tape;
  int rank = parts[0].value().rank();
  if (dim < 0 || dim >= rank) throw std::invalid_argument("concat: bad dim");
  Shape os = parts[0].value().shape();
  int64_t total = 0;
  for (const auto& p : parts) {
    check_same_tape(parts[0], p, "concat");
    const Shape& s = p.value().shape();
    if (s.rank != rank) throw std::invalid_argument("concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != dim && s[i] != os[i])
        throw std::invalid_argument("concat: shape mismatch " + os.str() + " vs " + s.str());
    total += s[dim];
  }
  os[dim] = total;
  // outer = product of dims before `dim`, inner = product after
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < dim; ++i) outer *= os[i];
  for (int i = dim + 1; i < rank; ++i) inner *= os[i];
  TensorT<S> out(os);
  S* od = out.mutable_data();
  int64_t off = 0;
  for (const auto& p : parts) {
    int64_t len = p.value().shape()[dim];
    const S* pd = p.value().data();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t l = 0; l < len; ++l)
        for (int64_t in = 0; in < inner; ++in)
          od[(o * total + off + l) * inner + in] = pd[(o * len + l) * inner + in];
    off += len;
  }
  bool any = false;
  for (const auto& p : parts) any = any || tp->needs_grad(p);
  bool ng = tp->grad_enabled() && any;
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    std::vector<int32_t> ids;
    std::vector<int64_t> lens;
    for (const auto& p : parts) {
      ids.push_back(p.id);
      lens.push_back(p.value().shape()[dim]);
    }
    std::vector<Shape> shapes;
    for (const auto& p : parts) shapes.push_back(p.value().shape());
    back = [tp, ids, lens, shapes, outer, inner, total](const TensorT<S>& g) {
      const S* gd = g.data();
      int64_t off2 = 0;
      for (size_t q = 0; q < ids.size(); ++q) {
        TensorT<S> gp(shapes[q]);
        S* pd = gp.mutable_data();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t l = 0; l < lens[q]; ++l)
            for (int64_t in = 0; in < inner; ++in)
              pd[(o * lens[q] + l) * inner + in] = gd[(o * total + off2 + l) * inner + in];
        tp->accumulate(ids[q], gp);
        off2 += lens[q];
      }
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

template <typename S>
VarT<S> slice(VarT<S> a, int dim, int64_t start, int64_t len) {
  TapeT<S>* tp = a.tape;
  const TensorT<S>& av = a.value();
  int rank = av.rank();
  if (dim < 0 || dim >= rank) throw std::invalid_argument("slice: bad dim");
  if (start < 0 || len < 0 || start + len > av.shape()[dim])
    throw std::invalid_argument("slice: window [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of range for " + av.shape().str());
  Shape os = av.shape();
  os[dim] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < dim; ++i) outer *= av.shape()[i];
  for (int i = dim + 1; i < rank; ++i) inner *= av.shape()[i];
  int64_t full = av.shape()[dim];
  TensorT<S> out(os);
  S* od = out.mutable_data();
  const S* id = av.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t l = 0; l < len; ++l)
      for (int64_t in = 0; in < inner; ++in)
        od[(o * len + l) * inner + in] = id[(o * full + start + l) * inner + in];
  bool ng = tp->grad_enabled() && tp->needs_grad(a);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    int32_t ia = a.id;
    Shape as = av.shape();
    back = [tp, ia, as, outer, inner, full, start, len](const TensorT<S>& g) {
      TensorT<S> gi(as);
      S* p = gi.mutable_data();
      const S* gd = g.data();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t l = 0; l < len; ++l)
          for (int64_t in = 0; in < inner; ++in)
            p[(o * full + start + l) * inner + in] = gd[(o * len + l) * inner + in];
      tp->accumulate(ia, gi);
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

// ---- reductions -------------------------------------------------------

template <typename S>
VarT<S> sum_all(VarT<S> a) {
  TapeT<S>* tp = a.tape;
  const TensorT<S>& av = a.value();
  double s = 0;
  for (int64_t i = 0; i < av.numel(); ++i) s += av.at(i);
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(s));
  bool ng = tp->grad_enabled() && tp->needs_grad(a);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    int32_t ia = a.id;
    Shape as = av.shape();
    back = [tp, ia, as](const TensorT<S>& g) { tp->accumulate(ia, TensorT<S>::full(as, g.at(0))); };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

template <typename S>
VarT<S> mean_all(VarT<S> a) {
  int64_t n = a.value().numel();
  return scale(sum_all(a), S(1) / static_cast<S>(n));
}

template <typename S>
VarT<S> sum_axis(VarT<S> a, int axis) {
  TapeT<S>* tp = a.tape;
  const TensorT<S>& av = a.value();
  int rank = av.rank();
  if (axis < 0 || axis >= rank) throw std::invalid_argument("sum_axis: bad axis");
  Shape os;
  os.rank = rank - 1;
  for (int i = 0, j = 0; i < rank; ++i)
    if (i != axis) os[j++] = av.shape()[i];
  int64_t outer = 1, inner = 1, len = av.shape()[axis];
  for (int i = 0; i < axis; ++i) outer *= av.shape()[i];
  for (int i = axis + 1; i < rank; ++i) inner *= av.shape()[i];
  TensorT<S> out(os);
  S* od = out.mutable_data();
  const S* id = av.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      double s = 0;
      for (int64_t l = 0; l < len; ++l) s += id[(o * len + l) * inner + in];
      od[o * inner + in] = static_cast<S>(s);
    }
  bool ng = tp->grad_enabled() && tp->needs_grad(a);
  std::function<void(const TensorT<S>&)> back;
  if (ng) {
    int32_t ia = a.id;
    Shape as = av.shape();
    back = [tp, ia, as, outer, inner, len](const TensorT<S>& g) {
      TensorT<S> gi(as);
      S* p = gi.mutable_data();
      const S* gd = g.data();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t l = 0; l < len; ++l)
          for (int64_t in = 0; in < inner; ++in) p[(o * len + l) * inner + in] = gd[o * inner + in];
      tp->accumulate(ia, gi);
    };
  }
  return {tp, tp->push(std::move(out), ng, std::move(back))};
}

// ---- stop gradient ----------------------------------------------------

template <typename S>
VarT<S> stop_gradient(VarT<S> a) {
  TapeT<S>* tp = a.tape;
  return {tp, tp->push(a.value(), false, nullptr)};
}

// ---- attention --------------------------------------------------------

template <typename S>
VarT<S> scaled_dot_attention(VarT<S> q, VarT<S> k, VarT<S> v, VarT<S> mask) {
  const Shape& qs = q.value().shape();
  const Shape& ks = k.value().shape();
  if (qs.rank != 3 || ks.rank != 3)
    throw std::invalid_argument("scaled_dot_attention: q/k must be rank 3, got " + qs.str() + " / " +
                                ks.str());
  S inv = S(1) / static_cast<S>(std::sqrt(static_cast<double>(qs[2])));
  VarT<S> scores = scale(batched_matmul(q, transpose(k, {0, 2, 1})), inv);
  scores = add(scores, mask);
  return batched_matmul(softmax(scores), v);
}

// ---- categorical helpers ----------------------------------------------

template <typename S>
VarT<S> categorical_kl_mean(VarT<S> p_logits, VarT<S> q_logits) {
  if (p_logits.value().shape().last() != q_logits.value().shape().last())
    throw std::invalid_argument("categorical_kl_mean: action dims differ, " +
                                p_logits.value().shape().str() + " vs " + q_logits.value().shape().str());
  int64_t rows = p_logits.value().numel() / p_logits.value().shape().last();
  VarT<S> lp = log_softmax(p_logits);
  VarT<S> lq = log_softmax(q_logits);
  VarT<S> terms = mul(exp_(lp), sub(lp, lq));
  return scale(sum_all(terms), S(1) / static_cast<S>(rows));
}

template <typename S>
VarT<S> categorical_entropy_mean(VarT<S> logits) {
  int64_t rows = logits.value().numel() / logits.value().shape().last();
  VarT<S> lp = log_softmax(logits);
  VarT<S> terms = mul(exp_(lp), lp);
  return scale(sum_all(terms), S(-1) / static_cast<S>(rows));
}

template <typename S>
VarT<S> log_prob_selected(VarT<S> logits, const std::vector<int64_t>& actions) {
  const Shape& s = logits.value().shape();
  if (s.rank != 2) throw std::invalid_argument("log_prob_selected: logits must be rank 2, got " + s.str());
  int64_t rows = s[0], n = s[1];
  if (static_cast<int64_t>(actions.size()) != rows)
    throw std::invalid_argument("log_prob_selected: action count mismatch");
  TensorT<S> onehot{Shape{rows, n}};
  S* p = onehot.mutable_data();
  for (int64_t r = 0; r < rows; ++r) {
    int64_t a = actions[static_cast<size_t>(r)];
    if (a < 0 || a >= n) throw std::invalid_argument("log_prob_selected: action out of range");
    p[r * n + a] = S(1);
  }
  VarT<S> sel = logits.tape->constant(std::move(onehot));
  return sum_axis(mul(log_softmax(logits), sel), 1);
}

// ---- instantiations ---------------------------------------------------

template class TapeT<float>;
template class TapeT<double>;

#define ALD_INSTANTIATE_OPS(S)                                                                \
  template VarT<S> add<S>(VarT<S>, VarT<S>);                                                  \
  template VarT<S> sub<S>(VarT<S>, VarT<S>);                                                  \
  template VarT<S> mul<S>(VarT<S>, VarT<S>);                                                  \
  template VarT<S> scale<S>(VarT<S>, S);                                                      \
  template VarT<S> add_const<S>(VarT<S>, S);                                                  \
  template VarT<S> matmul<S>(VarT<S>, VarT<S>);                                               \
  template VarT<S> batched_matmul<S>(VarT<S>, VarT<S>);                                       \
  template VarT<S> transpose<S>(VarT<S>, const std::vector<int>&);                            \
  template VarT<S> reshape<S>(VarT<S>, const Shape&);                                         \
  template VarT<S> sigmoid<S>(VarT<S>);                                                       \
  template VarT<S> tanh_<S>(VarT<S>);                                                         \
  template VarT<S> relu<S>(VarT<S>);                                                          \
  template VarT<S> exp_<S>(VarT<S>);                                                          \
  template VarT<S> softmax<S>(VarT<S>);                                                       \
  template VarT<S> log_softmax<S>(VarT<S>);                                                   \
  template VarT<S> layer_norm<S>(VarT<S>, VarT<S>, VarT<S>, S);                               \
  template VarT<S> embedding<S>(VarT<S>, const std::vector<int64_t>&);                        \
  template VarT<S> concat<S>(const std::vector<VarT<S>>&, int);                               \
  template VarT<S> slice<S>(VarT<S>, int, int64_t, int64_t);                                  \
  template VarT<S> sum_all<S>(VarT<S>);                                                       \
  template VarT<S> mean_all<S>(VarT<S>);                                                      \
  template VarT<S> sum_axis<S>(VarT<S>, int);                                                 \
  template VarT<S> index_last<S>(VarT<S>, const std::vector<int64_t>&, int64_t);              \
  template VarT<S> stop_gradient<S>(VarT<S>);                                                 \
  template VarT<S> scaled_dot_attention<S>(VarT<S>, VarT<S>, VarT<S>, VarT<S>);               \
  template VarT<S> categorical_kl_mean<S>(VarT<S>, VarT<S>);                                  \
  template VarT<S> categorical_entropy_mean<S>(VarT<S>);                                      \
  template VarT<S> log_prob_selected<S>(VarT<S>, const std::vector<int64_t>&);

ALD_INSTANTIATE_OPS(float)
ALD_INSTANTIATE_OPS(double)

#undef ALD_INSTANTIATE_OPS

}  // namespace ald
