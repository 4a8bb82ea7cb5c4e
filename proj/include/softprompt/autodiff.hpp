#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "softprompt/matrix.hpp"

namespace softprompt {

// Reverse-mode autodiff over Matrix<R>. A Tape owns the nodes of one dynamic
// computation graph (typically one optimizer step); Var is a cheap handle.
//
// Leaves wrap caller-owned parameter matrices by pointer, so the same
// parameters can be referenced by many tapes over a training run. Gradient
// buffers are allocated lazily when backward() runs. Nodes whose result
// cannot influence any trainable leaf are pruned from the backward sweep;
// this is what makes the frozen-backbone regime cheap: gradients still flow
// *through* frozen weights to upstream inputs, but no dW is accumulated for
// them.
template <class R>
class Tape {
 public:
  struct Node {
    Matrix<R> owned;
    const Matrix<R>* external = nullptr;
    Matrix<R> grad;
    bool needs_grad = false;
    std::function<void(Tape&, int self)> backward;

    const Matrix<R>& value() const { return external ? *external : owned; }
  };

  int size() const { return static_cast<int>(nodes_.size()); }

  const Matrix<R>& val(int id) const { return nodes_[id].value(); }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  // Gradient of node `id`; zero-filled on first access.
  Matrix<R>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) {
      const Matrix<R>& v = n.value();
      n.grad = Matrix<R>(v.rows, v.cols);
    }
    return n.grad;
  }

  // nullptr when the node does not participate in the backward sweep.
  Matrix<R>* grad_if_needed(int id) {
    return nodes_[id].needs_grad ? &grad(id) : nullptr;
  }

  int leaf(const Matrix<R>* m, bool trainable) {
    Node n;
    n.external = m;
    n.needs_grad = trainable;
    nodes_.push_back(std::move(n));
    return size() - 1;
  }

  int constant(Matrix<R> m) {
    Node n;
    n.owned = std::move(m);
    nodes_.push_back(std::move(n));
    return size() - 1;
  }

  int emplace(Matrix<R> value, bool needs, std::function<void(Tape&, int)> back) {
    Node n;
    n.owned = std::move(value);
    n.needs_grad = needs;
    n.backward = needs ? std::move(back) : nullptr;
    nodes_.push_back(std::move(n));
    return size() - 1;
  }

  // Runs the backward sweep from a 1x1 loss node.
  void backward(int loss_id) {
    const Matrix<R>& lv = val(loss_id);
    if (lv.rows != 1 || lv.cols != 1)
      throw ArgumentError("backward: loss must be a 1x1 node");
    grad(loss_id).at(0, 0) = R(1);
    for (int id = loss_id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.needs_grad && n.backward && !n.grad.empty()) n.backward(*this, id);
    }
  }

 private:
  std::vector<Node> nodes_;
};

template <class R>
struct Var {
  Tape<R>* tape = nullptr;
  int id = -1;

  const Matrix<R>& value() const { return tape->val(id); }
  int rows() const { return value().rows; }
  int cols() const { return value().cols; }
  bool needs_grad() const { return tape->needs_grad(id); }
  Matrix<R>& grad() const { return tape->grad(id); }
};

// ---------------------------------------------------------------------------
// Graph construction ops
// ---------------------------------------------------------------------------

template <class R>
Var<R> make_leaf(Tape<R>& t, const Matrix<R>* m, bool trainable) {
  return {&t, t.leaf(m, trainable)};
}

template <class R>
Var<R> make_constant(Tape<R>& t, Matrix<R> m) {
  return {&t, t.constant(std::move(m))};
}

// C = A * B
template <class R>
Var<R> matmul(Var<R> a, Var<R> b) {
  Tape<R>& t = *a.tape;
  Matrix<R> c = matmul_nn(a.value(), b.value());
  const int ia = a.id, ib = b.id;
  int id = t.emplace(std::move(c), a.needs_grad() || b.needs_grad(),
                     [ia, ib](Tape<R>& tp, int self) {
                       const Matrix<R>& dc = tp.grad(self);
                       const Matrix<R>& av = tp.val(ia);
                       const Matrix<R>& bv = tp.val(ib);
                       if (Matrix<R>* da = tp.grad_if_needed(ia)) {
                         kernels::gemm_nt(dc.data.data(), bv.data.data(), da->data.data(),
                                          dc.rows, dc.cols, bv.rows, true);
                       }
                       if (Matrix<R>* db = tp.grad_if_needed(ib)) {
                         kernels::gemm_tn(av.data.data(), dc.data.data(), db->data.data(),
                                          av.rows, av.cols, dc.cols, true);
                       }
                     });
  return {&t, id};
}

// C = A * B^T
template <class R>
Var<R> matmul_transposed(Var<R> a, Var<R> b) {
  Tape<R>& t = *a.tape;
  Matrix<R> c = matmul_nt(a.value(), b.value());
  const int ia = a.id, ib = b.id;
  int id = t.emplace(std::move(c), a.needs_grad() || b.needs_grad(),
                     [ia, ib](Tape<R>& tp, int self) {
                       const Matrix<R>& dc = tp.grad(self);
                       const Matrix<R>& av = tp.val(ia);
                       const Matrix<R>& bv = tp.val(ib);
                       if (Matrix<R>* da = tp.grad_if_needed(ia)) {
                         kernels::gemm_nn(dc.data.data(), bv.data.data(), da->data.data(),
                                          dc.rows, dc.cols, bv.cols, true);
                       }
                       if (Matrix<R>* db = tp.grad_if_needed(ib)) {
                         kernels::gemm_tn(dc.data.data(), av.data.data(), db->data.data(),
                                          dc.rows, dc.cols, av.cols, true);
                       }
                     });
  return {&t, id};
}

template <class R>
Var<R> add(Var<R> a, Var<R> b) {
  Tape<R>& t = *a.tape;
  if (!a.value().same_shape(b.value())) throw ArgumentError("add: shape mismatch");
  Matrix<R> c = a.value();
  c.add_in_place(b.value());
  const int ia = a.id, ib = b.id;
  int id = t.emplace(std::move(c), a.needs_grad() || b.needs_grad(),
                     [ia, ib](Tape<R>& tp, int self) {
                       const Matrix<R>& dc = tp.grad(self);
                       if (Matrix<R>* da = tp.grad_if_needed(ia)) da->add_in_place(dc);
                       if (Matrix<R>* db = tp.grad_if_needed(ib)) db->add_in_place(dc);
                     });
  return {&t, id};
}

// Elementwise sum of several same-shaped vars.
template <class R>
Var<R> add_n(const std::vector<Var<R>>& xs) {
  if (xs.empty()) throw ArgumentError("add_n: empty input");
  Tape<R>& t = *xs[0].tape;
  Matrix<R> c = xs[0].value();
  bool needs = xs[0].needs_grad();
  std::vector<int> ids{xs[0].id};
  for (size_t i = 1; i < xs.size(); ++i) {
    c.add_in_place(xs[i].value());
    needs = needs || xs[i].needs_grad();
    ids.push_back(xs[i].id);
  }
  int id = t.emplace(std::move(c), needs, [ids](Tape<R>& tp, int self) {
    const Matrix<R>& dc = tp.grad(self);
    for (int pid : ids)
      if (Matrix<R>* dp = tp.grad_if_needed(pid)) dp->add_in_place(dc);
  });
  return {&t, id};
}

// Broadcast-add a 1xN row vector to every row.
template <class R>
Var<R> add_row(Var<R> a, Var<R> r) {
  Tape<R>& t = *a.tape;
  const Matrix<R>& av = a.value();
  const Matrix<R>& rv = r.value();
  if (rv.rows != 1 || rv.cols != av.cols) throw ArgumentError("add_row: bias must be 1xN");
  Matrix<R> c = av;
  for (int i = 0; i < c.rows; ++i) {
    R* ci = c.row(i);
    for (int j = 0; j < c.cols; ++j) ci[j] += rv.data[j];
  }
  const int ia = a.id, ir = r.id;
  int id = t.emplace(std::move(c), a.needs_grad() || r.needs_grad(),
                     [ia, ir](Tape<R>& tp, int self) {
                       const Matrix<R>& dc = tp.grad(self);
                       if (Matrix<R>* da = tp.grad_if_needed(ia)) da->add_in_place(dc);
                       if (Matrix<R>* dr = tp.grad_if_needed(ir)) {
                         for (int i = 0; i < dc.rows; ++i) {
                           const R* di = dc.row(i);
                           for (int j = 0; j < dc.cols; ++j) dr->data[j] += di[j];
                         }
                       }
                     });
  return {&t, id};
}

template <class R>
Var<R> scale(Var<R> a, R s) {
  Tape<R>& t = *a.tape;
  Matrix<R> c = a.value();
  c.scale_in_place(s);
  const int ia = a.id;
  int id = t.emplace(std::move(c), a.needs_grad(), [ia, s](Tape<R>& tp, int self) {
    const Matrix<R>& dc = tp.grad(self);
    if (Matrix<R>* da = tp.grad_if_needed(ia)) {
      for (size_t i = 0; i < dc.data.size(); ++i) da->data[i] += s * dc.data[i];
    }
  });
  return {&t, id};
}

template <class R>
Var<R> hadamard(Var<R> a, Var<R> b) {
  Tape<R>& t = *a.tape;
  if (!a.value().same_shape(b.value())) throw ArgumentError("hadamard: shape mismatch");
  Matrix<R> c = a.value();
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.value().data[i];
  const int ia = a.id, ib = b.id;
  int id = t.emplace(std::move(c), a.needs_grad() || b.needs_grad(),
                     [ia, ib](Tape<R>& tp, int self) {
                       const Matrix<R>& dc = tp.grad(self);
                       const Matrix<R>& av = tp.val(ia);
                       const Matrix<R>& bv = tp.val(ib);
                       if (Matrix<R>* da = tp.grad_if_needed(ia))
                         for (size_t i = 0; i < dc.data.size(); ++i)
                           da->data[i] += dc.data[i] * bv.data[i];
                       if (Matrix<R>* db = tp.grad_if_needed(ib))
                         for (size_t i = 0; i < dc.data.size(); ++i)
                           db->data[i] += dc.data[i] * av.data[i];
                     });
  return {&t, id};
}

template <class R>
Var<R> concat_rows(const std::vector<Var<R>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: empty input");
  Tape<R>& t = *parts[0].tape;
  const int cols = parts[0].cols();
  int rows = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ArgumentError("concat_rows: column mismatch");
    rows += p.rows();
    needs = needs || p.needs_grad();
  }
  Matrix<R> c(rows, cols);
  std::vector<int> ids;
  std::vector<int> offsets;
  int at = 0;
  for (const auto& p : parts) {
    const Matrix<R>& pv = p.value();
    std::memcpy(c.row(at), pv.data.data(), sizeof(R) * pv.size());
    ids.push_back(p.id);
    offsets.push_back(at);
    at += pv.rows;
  }
  int id = t.emplace(std::move(c), needs, [ids, offsets](Tape<R>& tp, int self) {
    const Matrix<R>& dc = tp.grad(self);
    for (size_t k = 0; k < ids.size(); ++k) {
      if (Matrix<R>* dp = tp.grad_if_needed(ids[k])) {
        const int off = offsets[k];
        for (int i = 0; i < dp->rows; ++i) {
          const R* src = dc.row(off + i);
          R* dst = dp->row(i);
          for (int j = 0; j < dp->cols; ++j) dst[j] += src[j];
        }
      }
    }
  });
  return {&t, id};
}

template <class R>
Var<R> slice_rows(Var<R> a, int r0, int r1) {
  Tape<R>& t = *a.tape;
  const Matrix<R>& av = a.value();
  if (r0 < 0 || r1 > av.rows || r0 >= r1) throw ArgumentError("slice_rows: bad range");
  Matrix<R> c(r1 - r0, av.cols);
  std::memcpy(c.data.data(), av.row(r0), sizeof(R) * c.size());
  const int ia = a.id;
  int id = t.emplace(std::move(c), a.needs_grad(), [ia, r0](Tape<R>& tp, int self) {
    const Matrix<R>& dc = tp.grad(self);
    if (Matrix<R>* da = tp.grad_if_needed(ia)) {
      for (int i = 0; i < dc.rows; ++i) {
        const R* src = dc.row(i);
        R* dst = da->row(r0 + i);
        for (int j = 0; j < dc.cols; ++j) dst[j] += src[j];
      }
    }
  });
  return {&t, id};
}

template <class R>
Var<R> slice_cols(Var<R> a, int c0, int c1) {
  Tape<R>& t = *a.tape;
  const Matrix<R>& av = a.value();
  if (c0 < 0 || c1 > av.cols || c0 >= c1) throw ArgumentError("slice_cols: bad range");
  Matrix<R> c(av.rows, c1 - c0);
  for (int i = 0; i < av.rows; ++i)
    std::memcpy(c.row(i), av.row(i) + c0, sizeof(R) * (c1 - c0));
  const int ia = a.id;
  int id = t.emplace(std::move(c), a.needs_grad(), [ia, c0](Tape<R>& tp, int self) {
    const Matrix<R>& dc = tp.grad(self);
    if (Matrix<R>* da = tp.grad_if_needed(ia)) {
      for (int i = 0; i < dc.rows; ++i) {
        const R* src = dc.row(i);
        R* dst = da->row(i) + c0;
        for (int j = 0; j < dc.cols; ++j) dst[j] += src[j];
      }
    }
  });
  return {&t, id};
}

template <class R>
Var<R> concat_cols(const std::vector<Var<R>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: empty input");
  Tape<R>& t = *parts[0].tape;
  const int rows = parts[0].rows();
  int cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ArgumentError("concat_cols: row mismatch");
    cols += p.cols();
    needs = needs || p.needs_grad();
  }
  Matrix<R> c(rows, cols);
  std::vector<int> ids;
  std::vector<int> offsets;
  int at = 0;
  for (const auto& p : parts) {
    const Matrix<R>& pv = p.value();
    for (int i = 0; i < rows; ++i)
      std::memcpy(c.row(i) + at, pv.row(i), sizeof(R) * pv.cols);
    ids.push_back(p.id);
    offsets.push_back(at);
    at += pv.cols;
  }
  int id = t.emplace(std::move(c), needs, [ids, offsets](Tape<R>& tp, int self) {
    const Matrix<R>& dc = tp.grad(self);
    for (size_t k = 0; k < ids.size(); ++k) {
      if (Matrix<R>* dp = tp.grad_if_needed(ids[k])) {
        const int off = offsets[k];
        for (int i = 0; i < dp->rows; ++i) {
          const R* src = dc.row(i) + off;
          R* dst = dp->row(i);
          for (int j = 0; j < dp->cols; ++j) dst[j] += src[j];
        }
      }
    }
  });
  return {&t, id};
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <class R>
Var<R> sigmoid(Var<R> a) {
  Tape<R>& t = *a.tape;
  Matrix<R> c = a.value();
  for (auto& v : c.data) v = scalar::sigmoid(v);
  const int ia = a.id;
  int id = t.emplace(std::move(c), a.needs_grad(), [ia](Tape<R>& tp, int self) {
    const Matrix<R>& dc = tp.grad(self);
    const Matrix<R>& y = tp.val(self);
    if (Matrix<R>* da = tp.grad_if_needed(ia))
      for (size_t i = 0; i < dc.data.size(); ++i)
        da->data[i] += dc.data[i] * y.data[i] * (R(1) - y.data[i]);
  });
  return {&t, id};
}

template <class R>
Var<R> tanh_act(Var<R> a) {
  Tape<R>& t = *a.tape;
  Matrix<R> c = a.value();
  for (auto& v : c.data) v = std::tanh(v);
  const int ia = a.id;
  int id = t.emplace(std::move(c), a.needs_grad(), [ia](Tape<R>& tp, int self) {
    const Matrix<R>& dc = tp.grad(self);
    const Matrix<R>& y = tp.val(self);
    if (Matrix<R>* da = tp.grad_if_needed(ia))
      for (size_t i = 0; i < dc.data.size(); ++i)
        da->data[i] += dc.data[i] * (R(1) - y.data[i] * y.data[i]);
  });
  return {&t, id};
}

template <class R>
Var<R> relu(Var<R> a) {
  Tape<R>& t = *a.tape;
  Matrix<R> c = a.value();
  for (auto& v : c.data) v = v > R(0) ? v : R(0);
  const int ia = a.id;
  int id = t.emplace(std::move(c), a.needs_grad(), [ia](Tape<R>& tp, int self) {
    const Matrix<R>& dc = tp.grad(self);
    const Matrix<R>& x = tp.val(ia);
    if (Matrix<R>* da = tp.grad_if_needed(ia))
      for (size_t i = 0; i < dc.data.size(); ++i)
        if (x.data[i] > R(0)) da->data[i] += dc.data[i];
  });
  return {&t, id};
}

template <class R>
Var<R> gelu(Var<R> a) {
  Tape<R>& t = *a.tape;
  Matrix<R> c = a.value();
  for (auto& v : c.data) v = scalar::gelu(v);
  const int ia = a.id;
  int id = t.emplace(std::move(c), a.needs_grad(), [ia](Tape<R>& tp, int self) {
    const Matrix<R>& dc = tp.grad(self);
    const Matrix<R>& x = tp.val(ia);
    if (Matrix<R>* da = tp.grad_if_needed(ia))
      for (size_t i = 0; i < dc.data.size(); ++i)
        da->data[i] += dc.data[i] * scalar::gelu_grad(x.data[i]);
  });
  return {&t, id};
}

// ---------------------------------------------------------------------------
// Normalization / attention / loss
// ---------------------------------------------------------------------------

template <class R>
Var<R> layer_norm(Var<R> x, Var<R> gain, Var<R> bias, R eps = R(1e-5)) {
  Tape<R>& t = *x.tape;
  const Matrix<R>& xv = x.value();
  const int n = xv.cols;
  if (gain.cols() != n || bias.cols() != n)
    throw ArgumentError("layer_norm: gain/bias width mismatch");
  Matrix<R> c(xv.rows, n);
  auto stats = std::make_shared<Matrix<R>>(xv.rows, 2);  // mean, inv_std per row
  for (int i = 0; i < xv.rows; ++i) {
    scalar::layer_norm_row(xv.row(i), gain.value().row(0), bias.value().row(0), c.row(i), n,
                           eps, &stats->at(i, 0), &stats->at(i, 1));
  }
  const int ix = x.id, ig = gain.id, ib = bias.id;
  bool needs = x.needs_grad() || gain.needs_grad() || bias.needs_grad();
  int id = t.emplace(std::move(c), needs, [ix, ig, ib, stats, n](Tape<R>& tp, int self) {
    const Matrix<R>& dy = tp.grad(self);
    const Matrix<R>& xv = tp.val(ix);
    const Matrix<R>& gv = tp.val(ig);
    Matrix<R>* dx = tp.grad_if_needed(ix);
    Matrix<R>* dg = tp.grad_if_needed(ig);
    Matrix<R>* db = tp.grad_if_needed(ib);
    std::vector<R> xhat(n), dxh(n);
    for (int i = 0; i < dy.rows; ++i) {
      const R mean = stats->at(i, 0);
      const R inv_std = stats->at(i, 1);
      const R* xi = xv.row(i);
      const R* dyi = dy.row(i);
      for (int j = 0; j < n; ++j) xhat[j] = (xi[j] - mean) * inv_std;
      if (dg)
        for (int j = 0; j < n; ++j) dg->data[j] += dyi[j] * xhat[j];
      if (db)
        for (int j = 0; j < n; ++j) db->data[j] += dyi[j];
      if (dx) {
        R sum_dxh = R(0), sum_dxh_xhat = R(0);
        for (int j = 0; j < n; ++j) {
          dxh[j] = dyi[j] * gv.data[j];
          sum_dxh += dxh[j];
          sum_dxh_xhat += dxh[j] * xhat[j];
        }
        const R inv_n = R(1) / R(n);
        R* dxi = dx->row(i);
        for (int j = 0; j < n; ++j)
          dxi[j] += inv_std * (dxh[j] - inv_n * sum_dxh - xhat[j] * inv_n * sum_dxh_xhat);
      }
    }
  });
  return {&t, id};
}

// Row-wise softmax where row i may only attend to columns j <= i + diag.
// diag is the number of cached (always-visible) key positions when queries
// start mid-sequence; diag = 0 gives the standard square causal mask.
template <class R>
Var<R> causal_softmax(Var<R> scores, int diag) {
  Tape<R>& t = *scores.tape;
  const Matrix<R>& sv = scores.value();
  Matrix<R> p(sv.rows, sv.cols);
  for (int i = 0; i < sv.rows; ++i) {
    const int limit = std::min(sv.cols, i + diag + 1);
    if (limit <= 0) throw ArgumentError("causal_softmax: row with no visible keys");
    std::memcpy(p.row(i), sv.row(i), sizeof(R) * limit);
    scalar::softmax_row(p.row(i), limit);
    // masked tail stays zero
  }
  const int is = scores.id;
  int id = t.emplace(std::move(p), scores.needs_grad(), [is, diag](Tape<R>& tp, int self) {
    const Matrix<R>& dp = tp.grad(self);
    const Matrix<R>& pv = tp.val(self);
    if (Matrix<R>* ds = tp.grad_if_needed(is)) {
      for (int i = 0; i < dp.rows; ++i) {
        const int limit = std::min(dp.cols, i + diag + 1);
        const R* dpi = dp.row(i);
        const R* pi = pv.row(i);
        R dot = R(0);
        for (int j = 0; j < limit; ++j) dot += dpi[j] * pi[j];
        R* dsi = ds->row(i);
        for (int j = 0; j < limit; ++j) dsi[j] += pi[j] * (dpi[j] - dot);
      }
    }
  });
  return {&t, id};
}

// Mean cross-entropy over the unmasked rows of a logits matrix.
// targets[i] is the class index for row i; mask[i] == 0 excludes the row.
// Produces a 1x1 node. Throws if every row is masked (undefined loss).
template <class R>
Var<R> softmax_cross_entropy(Var<R> logits, std::vector<int> targets, std::vector<uint8_t> mask) {
  Tape<R>& t = *logits.tape;
  const Matrix<R>& lv = logits.value();
  if (static_cast<int>(targets.size()) != lv.rows || mask.size() != targets.size())
    throw ArgumentError("softmax_cross_entropy: targets/mask length mismatch");
  int count = 0;
  for (uint8_t m : mask) count += m ? 1 : 0;
  if (count == 0) throw TrainingError("softmax_cross_entropy: all positions masked, loss undefined");
  for (int i = 0; i < lv.rows; ++i)
    if (mask[i] && (targets[i] < 0 || targets[i] >= lv.cols))
      throw ArgumentError("softmax_cross_entropy: target id out of range");

  auto probs = std::make_shared<Matrix<R>>(lv.rows, lv.cols);
  R loss(0);
  for (int i = 0; i < lv.rows; ++i) {
    if (!mask[i]) continue;
    std::memcpy(probs->row(i), lv.row(i), sizeof(R) * lv.cols);
    scalar::softmax_row(probs->row(i), lv.cols);
    const R p = probs->at(i, targets[i]);
    loss -= std::log(std::max(p, std::numeric_limits<R>::min()));
  }
  loss /= R(count);

  Matrix<R> out(1, 1);
  out.at(0, 0) = loss;
  const int il = logits.id;
  auto tg = std::make_shared<std::vector<int>>(std::move(targets));
  auto mk = std::make_shared<std::vector<uint8_t>>(std::move(mask));
  int id = t.emplace(std::move(out), logits.needs_grad(),
                     [il, probs, tg, mk, count](Tape<R>& tp, int self) {
                       const R g = tp.grad(self).at(0, 0) / R(count);
                       if (Matrix<R>* dl = tp.grad_if_needed(il)) {
                         for (int i = 0; i < dl->rows; ++i) {
                           if (!(*mk)[i]) continue;
                           const R* pi = probs->row(i);
                           R* di = dl->row(i);
                           for (int j = 0; j < dl->cols; ++j) di[j] += g * pi[j];
                           di[(*tg)[i]] -= g;
                         }
                       }
                     });
  return {&t, id};
}

// Token + positional embedding lookup. Row i of the result is
// tok_table[ids[i]] + pos_table[pos_offset + i].
template <class R>
Var<R> embedding(Var<R> tok_table, Var<R> pos_table, std::vector<int> ids, int pos_offset) {
  Tape<R>& t = *tok_table.tape;
  const Matrix<R>& tok = tok_table.value();
  const Matrix<R>& pos = pos_table.value();
  const int len = static_cast<int>(ids.size());
  if (pos_offset < 0 || pos_offset + len > pos.rows)
    throw CapacityError("embedding: position range exceeds max_positions");
  Matrix<R> c(len, tok.cols);
  for (int i = 0; i < len; ++i) {
    if (ids[i] < 0 || ids[i] >= tok.rows)
      throw ArgumentError("embedding: token id out of range");
    const R* tr = tok.row(ids[i]);
    const R* pr = pos.row(pos_offset + i);
    R* cr = c.row(i);
    for (int j = 0; j < tok.cols; ++j) cr[j] = tr[j] + pr[j];
  }
  const int it = tok_table.id, ip = pos_table.id;
  auto idv = std::make_shared<std::vector<int>>(std::move(ids));
  int id = t.emplace(std::move(c), tok_table.needs_grad() || pos_table.needs_grad(),
                     [it, ip, idv, pos_offset](Tape<R>& tp, int self) {
                       const Matrix<R>& dc = tp.grad(self);
                       if (Matrix<R>* dt = tp.grad_if_needed(it)) {
                         for (int i = 0; i < dc.rows; ++i) {
                           R* dst = dt->row((*idv)[i]);
                           const R* src = dc.row(i);
                           for (int j = 0; j < dc.cols; ++j) dst[j] += src[j];
                         }
                       }
                       if (Matrix<R>* dp = tp.grad_if_needed(ip)) {
                         for (int i = 0; i < dc.rows; ++i) {
                           R* dst = dp->row(pos_offset + i);
                           const R* src = dc.row(i);
                           for (int j = 0; j < dc.cols; ++j) dst[j] += src[j];
                         }
                       }
                     });
  return {&t, id};
}

// x * W + b
template <class R>
Var<R> linear(Var<R> x, Var<R> w, Var<R> b) {
  return add_row(matmul(x, w), b);
}

}  // namespace softprompt
