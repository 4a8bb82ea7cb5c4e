#pragma once

#include <cassert>
#include <cmath>
#include <cstring>
#include <vector>

#include "softprompt/errors.hpp"
#include "softprompt/rng.hpp"

namespace softprompt {

// Dense row-major matrix. The whole numeric stack is templated on the scalar
// type: float for real runs, double for finite-difference gradient checks.
template <class R>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<R> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, R(0)) {}

  R* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const R* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

  R& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  R at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  void fill(R v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(R(0)); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void add_in_place(const Matrix& o) {
    assert(same_shape(o));
    for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
  }

  void scale_in_place(R s) {
    for (auto& v : data) v *= s;
  }

  static Matrix filled(int r, int c, R v) {
    Matrix m(r, c);
    m.fill(v);
    return m;
  }

  static Matrix uniform(int r, int c, Rng& rng, double lo, double hi) {
    Matrix m(r, c);
    for (auto& v : m.data) v = static_cast<R>(rng.uniform(lo, hi));
    return m;
  }

  static Matrix normal(int r, int c, Rng& rng, double mean, double stddev) {
    Matrix m(r, c);
    for (auto& v : m.data) v = static_cast<R>(rng.normal(mean, stddev));
    return m;
  }
};

// ---------------------------------------------------------------------------
// GEMM kernels. Three access patterns cover every product the forward and
// backward passes need without materializing transposes:
//   nn: C += A[m,k] * B[k,n]      (row-axpy over B rows; streams contiguously)
//   nt: C += A[m,k] * B[n,k]^T    (row dot products)
//   tn: C += A[m,k]^T * B[m,n]    (rank-1 accumulation; used for dW)
// All loops are written so the inner dimension is contiguous in memory.
// ---------------------------------------------------------------------------
namespace kernels {

template <class R>
void gemm_nn(const R* a, const R* b, R* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    R* ci = c + static_cast<size_t>(i) * n;
    if (!accumulate) std::memset(ci, 0, sizeof(R) * n);
    const R* ai = a + static_cast<size_t>(i) * k;
    for (int t = 0; t < k; ++t) {
      const R av = ai[t];
      if (av == R(0)) continue;
      const R* bt = b + static_cast<size_t>(t) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

template <class R>
void gemm_nt(const R* a, const R* b, R* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const R* ai = a + static_cast<size_t>(i) * k;
    R* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const R* bj = b + static_cast<size_t>(j) * k;
      R acc(0);
      for (int t = 0; t < k; ++t) acc += ai[t] * bj[t];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

template <class R>
void gemm_tn(const R* a, const R* b, R* c, int m, int k, int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(R) * static_cast<size_t>(k) * n);
  for (int i = 0; i < m; ++i) {
    const R* ai = a + static_cast<size_t>(i) * k;
    const R* bi = b + static_cast<size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      const R av = ai[t];
      if (av == R(0)) continue;
      R* ct = c + static_cast<size_t>(t) * n;
      for (int j = 0; j < n; ++j) ct[j] += av * bi[j];
    }
  }
}

}  // namespace kernels

template <class R>
Matrix<R> matmul_nn(const Matrix<R>& a, const Matrix<R>& b) {
  if (a.cols != b.rows) throw ArgumentError("matmul_nn: inner dimensions differ");
  Matrix<R> c(a.rows, b.cols);
  kernels::gemm_nn(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols, b.cols, false);
  return c;
}

template <class R>
Matrix<R> matmul_nt(const Matrix<R>& a, const Matrix<R>& b) {
  if (a.cols != b.cols) throw ArgumentError("matmul_nt: inner dimensions differ");
  Matrix<R> c(a.rows, b.rows);
  kernels::gemm_nt(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols, b.rows, false);
  return c;
}

// Scalar helpers shared by the graph ops and the no-grad inference path, so
// both compute bit-identical values.
namespace scalar {

template <class R>
R sigmoid(R x) {
  return R(1) / (R(1) + std::exp(-x));
}

// tanh-approximation GELU (smooth everywhere, which the finite-difference
// gradient checks rely on).
template <class R>
R gelu(R x) {
  const R c = R(0.7978845608028654);  // sqrt(2/pi)
  const R inner = c * (x + R(0.044715) * x * x * x);
  return R(0.5) * x * (R(1) + std::tanh(inner));
}

template <class R>
R gelu_grad(R x) {
  const R c = R(0.7978845608028654);
  const R inner = c * (x + R(0.044715) * x * x * x);
  const R t = std::tanh(inner);
  const R dinner = c * (R(1) + R(3) * R(0.044715) * x * x);
  return R(0.5) * (R(1) + t) + R(0.5) * x * (R(1) - t * t) * dinner;
}

// In-place softmax over buf[0..n); returns nothing, stable under large logits.
template <class R>
void softmax_row(R* buf, int n) {
  R mx = buf[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, buf[i]);
  R sum(0);
  for (int i = 0; i < n; ++i) {
    buf[i] = std::exp(buf[i] - mx);
    sum += buf[i];
  }
  const R inv = R(1) / sum;
  for (int i = 0; i < n; ++i) buf[i] *= inv;
}

// Normalizes row x[0..n) into out with affine gain/bias.
// Stores mean and inverse stddev for the backward pass when requested.
template <class R>
void layer_norm_row(const R* x, const R* gain, const R* bias, R* out, int n, R eps,
                    R* mean_out = nullptr, R* inv_std_out = nullptr) {
  R mean(0);
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= R(n);
  R var(0);
  for (int i = 0; i < n; ++i) {
    const R d = x[i] - mean;
    var += d * d;
  }
  var /= R(n);
  const R inv_std = R(1) / std::sqrt(var + eps);
  for (int i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv_std * gain[i] + bias[i];
  if (mean_out) *mean_out = mean;
  if (inv_std_out) *inv_std_out = inv_std;
}

}  // namespace scalar

// Largest element; ties broken by the lowest index.
template <class R>
int argmax_lowest_index(const R* v, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace softprompt
