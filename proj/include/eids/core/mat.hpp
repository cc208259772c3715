#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "eids/core/error.hpp"

namespace eids {

// Dense row-major matrix. The model is tiny (hidden dim 8, sequences of at
// most a few dozen rows), so plain loops beat any BLAS dispatch overhead.
template <typename Real>
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<Real> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, Real(0)) {}

  Real* row(std::size_t i) { return a.data() + i * cols; }
  const Real* row(std::size_t i) const { return a.data() + i * cols; }
  Real& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  const Real& operator()(std::size_t i, std::size_t j) const {
    return a[i * cols + j];
  }
  bool empty() const { return a.empty(); }
  std::size_t size() const { return a.size(); }

  void fill(Real v) { a.assign(a.size(), v); }
};

// C = A(m×k) · B(k×n), optionally accumulating into C.
template <typename Real>
void gemm_nn(const Mat<Real>& A, const Mat<Real>& B, Mat<Real>& C,
             bool accumulate = false) {
  if (A.cols != B.rows) throw ShapeMismatch("gemm_nn: inner dims differ");
  if (!accumulate) {
    C.rows = A.rows;
    C.cols = B.cols;
    C.a.assign(A.rows * B.cols, Real(0));
  }
  for (std::size_t i = 0; i < A.rows; ++i) {
    Real* c = C.row(i);
    const Real* ar = A.row(i);
    for (std::size_t k = 0; k < A.cols; ++k) {
      const Real av = ar[k];
      const Real* br = B.row(k);
      for (std::size_t j = 0; j < B.cols; ++j) c[j] += av * br[j];
    }
  }
}

// C = A(m×k) · Bᵀ(n×k) → m×n.
template <typename Real>
void gemm_nt(const Mat<Real>& A, const Mat<Real>& B, Mat<Real>& C,
             bool accumulate = false) {
  if (A.cols != B.cols) throw ShapeMismatch("gemm_nt: inner dims differ");
  if (!accumulate) {
    C.rows = A.rows;
    C.cols = B.rows;
    C.a.assign(A.rows * B.rows, Real(0));
  }
  for (std::size_t i = 0; i < A.rows; ++i) {
    const Real* ar = A.row(i);
    Real* c = C.row(i);
    for (std::size_t j = 0; j < B.rows; ++j) {
      const Real* br = B.row(j);
      Real s = 0;
      for (std::size_t k = 0; k < A.cols; ++k) s += ar[k] * br[k];
      c[j] += s;
    }
  }
}

// C = Aᵀ(k×m) · B(k×n) → m×n; the gradient workhorse (dW = Xᵀ·dY).
template <typename Real>
void gemm_tn(const Mat<Real>& A, const Mat<Real>& B, Mat<Real>& C,
             bool accumulate = true) {
  if (A.rows != B.rows) throw ShapeMismatch("gemm_tn: outer dims differ");
  if (!accumulate) {
    C.rows = A.cols;
    C.cols = B.cols;
    C.a.assign(A.cols * B.cols, Real(0));
  }
  for (std::size_t k = 0; k < A.rows; ++k) {
    const Real* ar = A.row(k);
    const Real* br = B.row(k);
    for (std::size_t i = 0; i < A.cols; ++i) {
      Real* c = C.row(i);
      const Real av = ar[i];
      for (std::size_t j = 0; j < B.cols; ++j) c[j] += av * br[j];
    }
  }
}

template <typename Real>
void add_row_inplace(Mat<Real>& m, const std::vector<Real>& v) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    Real* r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) r[j] += v[j];
  }
}

template <typename Real>
void accumulate_col_sums(const Mat<Real>& m, std::vector<Real>& out) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    const Real* r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) out[j] += r[j];
  }
}

template <typename Real>
bool all_finite(const Real* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

}  // namespace eids
