#pragma once

#include <cassert>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace chronotoken {

// Dense row-major matrix. Vectors are 1xN or Nx1 matrices; scalars 1x1.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, T(0)) {}
  Mat(int r, int c, T fill)
      : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

  T* operator[](int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const T* operator[](int r) const {
    return a.data() + static_cast<size_t>(r) * cols;
  }

  T& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  const T& at(int r, int c) const {
    return a[static_cast<size_t>(r) * cols + c];
  }

  size_t size() const { return a.size(); }
  bool empty() const { return a.empty(); }

  void fill(T v) { std::fill(a.begin(), a.end(), v); }

  bool same_shape(const Mat& o) const {
    return rows == o.rows && cols == o.cols;
  }

  template <typename U>
  Mat<U> cast() const {
    Mat<U> out(rows, cols);
    for (size_t i = 0; i < a.size(); ++i) out.a[i] = static_cast<U>(a[i]);
    return out;
  }
};

// C += A * B, shapes (m x k)(k x n). Inner loop over columns keeps the
// access pattern sequential in both B and C.
template <typename T>
void gemm_nn_acc(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
  assert(A.cols == B.rows && A.rows == C.rows && B.cols == C.cols);
  const int m = A.rows, k = A.cols, n = B.cols;
  for (int i = 0; i < m; ++i) {
    const T* arow = A[i];
    T* crow = C[i];
    for (int p = 0; p < k; ++p) {
      T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = B[p];
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T, shapes (m x k)(n x k).
template <typename T>
void gemm_nt_acc(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
  assert(A.cols == B.cols && A.rows == C.rows && B.rows == C.cols);
  const int m = A.rows, k = A.cols, n = B.rows;
  for (int i = 0; i < m; ++i) {
    const T* arow = A[i];
    T* crow = C[i];
    for (int j = 0; j < n; ++j) {
      const T* brow = B[j];
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C += A^T * B, shapes (k x m)(k x n).
template <typename T>
void gemm_tn_acc(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
  assert(A.rows == B.rows && A.cols == C.rows && B.cols == C.cols);
  const int k = A.rows, m = A.cols, n = B.cols;
  for (int p = 0; p < k; ++p) {
    const T* arow = A[p];
    const T* brow = B[p];
    for (int i = 0; i < m; ++i) {
      T av = arow[i];
      if (av == T(0)) continue;
      T* crow = C[i];
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
Mat<T> matmul_value(const Mat<T>& A, const Mat<T>& B, bool trans_a = false,
                    bool trans_b = false) {
  int m = trans_a ? A.cols : A.rows;
  int ka = trans_a ? A.rows : A.cols;
  int kb = trans_b ? B.cols : B.rows;
  int n = trans_b ? B.rows : B.cols;
  if (ka != kb) throw std::invalid_argument("matmul: inner dim mismatch");
  Mat<T> C(m, n);
  if (!trans_a && !trans_b) {
    gemm_nn_acc(A, B, C);
  } else if (!trans_a && trans_b) {
    gemm_nt_acc(A, B, C);
  } else if (trans_a && !trans_b) {
    gemm_tn_acc(A, B, C);
  } else {
    // A^T * B^T: rare; compute explicitly.
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        T acc = T(0);
        for (int p = 0; p < ka; ++p) acc += A.at(p, i) * B.at(j, p);
        C.at(i, j) = acc;
      }
  }
  return C;
}

}  // namespace chronotoken
