#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqop {

/// Dense row-major matrix. float is the training precision; double
/// instantiations exist for tight gradient checks and the FE solvers.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> d;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), d(static_cast<std::size_t>(r) * c, T(0)) {}

  T* data() { return d.data(); }
  const T* data() const { return d.data(); }
  std::size_t size() const { return d.size(); }

  T& operator()(int i, int j) { return d[static_cast<std::size_t>(i) * cols + j]; }
  T operator()(int i, int j) const { return d[static_cast<std::size_t>(i) * cols + j]; }

  T* row(int i) { return d.data() + static_cast<std::size_t>(i) * cols; }
  const T* row(int i) const { return d.data() + static_cast<std::size_t>(i) * cols; }

  void resize(int r, int c) {
    rows = r;
    cols = c;
    d.assign(static_cast<std::size_t>(r) * c, T(0));
  }
  void zero() { std::fill(d.begin(), d.end(), T(0)); }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

/// C = alpha * op(A) * op(B) + beta * C, dispatched to BLAS.
/// Shapes are validated; mismatches throw with the offending dimensions.
template <typename T>
void gemm(bool trans_a, bool trans_b, T alpha, const Mat<T>& A, const Mat<T>& B, T beta,
          Mat<T>& C);

/// Raw strided GEMM over row-major buffers, for views into larger matrices
/// (e.g. one gate block of a recurrent weight matrix).
template <typename T>
void gemm_raw(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
              const T* b, int ldb, T beta, T* c, int ldc);

/// One cap for BLAS and OpenMP worker counts. force_sequential pins
/// everything to a single thread for bitwise reproducibility.
void set_compute_threads(int n);
void force_sequential_compute();

template <typename T>
bool all_finite(const T* p, std::size_t n);

[[noreturn]] inline void shape_error(const std::string& what) {
  throw std::invalid_argument("shape mismatch: " + what);
}

}  // namespace seqop
