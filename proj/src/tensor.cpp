#include "seqop/tensor.hpp"

#include <cblas.h>
#include <omp.h>

extern "C" void openblas_set_num_threads(int);

namespace seqop {

template <>
void gemm_raw<float>(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                     const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <>
void gemm_raw<double>(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
                      int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
void gemm(bool ta, bool tb, T alpha, const Mat<T>& A, const Mat<T>& B, T beta, Mat<T>& C) {
  const int m = ta ? A.cols : A.rows;
  const int ka = ta ? A.rows : A.cols;
  const int kb = tb ? B.cols : B.rows;
  const int n = tb ? B.rows : B.cols;
  if (ka != kb || C.rows != m || C.cols != n) {
    shape_error("gemm A[" + std::to_string(A.rows) + "x" + std::to_string(A.cols) + (ta ? "^T" : "") +
                "] * B[" + std::to_string(B.rows) + "x" + std::to_string(B.cols) + (tb ? "^T" : "") +
                "] -> C[" + std::to_string(C.rows) + "x" + std::to_string(C.cols) + "]");
  }
  gemm_raw<T>(ta, tb, m, n, ka, alpha, A.data(), A.cols, B.data(), B.cols, beta, C.data(), C.cols);
}

template void gemm<float>(bool, bool, float, const MatF&, const MatF&, float, MatF&);
template void gemm<double>(bool, bool, double, const MatD&, const MatD&, double, MatD&);

void set_compute_threads(int n) {
  if (n < 1) n = 1;
  openblas_set_num_threads(n);
  omp_set_num_threads(n);
}

void force_sequential_compute() { set_compute_threads(1); }

template <typename T>
bool all_finite(const T* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

template bool all_finite<float>(const float*, std::size_t);
template bool all_finite<double>(const double*, std::size_t);

}  // namespace seqop
