#include "pep/kernels.hpp"

#include <algorithm>

namespace pep::kernels::serial {

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    double* c = C + i * N;
    if (!accumulate) std::fill(c, c + N, 0.0);
    const double* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = a[k];
      const double* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    for (std::size_t j = 0; j < N; ++j) {
      const double* b = B + j * K;
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += a[k] * b[k];
      C[i * N + j] = accumulate ? C[i * N + j] + s : s;
    }
  }
}

void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    double* c = C + i * N;
    if (!accumulate) std::fill(c, c + N, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double aki = A[k * M + i];
      const double* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += aki * b[j];
    }
  }
}

}  // namespace pep::kernels::serial
