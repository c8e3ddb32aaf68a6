#include <omp.h>

#include <algorithm>

#include "pep/kernels.hpp"
#include "pep/parallel.hpp"

namespace pep::kernels {

namespace omp {

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(M);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
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
  const auto rows = static_cast<std::ptrdiff_t>(M);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
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
  const auto rows = static_cast<std::ptrdiff_t>(M);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* c = C + i * N;
    if (!accumulate) std::fill(c, c + N, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double aki = A[k * M + i];
      const double* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += aki * b[j];
    }
  }
}

}  // namespace omp

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 16;

bool go_parallel(std::size_t M, std::size_t N, std::size_t K) {
  return num_threads() > 1 && !omp_in_parallel() && M > 1 &&
         M * N * K >= kParallelWork;
}
}  // namespace

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate) {
  if (go_parallel(M, N, K))
    omp::gemm_nn(M, N, K, A, B, C, accumulate);
  else
    serial::gemm_nn(M, N, K, A, B, C, accumulate);
}

void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate) {
  if (go_parallel(M, N, K))
    omp::gemm_nt(M, N, K, A, B, C, accumulate);
  else
    serial::gemm_nt(M, N, K, A, B, C, accumulate);
}

void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate) {
  if (go_parallel(M, N, K))
    omp::gemm_tn(M, N, K, A, B, C, accumulate);
  else
    serial::gemm_tn(M, N, K, A, B, C, accumulate);
}

}  // namespace pep::kernels
