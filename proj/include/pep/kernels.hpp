#pragma once

// Dense kernels used by the encoder, the pairwise heads and the downstream
// classifiers. All matrices are row-major; leading dimensions equal the
// logical column counts.
//
// `serial` is the reference implementation. `omp` partitions the output rows
// across threads; every output element is accumulated in the same order as
// the reference, so both variants agree bitwise.

#include <cstddef>

namespace pep::kernels {

namespace serial {

// C[M,N] (+)= A[M,K] * B[K,N]
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate);
// C[M,N] (+)= A[M,K] * B[N,K]^T
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate);
// C[M,N] (+)= A[K,M]^T * B[K,N]
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate);

}  // namespace serial

namespace omp {

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate);
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate);
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate);

}  // namespace omp

// Dispatch: the OpenMP variant when more than one thread is configured and the
// product is large enough to amortize a parallel region, otherwise serial.
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate = false);
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate = false);
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A,
             const double* B, double* C, bool accumulate = false);

}  // namespace pep::kernels
