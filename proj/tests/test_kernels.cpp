#include <gtest/gtest.h>

#include <random>

#include "pep/kernels.hpp"
#include "pep/parallel.hpp"

namespace k = pep::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

// C = op(A) op(B) by explicit index arithmetic.
std::vector<double> naive(char form, std::size_t M, std::size_t N, std::size_t K,
                          const std::vector<double>& A, const std::vector<double>& B) {
  std::vector<double> C(M * N, 0.0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t p = 0; p < K; ++p) {
        const double a = form == 't' ? A[p * M + i] : A[i * K + p];
        const double b = form == 'n' ? B[p * N + j] : form == 'T' ? B[j * K + p] : B[p * N + j];
        C[i * N + j] += a * b;
      }
  return C;
}

}  // namespace

TEST(Kernels, SerialMatchesNaive) {
  const std::size_t M = 7, N = 5, K = 9;
  const auto A = random_vec(M * K, 1), B = random_vec(K * N, 2), Bt = random_vec(N * K, 3);
  std::vector<double> C(M * N);
  k::serial::gemm_nn(M, N, K, A.data(), B.data(), C.data(), false);
  auto ref = naive('n', M, N, K, A, B);
  for (std::size_t i = 0; i < C.size(); ++i) EXPECT_NEAR(C[i], ref[i], 1e-12);

  k::serial::gemm_nt(M, N, K, A.data(), Bt.data(), C.data(), false);
  ref = naive('T', M, N, K, A, Bt);
  for (std::size_t i = 0; i < C.size(); ++i) EXPECT_NEAR(C[i], ref[i], 1e-12);

  const auto At = random_vec(K * M, 4);
  k::serial::gemm_tn(M, N, K, At.data(), B.data(), C.data(), false);
  ref = naive('t', M, N, K, At, B);
  for (std::size_t i = 0; i < C.size(); ++i) EXPECT_NEAR(C[i], ref[i], 1e-12);
}

TEST(Kernels, AccumulateAddsToExisting) {
  const std::size_t M = 3, N = 4, K = 2;
  const auto A = random_vec(M * K, 5), B = random_vec(K * N, 6);
  std::vector<double> C(M * N, 1.5), D(M * N);
  k::serial::gemm_nn(M, N, K, A.data(), B.data(), C.data(), true);
  k::serial::gemm_nn(M, N, K, A.data(), B.data(), D.data(), false);
  for (std::size_t i = 0; i < C.size(); ++i) EXPECT_DOUBLE_EQ(C[i], D[i] + 1.5);
}

TEST(Kernels, OpenMpAgreesBitwiseWithSerial) {
  pep::set_num_threads(4);
  const std::size_t M = 67, N = 45, K = 33;
  const auto A = random_vec(M * K, 7), B = random_vec(K * N, 8), Bt = random_vec(N * K, 9),
             At = random_vec(K * M, 10);
  std::vector<double> s(M * N), o(M * N);
  k::serial::gemm_nn(M, N, K, A.data(), B.data(), s.data(), false);
  k::omp::gemm_nn(M, N, K, A.data(), B.data(), o.data(), false);
  EXPECT_EQ(s, o);
  k::serial::gemm_nt(M, N, K, A.data(), Bt.data(), s.data(), false);
  k::omp::gemm_nt(M, N, K, A.data(), Bt.data(), o.data(), false);
  EXPECT_EQ(s, o);
  k::serial::gemm_tn(M, N, K, At.data(), B.data(), s.data(), false);
  k::omp::gemm_tn(M, N, K, At.data(), B.data(), o.data(), false);
  EXPECT_EQ(s, o);
  k::gemm_nn(M, N, K, A.data(), B.data(), o.data());
  k::serial::gemm_nn(M, N, K, A.data(), B.data(), s.data(), false);
  EXPECT_EQ(s, o);
  pep::set_num_threads(1);
}

TEST(Kernels, ThreadCountClamped) {
  pep::set_num_threads(0);
  EXPECT_EQ(pep::num_threads(), 1);
  pep::set_num_threads(3);
  EXPECT_EQ(pep::num_threads(), 3);
  pep::set_num_threads(1);
}
