// Serial reference kernels against their OpenMP counterparts, plus the batch
// encoder forward at one and at all available threads.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>

#include "pep/encoder.hpp"
#include "pep/kernels.hpp"
#include "pep/parallel.hpp"

namespace k = pep::kernels;

namespace {

std::vector<double> random_vec(std::size_t n) {
  std::mt19937_64 rng(n);
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto A = random_vec(n * n), B = random_vec(n * n);
  std::vector<double> C(n * n);
  pep::set_num_threads(omp_get_num_procs());
  for (auto _ : state) {
    Gemm(n, n, n, A.data(), B.data(), C.data(), false);
    benchmark::DoNotOptimize(C.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
  pep::set_num_threads(1);
}

BENCHMARK(BM_Gemm<k::serial::gemm_nn>)->Name("gemm_nn/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_Gemm<k::omp::gemm_nn>)->Name("gemm_nn/omp")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_Gemm<k::serial::gemm_nt>)->Name("gemm_nt/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_Gemm<k::omp::gemm_nt>)->Name("gemm_nt/omp")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_Gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_Gemm<k::omp::gemm_tn>)->Name("gemm_tn/omp")->RangeMultiplier(2)->Range(64, 512);

void BM_Forward(benchmark::State& state) {
  const int threads = state.range(0) == 0 ? omp_get_num_procs() : static_cast<int>(state.range(0));
  pep::EncoderParams params(pep::EncoderConfig::desk(2000));
  params.init_random(1);
  std::mt19937_64 rng(2);
  std::vector<pep::TokenSequence> batch(32);
  for (auto& s : batch) {
    s.ids = {pep::kCls};
    for (int i = 0; i < 40; ++i) s.ids.push_back(static_cast<pep::TokenId>(7 + rng() % 1993));
    s.ids.push_back(pep::kSep);
  }
  pep::set_num_threads(threads);
  for (auto _ : state) benchmark::DoNotOptimize(pep::forward(batch, params));
  state.SetItemsProcessed(state.iterations() * 32);
  state.counters["threads"] = threads;
  pep::set_num_threads(1);
}

// 1 = serial; 0 = every available core.
BENCHMARK(BM_Forward)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
