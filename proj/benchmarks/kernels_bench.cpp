// Serial reference vs OpenMP kernels at model-sized shapes.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "m3sot/kernels.hpp"

namespace k = m3sot::kernels;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <bool Omp>
void BM_matmul(benchmark::State& st) {
  const std::size_t n = st.range(0);
  const auto a = noise(n * 128, 1), b = noise(128 * 128, 2);
  std::vector<double> c(n * 128);
  for (auto _ : st) {
    if constexpr (Omp) k::matmul(a, b, c, n, 128, 128);
    else k::serial::matmul(a, b, c, n, 128, 128);
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(st.iterations() * n * 128 * 128);
}

// attention scores: rows × rows
template <bool Omp>
void BM_matmul_nt(benchmark::State& st) {
  const std::size_t n = st.range(0);
  const auto a = noise(n * 32, 3), b = noise(n * 32, 4);
  std::vector<double> c(n * n);
  for (auto _ : st) {
    if constexpr (Omp) k::matmul_nt(a, b, c, n, 32, n);
    else k::serial::matmul_nt(a, b, c, n, 32, n);
    benchmark::DoNotOptimize(c.data());
  }
}

template <bool Omp>
void BM_softmax(benchmark::State& st) {
  const std::size_t n = st.range(0);
  const auto x = noise(n * n, 5);
  std::vector<double> y(n * n);
  for (auto _ : st) {
    if constexpr (Omp) k::softmax_rows(x, y, n, n);
    else k::serial::softmax_rows(x, y, n, n);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Omp>
void BM_knn(benchmark::State& st) {
  const std::size_t n = st.range(0);
  const auto xyz = noise(n * 3, 6);
  std::vector<std::uint32_t> out(n * 16);
  for (auto _ : st) {
    if constexpr (Omp) k::knn(xyz, n, 16, out);
    else k::serial::knn(xyz, n, 16, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Omp>
void BM_edge_max(benchmark::State& st) {
  const std::size_t n = st.range(0), ch = 64, kk = 16;
  const auto a = noise(n * ch, 7), b = noise(n * ch, 8);
  std::mt19937_64 rng(9);
  std::vector<std::uint32_t> nbr(n * kk);
  for (auto& v : nbr) v = static_cast<std::uint32_t>(rng() % n);
  std::vector<double> out(n * ch);
  std::vector<std::uint32_t> arg(n * ch);
  for (auto _ : st) {
    if constexpr (Omp) k::edge_max(a, b, nbr, n, ch, kk, out, arg);
    else k::serial::edge_max(a, b, nbr, n, ch, kk, out, arg);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_matmul<false>)->Name("matmul/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_matmul<true>)->Name("matmul/omp")->Arg(256)->Arg(1024);
BENCHMARK(BM_matmul_nt<false>)->Name("matmul_nt/serial")->Arg(256)->Arg(512);
BENCHMARK(BM_matmul_nt<true>)->Name("matmul_nt/omp")->Arg(256)->Arg(512);
BENCHMARK(BM_softmax<false>)->Name("softmax/serial")->Arg(256)->Arg(512);
BENCHMARK(BM_softmax<true>)->Name("softmax/omp")->Arg(256)->Arg(512);
BENCHMARK(BM_knn<false>)->Name("knn/serial")->Arg(512)->Arg(1024);
BENCHMARK(BM_knn<true>)->Name("knn/omp")->Arg(512)->Arg(1024);
BENCHMARK(BM_edge_max<false>)->Name("edge_max/serial")->Arg(1024);
BENCHMARK(BM_edge_max<true>)->Name("edge_max/omp")->Arg(1024);

BENCHMARK_MAIN();
