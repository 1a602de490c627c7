// Serial reference vs OpenMP kernels on HSIC-sized inputs.

#include <numeric>
#include <random>

#include <benchmark/benchmark.h>

#include "canm/kernels.hpp"
#include "canm/rng.hpp"

using namespace canm;
using namespace canm::kernels;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {stream::bench}));
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  for (auto& a : v) a = z(rng);
  return v;
}

std::vector<Permutation> perms(std::size_t n, std::size_t count) {
  Rng rng(derive_seed(1, {stream::bench, 1}));
  std::vector<Permutation> out(count, Permutation(n));
  for (auto& p : out) {
    std::iota(p.begin(), p.end(), 0u);
    std::shuffle(p.begin(), p.end(), rng);
  }
  return out;
}

template <bool Parallel>
void BM_gram(benchmark::State& state) {
  const auto x = normals(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    Matrix k = Parallel ? parallel::gaussian_gram(x, x, 1.0) : serial::gaussian_gram(x, x, 1.0);
    benchmark::DoNotOptimize(k.data());
  }
}

template <bool Parallel>
void BM_center(benchmark::State& state) {
  const auto x = normals(static_cast<std::size_t>(state.range(0)), 2);
  const Matrix k0 = serial::gaussian_gram(x, x, 1.0);
  for (auto _ : state) {
    Matrix k = k0;
    Parallel ? parallel::center(k) : serial::center(k);
    benchmark::DoNotOptimize(k.data());
  }
}

template <bool Parallel>
void BM_permuted_dots(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto x = normals(n, 3), y = normals(n, 4);
  Matrix k = serial::gaussian_gram(x, x, 1.0), l = serial::gaussian_gram(y, y, 1.0);
  serial::center(k);
  serial::center(l);
  const auto p = perms(n, 20);
  for (auto _ : state) {
    auto d = Parallel ? parallel::permuted_dots(k, l, p) : serial::permuted_dots(k, l, p);
    benchmark::DoNotOptimize(d.data());
  }
}

}  // namespace

BENCHMARK(BM_gram<false>)->Arg(500)->Arg(2000);
BENCHMARK(BM_gram<true>)->Arg(500)->Arg(2000);
BENCHMARK(BM_center<false>)->Arg(500)->Arg(2000);
BENCHMARK(BM_center<true>)->Arg(500)->Arg(2000);
BENCHMARK(BM_permuted_dots<false>)->Arg(500)->Arg(2000);
BENCHMARK(BM_permuted_dots<true>)->Arg(500)->Arg(2000);

BENCHMARK_MAIN();
