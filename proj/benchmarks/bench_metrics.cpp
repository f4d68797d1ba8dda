#include <benchmark/benchmark.h>

#include <vector>

#include "otobias/metrics.hpp"
#include "otobias/rng.hpp"

namespace {

void make_scores(std::size_t n, std::vector<double>& s, std::vector<int>& l) {
  otobias::Rng rng(n);
  s.resize(n);
  l.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    l[i] = static_cast<int>(i % 2);
    s[i] = rng.normal() + 0.8 * l[i];
  }
}

void BM_Auc(benchmark::State& state) {
  std::vector<double> s;
  std::vector<int> l;
  make_scores(static_cast<std::size_t>(state.range(0)), s, l);
  for (auto _ : state) benchmark::DoNotOptimize(otobias::auc(s, l));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Auc)->RangeMultiplier(10)->Range(100, 1000000)->Complexity();

void BM_DelongCi(benchmark::State& state) {
  std::vector<double> s;
  std::vector<int> l;
  make_scores(static_cast<std::size_t>(state.range(0)), s, l);
  for (auto _ : state) benchmark::DoNotOptimize(otobias::delong_ci(s, l));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DelongCi)->RangeMultiplier(10)->Range(100, 1000000)->Complexity();

}  // namespace
