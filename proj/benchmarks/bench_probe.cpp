#include <benchmark/benchmark.h>

#include <cmath>
#include <string>
#include <vector>

#include "otobias/probe.hpp"
#include "otobias/rng.hpp"

namespace {

void BM_FitLogistic(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t p = 6;
  otobias::Rng rng(7);
  std::vector<double> x(n * p);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double eta = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      x[i * p + j] = 100.0 + 20.0 * rng.normal();
      eta += 0.02 * (x[i * p + j] - 100.0);
    }
    y[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1 : 0;
  }
  const otobias::FeatureMatrix fm({"a", "b", "c", "d", "e", "f"}, x, y);
  for (auto _ : state) benchmark::DoNotOptimize(otobias::fit_logistic(fm));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FitLogistic)->RangeMultiplier(10)->Range(100, 100000)->Complexity();

}  // namespace
