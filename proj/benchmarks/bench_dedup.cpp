#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "otobias/dedup.hpp"
#include "otobias/rng.hpp"

namespace {

// Clusters of five jittered copies around random centers, 768-d.
otobias::EmbeddingSet corpus(std::size_t n) {
  const std::size_t dim = 768;
  otobias::Rng rng(11);
  std::vector<std::string> ids;
  std::vector<double> values;
  std::vector<double> center(dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 5 == 0) {
      for (auto& c : center) c = rng.normal();
    }
    ids.push_back("img" + std::to_string(i));
    for (std::size_t d = 0; d < dim; ++d) values.push_back(center[d] + 0.05 * rng.normal());
  }
  return otobias::EmbeddingSet(dim, ids, values, true);
}

void BM_Cluster(benchmark::State& state) {
  const auto e = corpus(static_cast<std::size_t>(state.range(0)));
  const auto jobs = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(otobias::cluster(e, {0.05}, nullptr, jobs));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Cluster)->Args({500, 1})->Args({2000, 1})->Args({2000, 4})->Unit(benchmark::kMillisecond);

}  // namespace
