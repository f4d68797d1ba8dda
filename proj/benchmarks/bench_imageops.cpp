#include <benchmark/benchmark.h>

#include <optional>

#include "otobias/imageops.hpp"

namespace {

otobias::ImageBuffer gradient(std::size_t side) {
  otobias::ImageBuffer img(side, side, otobias::Rgb{});
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      img.set(x, y, {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y), static_cast<std::uint8_t>(x ^ y)});
    }
  }
  return img;
}

void BM_HsvFeatures(benchmark::State& state) {
  const auto img = gradient(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(otobias::hsv_features(img));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(img.pixel_count()));
}
BENCHMARK(BM_HsvFeatures)->Arg(384)->Arg(1024);

void BM_EclipseMask(benchmark::State& state) {
  const auto img = gradient(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(otobias::eclipse_mask(img, {0.9, std::nullopt}));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(img.pixel_count()));
}
BENCHMARK(BM_EclipseMask)->Arg(384)->Arg(1024);

}  // namespace
