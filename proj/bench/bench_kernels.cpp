// Serial reference kernels against their OpenMP versions on a small synthetic city.
// Pass --benchmark_filter to pick kernels; OMP_NUM_THREADS sets the parallel width.

#include <benchmark/benchmark.h>

#include <random>

#include "povmap/serial/reference.hpp"
#include "povmap/synth.hpp"

using namespace povmap;

namespace {

const SynthCity& city() {
  static const SynthCity c = synth_city({3, 8, 25, 0.2});
  return c;
}

const ImageEncoder<float>& encoder() {
  static const ImageEncoder<float> e = [] {
    EncoderConfig cfg;
    cfg.seed = 5;
    return ImageEncoder<float>::init(cfg);
  }();
  return e;
}

void warm() {
  city();
  encoder();
}

struct ForestData {
  FeatureMatrix x;
  std::vector<double> y;
};

const ForestData& forest_data() {
  static const ForestData d = [] {
    ForestData f{FeatureMatrix(400, 24), std::vector<double>(400)};
    std::mt19937_64 g(9);
    std::normal_distribution<double> n;
    for (Eigen::Index i = 0; i < f.x.size(); ++i) f.x.data()[i] = n(g);
    for (int i = 0; i < 400; ++i) f.y[i] = f.x(i, 3) + 0.5 * f.x(i, 7) * f.x(i, 1) + 0.1 * n(g);
    return f;
  }();
  return d;
}

void BM_EncodeTiles_Parallel(benchmark::State& s) {
  warm();
  for (auto _ : s) benchmark::DoNotOptimize(encode_tiles(encoder(), city().bundle.tiles));
}
void BM_EncodeTiles_Serial(benchmark::State& s) {
  warm();
  for (auto _ : s) benchmark::DoNotOptimize(serial::encode_tiles(encoder(), city().bundle.tiles));
}
void BM_BuildAll_Parallel(benchmark::State& s) {
  warm();
  for (auto _ : s) benchmark::DoNotOptimize(build_all(city().bundle));
}
void BM_BuildAll_Serial(benchmark::State& s) {
  warm();
  for (auto _ : s) benchmark::DoNotOptimize(serial::build_all(city().bundle));
}
void BM_AdjustDataset_Parallel(benchmark::State& s) {
  warm();
  for (auto _ : s) benchmark::DoNotOptimize(adjust_dataset(city().bundle.tiles, encoder(), 0.3));
}
void BM_AdjustDataset_Serial(benchmark::State& s) {
  warm();
  for (auto _ : s) benchmark::DoNotOptimize(serial::adjust_dataset(city().bundle.tiles, encoder(), 0.3));
}
void BM_FitForest_Parallel(benchmark::State& s) {
  const auto& d = forest_data();
  for (auto _ : s) {
    RandomForest f;
    f.fit(d.x, d.y, 1);
    benchmark::DoNotOptimize(f);
  }
}
void BM_FitForest_Serial(benchmark::State& s) {
  const auto& d = forest_data();
  for (auto _ : s) benchmark::DoNotOptimize(serial::fit_forest(d.x, d.y, 1));
}

}  // namespace

BENCHMARK(BM_EncodeTiles_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncodeTiles_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BuildAll_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BuildAll_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AdjustDataset_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AdjustDataset_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitForest_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitForest_Parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
