#include <benchmark/benchmark.h>

#include <vector>

#include "proxytr/datagen.hpp"
#include "proxytr/geometry.hpp"
#include "proxytr/metrics.hpp"
#include "proxytr/model.hpp"
#include "proxytr/training.hpp"

using namespace proxytr;

namespace {

std::vector<Point3> cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point3> pts(n);
  for (auto& p : pts) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  return pts;
}

void BM_Fps(benchmark::State& state) {
  const auto pts = cloud(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(fps(pts, pts.size() / 8));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Fps)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void BM_KnnGrid(benchmark::State& state) {
  const auto ref = cloud(static_cast<std::size_t>(state.range(0)), 2);
  const auto queries = cloud(256, 3);
  for (auto _ : state) benchmark::DoNotOptimize(knn(ref, queries, 16));
}
BENCHMARK(BM_KnnGrid)->RangeMultiplier(4)->Range(256, 16384);

void BM_KnnBrute(benchmark::State& state) {
  const auto ref = cloud(static_cast<std::size_t>(state.range(0)), 2);
  const auto queries = cloud(256, 3);
  for (auto _ : state) benchmark::DoNotOptimize(knn_brute_force(ref, queries, 16));
}
BENCHMARK(BM_KnnBrute)->RangeMultiplier(4)->Range(256, 16384);

void BM_Chamfer(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const PointCloud a(cloud(n, 4)), b(cloud(n, 5));
  for (auto _ : state) benchmark::DoNotOptimize(chamfer(a, b, ChamferPreset::cd_l2));
}
BENCHMARK(BM_Chamfer)->RangeMultiplier(4)->Range(1024, 16384);

PointCloud desk_partial() {
  Rng rng(6);
  const PointCloud full = make_primitive(PrimitiveKind::box, {0.8, 0.5, 0.3}, 1024, rng);
  return crop_partial(full, {0, 0, 1}, 512, ModelConfig::desk().input_points, rng).partial;
}

void BM_DeskInference(benchmark::State& state) {
  const CompletionModel<float> model(ModelConfig::desk(), 7);
  const PointCloud partial = desk_partial();
  for (auto _ : state) benchmark::DoNotOptimize(model.complete(partial));
}
BENCHMARK(BM_DeskInference)->Unit(benchmark::kMillisecond);

void BM_DeskTrainStep(benchmark::State& state) {
  TrainingSet data;
  for (std::size_t i = 0; i < 8; ++i) {
    Rng rng = Rng::derive(8, i);
    const auto kind = static_cast<PrimitiveKind>(i % 3);
    data.completes.push_back(make_primitive(kind, random_params(kind, rng), 1024, rng));
  }
  TrainConfig tc = TrainConfig::desk();
  tc.denoise = state.range(0) != 0;
  Trainer<float> trainer(ModelConfig::desk(), tc, 9);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(data));
}
BENCHMARK(BM_DeskTrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
