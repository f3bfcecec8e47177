// Serial reference vs OpenMP kernel timings.
#include <benchmark/benchmark.h>

#include <numeric>

#include "urfclust/pipeline.hpp"

using namespace urfclust;

namespace {

const FeatureMatrix& scenario_rows(std::size_t per_template) {
  static std::map<std::size_t, FeatureMatrix> cache;
  auto it = cache.find(per_template);
  if (it == cache.end()) it = cache.emplace(per_template, synthesize("scenario:" + std::to_string(per_template), 7)).first;
  return it->second;
}

ForestConfig bench_config() {
  ForestConfig c;
  c.tree_count = 100;
  c.i_min = 0.29;
  c.seed = 3;
  return c;
}

void BM_TrainSerial(benchmark::State& state) {
  const auto& m = scenario_rows(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::train_forest_serial(m, bench_config()));
}

void BM_TrainParallel(benchmark::State& state) {
  const auto& m = scenario_rows(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(train_forest(m, bench_config()));
}

void BM_ProximitySerial(benchmark::State& state) {
  const auto& m = scenario_rows(static_cast<std::size_t>(state.range(0)));
  const auto forest = train_forest(m, bench_config());
  for (auto _ : state) benchmark::DoNotOptimize(reference::build_proximity_serial(forest, m, {}));
}

void BM_ProximityParallel(benchmark::State& state) {
  const auto& m = scenario_rows(static_cast<std::size_t>(state.range(0)));
  const auto forest = train_forest(m, bench_config());
  for (auto _ : state) benchmark::DoNotOptimize(build_proximity(forest, m, {}));
}

struct RenderInput {
  ProximityMatrix p;
  std::vector<std::size_t> order;
};

RenderInput render_input(std::size_t per_template) {
  const auto& m = scenario_rows(per_template);
  auto p = build_proximity(train_forest(m, bench_config()), m, {});
  std::vector<std::size_t> order(m.rows());
  std::iota(order.begin(), order.end(), 0);
  return {std::move(p), std::move(order)};
}

void BM_RenderSerial(benchmark::State& state) {
  const auto in = render_input(static_cast<std::size_t>(state.range(0)));
  const auto cmap = Colormap::parula();
  const Window w{0, 0, in.p.size(), in.p.size()};
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::render_window_serial(in.p, in.order, w, 512, Reducer::mean, cmap));
}

void BM_RenderParallel(benchmark::State& state) {
  const auto in = render_input(static_cast<std::size_t>(state.range(0)));
  const auto cmap = Colormap::parula();
  const Window w{0, 0, in.p.size(), in.p.size()};
  for (auto _ : state) benchmark::DoNotOptimize(render_window(in.p, in.order, w, 512, Reducer::mean, cmap));
}

}  // namespace

BENCHMARK(BM_TrainSerial)->Arg(200)->Arg(600)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainParallel)->Arg(200)->Arg(600)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProximitySerial)->Arg(200)->Arg(600)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProximityParallel)->Arg(200)->Arg(600)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderSerial)->Arg(600)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderParallel)->Arg(600)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
