#include <benchmark/benchmark.h>

#include <random>

#include "pddn/aggregator.hpp"
#include "pddn/layers.hpp"
#include "pddn/model.hpp"
#include "pddn/synth.hpp"

namespace {

using namespace pddn;

Volume3D noise_volume(int n, std::uint64_t seed) {
  Volume3D v(Dims{n, n, n});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (double& x : v.data) x = normal(rng);
  return v;
}

void BM_Conv3dForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int c = static_cast<int>(state.range(1));
  std::mt19937_64 rng(1);
  Conv3d conv(c, c);
  conv.init(rng);
  Grid in(c, Dims{n, n, n});
  std::normal_distribution<double> normal;
  for (double& x : in.data) x = normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv3d_forward(in, conv));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(conv_output_dims(in.dims).voxels()));
}
BENCHMARK(BM_Conv3dForward)->Args({16, 8})->Args({32, 1})->Args({32, 8});

void BM_Conv3dBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  Conv3d conv(8, 8);
  conv.init(rng);
  Grid in(8, Dims{n, n, n});
  std::normal_distribution<double> normal;
  for (double& x : in.data) x = normal(rng);
  Grid g = conv3d_forward(in, conv);
  for (double& x : g.data) x = normal(rng);
  Grid grad_in;
  for (auto _ : state) {
    conv3d_backward(in, g, conv, &grad_in);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_Conv3dBackward)->Arg(16)->Arg(32);

void BM_RegionPool(benchmark::State& state) {
  SynthConfig cfg;
  const int n = static_cast<int>(state.range(0));
  cfg.dims = Dims{n, n, n};
  const SynthAtlas atlas = make_synth_atlas(cfg);
  const Volume3D v = noise_volume(n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(region_average_pool(v, atlas.atlas));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(v.data.size() * sizeof(double)));
}
BENCHMARK(BM_RegionPool)->Arg(32)->Arg(64);

void BM_PredictSubject(benchmark::State& state) {
  SynthConfig cfg;
  const SynthAtlas atlas = make_synth_atlas(cfg);
  const Volume3D v = noise_volume(32, 4);
  ModelInit init;
  init.channels = static_cast<int>(state.range(0));
  const ModelParams model = init_model(init);
  const AggregatedFeature agg = aggregate_subject(v, atlas.atlas, atlas.table);
  const AgingPriorParams prior;
  for (auto _ : state) benchmark::DoNotOptimize(predict_subject(model, v, agg, 65.0, prior));
}
BENCHMARK(BM_PredictSubject)->Arg(8)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
