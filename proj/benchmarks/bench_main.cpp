#include <random>

#include <benchmark/benchmark.h>

#include "fedcl/channel.hpp"
#include "fedcl/config.hpp"
#include "fedcl/experiment.hpp"
#include "fedcl/layers.hpp"
#include "fedcl/protocol.hpp"

using namespace fedcl;

namespace {

Tensor batch(std::size_t rows, std::size_t cols) {
  std::mt19937_64 rng(0);
  std::normal_distribution<double> n;
  Tensor t({rows, cols});
  for (double& v : t.data()) v = n(rng);
  return t;
}

void BM_AffineForward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const AffineLayer layer = AffineLayer::glorot(d, d, rng);
  const Tensor x = batch(32, d);
  for (auto _ : state) benchmark::DoNotOptimize(affine_forward(x, layer));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_AffineForward)->Arg(16)->Arg(64)->Arg(256);

void BM_TransmitRows(benchmark::State& state) {
  const Tensor x = batch(32, static_cast<std::size_t>(state.range(0)));
  Rng rng(2);
  const channel::ChannelConfig cfg{5.0};
  for (auto _ : state) benchmark::DoNotOptimize(channel::transmit_rows(x, cfg, rng));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_TransmitRows)->Arg(64)->Arg(256);

void BM_Round(benchmark::State& state) {
  ExperimentConfig cfg;
  cfg.scheme = static_cast<protocol::Scheme>(state.range(0));
  protocol::TrainingSetup setup = build_setup(cfg);
  std::size_t t = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(protocol::run_round(setup.clients, setup.server, setup.settings, t++));
  }
}
BENCHMARK(BM_Round)
    ->Arg(static_cast<int>(protocol::Scheme::fedcl))
    ->Arg(static_cast<int>(protocol::Scheme::fedproto))
    ->Arg(static_cast<int>(protocol::Scheme::vanilla));

}  // namespace

BENCHMARK_MAIN();
