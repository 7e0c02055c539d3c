#include <benchmark/benchmark.h>

#include "fedala/ala.hpp"
#include "fedala/data.hpp"
#include "fedala/runtime.hpp"

namespace {

using namespace fedala;

ModelArch headline_arch(std::size_t hidden) {
  ModelArch a;
  a.kind = ArchKind::kMlp1Hidden;
  a.input_dim = 32;
  a.hidden_dim = hidden;
  a.num_classes = 10;
  return a;
}

AggregationWeights half_weights(const ModelArch& arch, int p) {
  AlaConfig cfg;
  cfg.p = p;
  AggregationWeights w = ala_init_state(arch, cfg).weights;
  for (auto& t : w.tensors)
    for (auto& v : t.data) v = 0.5;
  return w;
}

void BM_Interpolate(benchmark::State& state) {
  const ModelArch arch = headline_arch(static_cast<std::size_t>(state.range(0)));
  const ModelParams local = init_params(arch, 1), global = init_params(arch, 2);
  const AggregationWeights w = half_weights(arch, 2);
  for (auto _ : state) benchmark::DoNotOptimize(interpolate(local, global, w));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(local.num_parameters()));
}
BENCHMARK(BM_Interpolate)->Arg(32)->Arg(128)->Arg(512);

void BM_AlaWeightGradient(benchmark::State& state) {
  const ModelArch arch = headline_arch(32);
  const ModelParams local = init_params(arch, 1), global = init_params(arch, 2);
  const AggregationWeights w = half_weights(arch, static_cast<int>(state.range(0)));
  const Dataset d = gen_synthetic(10, 32, 1, 3.0, 3);
  const Batch b = as_batch(d);
  for (auto _ : state) benchmark::DoNotOptimize(ala_weight_gradient(arch, local, global, w, b));
}
BENCHMARK(BM_AlaWeightGradient)->Arg(1)->Arg(2);

void BM_RunRound(benchmark::State& state) {
  const ModelArch arch = headline_arch(32);
  const Dataset d = gen_synthetic(10, 32, 200, 3.0, 3);
  PartitionConfig pc;
  pc.num_clients = 20;
  pc.seed = 3;
  std::vector<ClientSplit> splits;
  std::uint64_t s = 0;
  for (const Dataset& part : partition(d, pc)) splits.push_back(split_client(part, 0.25, ++s));
  FlConfig cfg;
  cfg.strategy.kind = state.range(0) ? StrategyKind::kFedAla : StrategyKind::kFedAvg;
  if (state.range(0)) cfg.ala = AlaConfig{};
  const ModelParams server = init_params(arch, 3);
  std::vector<ClientState> clients = make_clients(splits, server, arch, cfg);
  // Round 3 is past the initial stage, so this times the steady-state round.
  for (auto _ : state) {
    state.PauseTiming();
    std::vector<ClientState> copy = clients;
    for (auto& c : copy)
      if (c.ala_state) c.ala_state->initialized = true;
    state.ResumeTiming();
    benchmark::DoNotOptimize(run_round(server, copy, arch, cfg, 3));
  }
}
BENCHMARK(BM_RunRound)->Arg(0)->Arg(1)->ArgName("fedala")->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
