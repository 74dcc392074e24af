#include "event_net/simulator.hpp"

#include <benchmark/benchmark.h>

namespace {

event_net::NetworkConfig ten_loop_network(int replications) {
  event_net::NetworkConfig net;
  event_net::LoopConfig loop;
  loop.plant = event_net::PlantModel::scalar(1.0, 1.0, 1.0, 1.0);
  loop.policy = event_net::TriggerPolicy::probabilities({0.3171, 0.5138});
  loop.cost = event_net::CostConfig::state_only(1, 1);
  net.loops.assign(10, loop);
  net.crm.retransmissions = 5;
  net.crm.persistence.assign(5, 0.2);
  net.crm.slots_per_sample = 5;
  net.burn_in = 100;
  net.horizon = 5100;
  net.replications = replications;
  net.seed = 7;
  return net;
}

void bm_serial(benchmark::State& state) {
  const auto net = ten_loop_network(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(event_net::run_serial(net));
  state.SetItemsProcessed(state.iterations() * state.range(0) * (net.horizon));
}

void bm_parallel(benchmark::State& state) {
  const auto net = ten_loop_network(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(event_net::run(net));
  state.SetItemsProcessed(state.iterations() * state.range(0) * (net.horizon));
}

}  // namespace

BENCHMARK(bm_serial)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_parallel)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
