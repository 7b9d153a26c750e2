// Serial reference vs OpenMP client loop, one federation round per iteration.
// Args: clients, dim, terms per client.

#include <benchmark/benchmark.h>

#include "fedld/federation.hpp"
#include "fedld/potentials.hpp"

using namespace fedld;

namespace {

PotentialSet make_set(const benchmark::State& state) {
  GaussianSetParams p;
  p.num_clients = static_cast<std::size_t>(state.range(0));
  p.dim = state.range(1);
  p.terms_per_client = static_cast<std::size_t>(state.range(2));
  p.term_spread = 1.0;
  p.mean_spread = 2.0;
  p.seed = 17;
  return generate_gaussian_set(p);
}

void rounds(benchmark::State& state, Execution exec, const char* rule) {
  const auto set = make_set(state);
  SamplerConfig c;
  c.rule = LocalGradientRule::parse(rule, "exact");
  c.gamma = 1e-3;
  c.p_comm = 0.2;
  c.q_cv = 0.1;
  c.tau = 0.5;
  Federation f(c, set, Vector::Zero(set.dim()), exec);
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.step());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(set.size()));
}

void args(benchmark::internal::Benchmark* b) {
  b->Args({10, 5, 10})->Args({64, 20, 50})->Args({256, 50, 100})->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK_CAPTURE(rounds, fald_serial, Execution::serial, "fald")->Apply(args);
BENCHMARK_CAPTURE(rounds, fald_parallel, Execution::parallel, "fald")->Apply(args);
BENCHMARK_CAPTURE(rounds, vr_serial, Execution::serial, "vr_fald")->Apply(args);
BENCHMARK_CAPTURE(rounds, vr_parallel, Execution::parallel, "vr_fald")->Apply(args);

BENCHMARK_MAIN();
