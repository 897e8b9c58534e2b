#include <benchmark/benchmark.h>

#include <vector>

#include "fedsim/consensus.hpp"
#include "fedsim/objective.hpp"
#include "fedsim/theory.hpp"
#include "fedsim/trainer.hpp"

using namespace fedsim;

namespace {

void BM_GossipRound(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Topology topo = Topology::ring(n);
  RngStream rng(1, 0);
  std::vector<ParamVector> g(n, ParamVector(64));
  for (auto& v : g)
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(gossip_step(g, topo, 0.3));
}
BENCHMARK(BM_GossipRound)->Arg(8)->Arg(64)->Arg(256);

void BM_LaplacianSpectrum(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RngStream rng(2, streams::kTopology);
  const Topology topo = Topology::random_connections(n, 3, 4, rng);
  for (auto _ : state) benchmark::DoNotOptimize(build_laplacian(topo).mu2);
}
BENCHMARK(BM_LaplacianSpectrum)->Arg(8)->Arg(32)->Arg(64);

void BM_SampleGradient(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  std::vector<double> a(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) a[i * d + i] = 1.0 + static_cast<double>(i);
  const Objective q = Objective::quadratic(a, std::vector<double>(d, 0.0), NoiseModel{0.5, 1.0});
  const ParamVector theta(d, 1.0);
  RngStream rng(3, 0);
  for (auto _ : state) benchmark::DoNotOptimize(q.sample_gradient(theta, rng));
}
BENCHMARK(BM_SampleGradient)->Arg(10)->Arg(100);

void BM_TrainerRun(benchmark::State& state) {
  RunConfig c;
  c.n_agents = 8;
  c.participants = 8;
  c.tau = static_cast<std::size_t>(state.range(0));
  c.eta = 0.01;
  c.epoch_len = 1000;
  c.objective.kind = ObjectiveKind::kQuadratic;
  c.objective.dim = 10;
  c.objective.matrix.assign(100, 0.0);
  for (std::size_t i = 0; i < 10; ++i) c.objective.matrix[i * 10 + i] = 0.1 * static_cast<double>(i + 1);
  c.objective.offset.assign(10, 0.0);
  c.objective.theta0.assign(10, 1.0);
  c.objective.noise = {0.0, 1.0};
  if (state.range(1) > 0) {
    c.method = Method::kConsensus;
    c.consensus_rounds = static_cast<std::size_t>(state.range(1));
    c.consensus_eps = 0.3;
    c.topology.kind = TopologyKind::kRing;
  }
  for (auto _ : state) benchmark::DoNotOptimize(run(c).final_theta);
  state.SetItemsProcessed(state.iterations() * 1000 * 8);
}
BENCHMARK(BM_TrainerRun)->Args({1, 0})->Args({10, 0})->Args({10, 2})->Unit(benchmark::kMillisecond);

void BM_BoundT4(benchmark::State& state) {
  TheoryParams p;
  p.sigma_sq = 1.0;
  p.m = 4;
  p.tau = 20;
  p.K = 1000;
  p.F0_minus_Finf = 1.0;
  p.decay_lambda = 0.95;
  for (auto _ : state) benchmark::DoNotOptimize(bound_t4(p).total);
}
BENCHMARK(BM_BoundT4);

}  // namespace
BENCHMARK_MAIN();
