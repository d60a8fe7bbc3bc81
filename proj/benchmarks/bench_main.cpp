#include <random>

#include <benchmark/benchmark.h>

#include "zoosel/characterize.hpp"
#include "zoosel/embedder.hpp"
#include "zoosel/library.hpp"
#include "zoosel/selector.hpp"
#include "zoosel/synth.hpp"
#include "zoosel/zoo.hpp"

namespace {

using namespace zoosel;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.flat()) v = u(rng);
  return m;
}

void BM_AdvantageScores(benchmark::State& state) {
  const Matrix e = random_matrix(static_cast<std::size_t>(state.range(0)), 1000, 1);
  for (auto _ : state) benchmark::DoNotOptimize(advantage_scores(e));
}
BENCHMARK(BM_AdvantageScores)->Arg(5)->Arg(20)->Arg(80);

// Similarity, vote and consensus for a 3-channel task against an M-model zoo.
void BM_Selection(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const Matrix r_zoo = random_matrix(m, 64, 2);
  const Matrix r_task = random_matrix(3, 64, 3);
  const std::vector<double> weights(m, 0.1);
  for (auto _ : state) {
    const auto sim = similarity(r_zoo, weights, r_task);
    const auto v = vote(sim.sim, weights);
    benchmark::DoNotOptimize(consensus_rank(v.b, sim.sim));
  }
}
BENCHMARK(BM_Selection)->Arg(5)->Arg(20)->Arg(80);

void BM_ExtractorEmbed(benchmark::State& state) {
  const Extractor ext = Extractor::initialize(ExtractorConfig{});
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  std::vector<double> seg(ext.config().input_len);
  for (double& v : seg) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(ext.embed(seg));
}
BENCHMARK(BM_ExtractorEmbed);

void BM_ModelForward(benchmark::State& state) {
  const auto zoo = default_zoo().models;
  const auto& spec = zoo[static_cast<std::size_t>(state.range(0))];
  std::mt19937_64 rng(5);
  const auto x = synth_series(Family::ar, 480, rng);
  for (auto _ : state) benchmark::DoNotOptimize(forecast(spec, x, 12));
  state.SetLabel(spec.model_id);
}
BENCHMARK(BM_ModelForward)->DenseRange(0, 4);

}  // namespace

BENCHMARK_MAIN();
