#include <benchmark/benchmark.h>

#include "tbal/population_model.hpp"
#include "tbal/randomization.hpp"
#include "tbal/theory.hpp"

namespace {

tbal::WeightedCovariates make_data(std::size_t n, int d) {
  tbal::Rng rng(11);
  const auto pop = tbal::GaussianPopulationPair::isotropic(d, 0.3);
  const tbal::Matrix x = tbal::sample_covariates(pop, tbal::Population::source, n, rng);
  return tbal::WeightedCovariates(x, tbal::importance_weights(pop, x));
}

void BM_SamplerDraw(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  tbal::AssignmentSampler sampler(n);
  tbal::Rng rng(1);
  tbal::Vector z;
  for (auto _ : state) {
    sampler.draw(rng, z);
    benchmark::DoNotOptimize(z.data());
  }
}
BENCHMARK(BM_SamplerDraw)->Arg(200)->Arg(1000);

void BM_FullShuffleDraw(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  tbal::Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(tbal::draw_balanced_assignment(n, rng));
}
BENCHMARK(BM_FullShuffleDraw)->Arg(200)->Arg(1000);

void BM_TargetStatistic(benchmark::State& state) {
  const auto wc = make_data(static_cast<std::size_t>(state.range(0)), static_cast<int>(state.range(1)));
  const tbal::BalanceEvaluator eval(wc, tbal::BalanceCriterion::target);
  tbal::Rng rng(2);
  tbal::AssignmentSampler sampler(static_cast<std::size_t>(wc.n()));
  tbal::Vector z;
  sampler.draw(rng, z);
  for (auto _ : state) benchmark::DoNotOptimize(eval(z));
}
BENCHMARK(BM_TargetStatistic)->Args({200, 3})->Args({1000, 10});

void BM_RerandomizeQuantile(benchmark::State& state) {
  const auto wc = make_data(1000, 10);
  const tbal::BalanceEvaluator eval(wc, tbal::BalanceCriterion::target);
  tbal::Rng rng(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tbal::rerandomize_quantile(eval, tbal::QuantileRule{0.99, 100}, 10000, rng));
  }
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_RerandomizeQuantile)->Unit(benchmark::kMillisecond);

void BM_ChiSquareCdf(benchmark::State& state) {
  double a = 0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tbal::chi_square_cdf(10, a));
    a = a < 40.0 ? a + 0.37 : 0.5;
  }
}
BENCHMARK(BM_ChiSquareCdf);

}  // namespace

BENCHMARK_MAIN();
