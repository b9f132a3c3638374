#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "treeg/guidance.hpp"
#include "treeg/search.hpp"

using namespace treeg;

namespace {

TabularDistribution bench_table(int dim, int n_states) {
  RngStream rng(7);
  std::int64_t size = 1;
  for (int d = 0; d < dim; ++d) size *= n_states;
  std::vector<double> probs(static_cast<std::size_t>(size));
  double sum = 0.0;
  for (double& p : probs) {
    p = 0.05 + rng.uniform();
    sum += p;
  }
  for (double& p : probs) p /= sum;
  return TabularDistribution(dim, n_states, std::move(probs));
}

DiscreteSequence masked_state(int dim, int masked) {
  DiscreteSequence x{std::vector<int>(static_cast<std::size_t>(dim), 0), 0.5};
  for (int d = 0; d < masked; ++d) x.tokens[static_cast<std::size_t>(d)] = kMaskToken;
  return x;
}

}  // namespace

static void BM_StepCoeffs(benchmark::State& state) {
  const auto schedule = build_schedule(ScheduleKind::kCosine, 1000);
  int i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(schedule.coeffs(i));
    i = (i + 1) % schedule.steps();
  }
}
BENCHMARK(BM_StepCoeffs);

static void BM_GmmPosteriorMean(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  GaussianMixture gmm;
  gmm.weights = {0.5, 0.5};
  gmm.means = {std::vector<double>(static_cast<std::size_t>(dim), -0.5),
               std::vector<double>(static_cast<std::size_t>(dim), 0.5)};
  gmm.variances = {std::vector<double>(static_cast<std::size_t>(dim), 1.0),
                   std::vector<double>(static_cast<std::size_t>(dim), 1.0)};
  RngStream rng(3);
  std::vector<double> x(static_cast<std::size_t>(dim));
  rng.fill_normal(x);
  for (auto _ : state) benchmark::DoNotOptimize(gmm_posterior_mean(x, 0.5, gmm));
}
BENCHMARK(BM_GmmPosteriorMean)->Arg(16)->Arg(64)->Arg(256);

// The restriction-slice posterior; cost shrinks with the number of masked
// dimensions still open.
static void BM_TabularPosterior(benchmark::State& state) {
  const auto table = bench_table(8, 4);
  const auto x = masked_state(8, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(tabular_posterior(x, table));
}
BENCHMARK(BM_TabularPosterior)->DenseRange(2, 8, 2);

static void BM_NeighborPosteriors(benchmark::State& state) {
  const auto table = bench_table(8, 4);
  const TabularDenoiser denoiser(table);
  const auto x = masked_state(8, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(denoiser.neighbor_posteriors(x));
}
BENCHMARK(BM_NeighborPosteriors)->Arg(4)->Arg(8);

static void BM_StGumbelGradient(benchmark::State& state) {
  const auto table = bench_table(8, 4);
  const DiscreteCore core{32, std::make_shared<TabularDenoiser>(table), 8, 4};
  RowMatrix w(8, 4);
  RngStream wrng(5);
  for (double& v : w.data) v = wrng.normal();
  const auto predictor = linear_onehot_predictor(w);
  const auto x = masked_state(8, 6);
  for (auto _ : state) {
    auto rng = derive_stream(11, stream_purpose::kGumbel);
    benchmark::DoNotOptimize(
        st_gumbel_gradient(x, core, *predictor, static_cast<int>(state.range(0)), 0.15, rng));
  }
}
BENCHMARK(BM_StGumbelGradient)->Arg(16)->Arg(128);

static void BM_TreeSearchDiscrete(benchmark::State& state) {
  const auto table = bench_table(8, 4);
  const DiscreteCore core{32, std::make_shared<TabularDenoiser>(table), 8, 4};
  DiscreteTaskFns fns;
  fns.objective = token_count_rule(0, 6.0, 1.0);
  GuidanceConfig config;
  config.family = GuidanceFamily::kSampleCurrent;
  config.branch_size = static_cast<int>(state.range(0));
  config.mc_samples = 16;
  SearchOptions options;
  options.record_steps = false;
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(run_tree_search(core, fns, config, 1, seed++, options));
}
BENCHMARK(BM_TreeSearchDiscrete)->Arg(1)->Arg(8);

BENCHMARK_MAIN();
