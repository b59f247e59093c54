#include <benchmark/benchmark.h>

#include <random>

#include "nvlab/analysis.hpp"
#include "nvlab/equilibrium.hpp"
#include "nvlab/oracle.hpp"
#include "nvlab/simulation.hpp"

using namespace nvlab;

namespace {

const Treatment kHmLu = preset(TreatmentLabel::HM_LU);

void BM_ThresholdPrice(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(threshold_price(kHmLu.params));
}
BENCHMARK(BM_ThresholdPrice);

void BM_PriceQuantile(benchmark::State& state) {
  double u = 0.0;
  for (auto _ : state) {
    u += 0.618034;
    if (u >= 1.0) u -= 1.0;
    benchmark::DoNotOptimize(price_quantile(kHmLu.params, u));
  }
}
BENCHMARK(BM_PriceQuantile);

void BM_SamplePriceSnapped(benchmark::State& state) {
  std::mt19937_64 rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(sample_price(kHmLu.params, rng, true));
}
BENCHMARK(BM_SamplePriceSnapped);

void BM_BestQuantityDiscrete(benchmark::State& state) {
  const auto spec = demand_spec(kHmLu.params, Segment::High);
  for (auto _ : state) benchmark::DoNotOptimize(oracle::best_quantity_discrete(kHmLu.params, spec, 10.0));
}
BENCHMARK(BM_BestQuantityDiscrete);

void BM_RunSession(benchmark::State& state) {
  const int subjects = static_cast<int>(state.range(0));
  const int rounds = static_cast<int>(state.range(1));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto log = sim::run_session(kHmLu, {sim::EquilibriumPolicy{}}, subjects, rounds, ++seed);
    benchmark::DoNotOptimize(log.records.data());
  }
  state.SetItemsProcessed(state.iterations() * subjects * rounds);
}
BENCHMARK(BM_RunSession)->Args({24, 50})->Args({24, 1000});

void BM_IngestCsv(benchmark::State& state) {
  const auto csv = sim::export_csv(sim::run_session(kHmLu, {sim::PtcPolicy{0.5}}, 24, 50, 3));
  for (auto _ : state) {
    auto log = analysis::ingest_csv_text(csv);
    benchmark::DoNotOptimize(log.records.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(csv.size()));
}
BENCHMARK(BM_IngestCsv);

void BM_Analyze(benchmark::State& state) {
  const auto log = sim::run_session(kHmLu, {sim::PtcPolicy{0.5}}, 24, 50, 4);
  for (auto _ : state) {
    auto rep = analysis::analyze(log);
    benchmark::DoNotOptimize(rep.ptc.rounds_lp);
  }
}
BENCHMARK(BM_Analyze);

}  // namespace

BENCHMARK_MAIN();
