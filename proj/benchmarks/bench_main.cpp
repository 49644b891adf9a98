#include <benchmark/benchmark.h>

#include <vector>

#include "cpm/inference.hpp"
#include "cpm/links.hpp"
#include "cpm/loo.hpp"
#include "cpm/model.hpp"
#include "cpm/sampler.hpp"
#include "cpm/simlab.hpp"

namespace {

// One scenario-1 dataset of size n, encoded the way the study fits it.
cpm::CpmData study_data(int n) {
  const auto spec = cpm::sim::make_spec(1, n, false, cpm::AlphaSchedule::recip_b, 1, 1);
  const auto d = cpm::sim::generate_scenario(spec, 0);
  return cpm::make_cpm_data(cpm::encode_outcomes(d.y), d.x, {"x1", "x2"});
}

void BM_LinkCdf(benchmark::State& state) {
  const auto link = static_cast<cpm::Link>(state.range(0));
  double x = -8.0, acc = 0.0;
  for (auto _ : state) {
    acc += cpm::cdf(link, x);
    x = x > 8.0 ? -8.0 : x + 0.001;
  }
  benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_LinkCdf)->Arg(0)->Arg(1)->Arg(2);

void BM_LogPosteriorGradient(benchmark::State& state) {
  const auto data = study_data(static_cast<int>(state.range(0)));
  // Second argument 1 uses alpha = 1, which skips the Dirichlet log-cell terms.
  const auto prior = state.range(1) ? cpm::PriorSpec{1.0, std::nullopt, std::nullopt}
                                    : cpm::PriorSpec::from_schedule(cpm::AlphaSchedule::recip_b, data.num_categories());
  const cpm::CpmPosterior post(data, cpm::Link::probit, prior);
  const auto u0 = cpm::initialize(data, cpm::Link::probit, post.prior(), 0.0, 1).flatten();
  std::vector<double> grad(post.dim());
  for (auto _ : state) benchmark::DoNotOptimize(post.log_density_gradient(u0, grad));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LogPosteriorGradient)->Args({100, 0})->Args({400, 0})->Args({400, 1});

void BM_FitSmall(benchmark::State& state) {
  const auto data = study_data(100);
  const auto prior = cpm::PriorSpec::from_schedule(cpm::AlphaSchedule::recip_b, data.num_categories());
  cpm::SamplerConfig cfg;
  cfg.chains = 1;
  cfg.warmup_iters = 200;
  cfg.sampling_iters = 200;
  cfg.threads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(cpm::fit_cpm(data, cpm::Link::probit, prior, cfg));
}
BENCHMARK(BM_FitSmall)->Unit(benchmark::kMillisecond);

void BM_ConditionalMean(benchmark::State& state) {
  const auto data = study_data(200);
  const auto prior = cpm::PriorSpec::from_schedule(cpm::AlphaSchedule::recip_b, data.num_categories());
  cpm::SamplerConfig cfg;
  cfg.chains = 1;
  cfg.warmup_iters = 100;
  cfg.sampling_iters = 1000;
  const auto draws = cpm::fit_cpm(data, cpm::Link::probit, prior, cfg);
  const auto x = data.to_model_scale(std::vector<double>{1.0, 1.0});
  for (auto _ : state)
    benchmark::DoNotOptimize(cpm::conditional_mean(draws, cpm::Link::probit, x, data.encoding));
}
BENCHMARK(BM_ConditionalMean)->Unit(benchmark::kMillisecond);

void BM_PsisLoo(benchmark::State& state) {
  const auto data = study_data(100);
  const auto prior = cpm::PriorSpec::from_schedule(cpm::AlphaSchedule::recip_b, data.num_categories());
  cpm::SamplerConfig cfg;
  cfg.chains = 1;
  cfg.warmup_iters = 100;
  cfg.sampling_iters = 1000;
  const auto draws = cpm::fit_cpm(data, cpm::Link::probit, prior, cfg);
  const auto ll = cpm::pointwise_loglik(draws, data, cpm::Link::probit);
  for (auto _ : state) benchmark::DoNotOptimize(cpm::psis_loo(ll));
}
BENCHMARK(BM_PsisLoo)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
