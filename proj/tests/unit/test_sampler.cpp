#include <cmath>
#include <numeric>

#include "../oracles.hpp"
#include "cpm/diagnostics.hpp"
#include "cpm/sampler.hpp"
#include "doctest.h"

using namespace cpm;

namespace {

Target standard_normal(std::size_t d) {
  Target t;
  t.dim = d;
  t.log_density_gradient = [](std::span<const double> q, std::span<double> g) {
    double lp = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      lp -= 0.5 * q[k] * q[k];
      g[k] = -q[k];
    }
    return lp;
  };
  return t;
}

Target correlated_gaussian(double rho) {
  Target t;
  t.dim = 2;
  const double det = 1.0 - rho * rho;
  t.log_density_gradient = [rho, det](std::span<const double> q, std::span<double> g) {
    const double a = q[0], b = q[1];
    g[0] = -(a - rho * b) / det;
    g[1] = -(b - rho * a) / det;
    return -0.5 * (a * a - 2.0 * rho * a * b + b * b) / det;
  };
  return t;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double covariance(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - ma) * (b[k] - mb);
  return s / (a.size() - 1.0);
}

std::vector<std::vector<double>> chains_of(const PosteriorDraws& d, std::size_t param) {
  std::vector<std::vector<double>> out;
  for (int c = 0; c < d.num_chains; ++c) out.push_back(d.chain_column(c, param));
  return out;
}

}  // namespace

TEST_CASE("standard normal in five dimensions") {
  SamplerConfig cfg;
  cfg.chains = 4;
  cfg.warmup_iters = 1000;
  cfg.sampling_iters = 2000;
  cfg.seed = 42;
  const auto draws = nuts_sample(standard_normal(5), cfg);
  REQUIRE(draws.num_draws() == 8000);
  for (std::size_t k = 0; k < 5; ++k) {
    const auto col = draws.values.column(k);
    const double ess = ess_bulk(chains_of(draws, k));
    CAPTURE(k);
    CAPTURE(ess);
    CHECK(std::abs(mean(col)) < 4.0 / std::sqrt(ess));
    CHECK(std::abs(covariance(col, col) - 1.0) < 0.1);
  }
  CHECK(draws.divergences() == 0);
}

TEST_CASE("correlated Gaussian covariance") {
  SamplerConfig cfg;
  cfg.chains = 4;
  cfg.warmup_iters = 1000;
  cfg.sampling_iters = 2000;
  cfg.seed = 7;
  const auto draws = nuts_sample(correlated_gaussian(0.8), cfg);
  const auto a = draws.values.column(0);
  const auto b = draws.values.column(1);
  CHECK(covariance(a, a) == doctest::Approx(1.0).epsilon(0.15));
  CHECK(covariance(b, b) == doctest::Approx(1.0).epsilon(0.15));
  CHECK(covariance(a, b) == doctest::Approx(0.8).epsilon(0.15));
}

TEST_CASE("constant density keeps chains finite") {
  Target flat;
  flat.dim = 3;
  flat.log_density_gradient = [](std::span<const double>, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    return 0.0;
  };
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.warmup_iters = 200;
  cfg.sampling_iters = 200;
  cfg.max_tree_depth = 5;
  const auto draws = nuts_sample(flat, cfg);
  double accept = 0.0;
  for (std::size_t s = 0; s < draws.num_draws(); ++s) {
    for (double v : draws.draw(s)) REQUIRE(std::isfinite(v));
    accept += draws.stats[s].accept_stat;
  }
  CHECK(accept / draws.num_draws() > 0.99);
}

TEST_CASE("non-finite density at every start fails initialization") {
  Target bad;
  bad.dim = 2;
  bad.log_density_gradient = [](std::span<const double>, std::span<double>) { return NAN; };
  SamplerConfig cfg;
  cfg.warmup_iters = 10;
  cfg.sampling_iters = 10;
  CHECK_THROWS_AS(nuts_sample(bad, cfg), InitializationError);
}

TEST_CASE("config validation") {
  SamplerConfig cfg;
  cfg.chains = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.sampling_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.target_accept = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.init_jitter = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_NOTHROW(SamplerConfig{}.validate());
}

TEST_CASE("initialize at equal-probability cutpoints") {
  const auto two = make_cpm_data(encode_outcomes(std::vector<double>{1, 2}), Matrix(2, 0));
  const auto u2 = initialize(two, Link::probit, PriorSpec{}, 0.0, 1);
  CHECK(u2.delta.size() == 1);
  CHECK(std::abs(u2.delta[0]) < 1e-15);

  const auto four = make_cpm_data(encode_outcomes(std::vector<double>{1, 2, 3, 4}), Matrix(4, 1, 0.5));
  const auto c = to_constrained(initialize(four, Link::logit, PriorSpec{}, 0.0, 1));
  CHECK(c.gamma[0] == doctest::Approx(-1.0986123));
  CHECK(std::abs(c.gamma[1]) < 1e-12);
  CHECK(c.gamma[2] == doctest::Approx(1.0986123));
  CHECK(c.beta == std::vector<double>{0.0});

  const auto a = initialize(four, Link::logit, PriorSpec{}, 0.1, 9);
  const auto b = initialize(four, Link::logit, PriorSpec{}, 0.1, 9);
  CHECK(a.flatten() == b.flatten());
  const auto base = initialize(four, Link::logit, PriorSpec{}, 0.0, 9).flatten();
  const auto jittered = a.flatten();
  for (std::size_t k = 0; k < base.size(); ++k) CHECK(std::abs(jittered[k] - base[k]) <= 0.1);
}

TEST_CASE("tiny CPM posterior matches grid quadrature") {
  const oracle::TinyCpm tiny;
  const auto data = tiny.data();
  SamplerConfig cfg;
  cfg.chains = 4;
  cfg.seed = 2718;
  const auto draws = fit_cpm(data, Link::probit, PriorSpec{}, cfg);
  const auto want = oracle::tiny_cpm_posterior_means();
  for (std::size_t k = 0; k < 3; ++k) {
    CAPTURE(k);
    CHECK(std::abs(mean(draws.values.column(k)) - want[k]) < 0.05);
  }
  CHECK(static_cast<double>(draws.divergences()) / draws.num_draws() < 0.01);
  CHECK(draws.param_names == std::vector<std::string>{"gamma[1]", "gamma[2]", "x"});
}

TEST_CASE("reproducible and independent of thread count") {
  std::vector<double> y;
  Matrix x(40, 1);
  for (int i = 0; i < 40; ++i) {
    y.push_back(std::sin(1.7 * i) + 0.1 * i);
    x(static_cast<std::size_t>(i), 0) = std::cos(0.9 * i);
  }
  const auto data = make_cpm_data(encode_outcomes(y), x);
  const auto prior = PriorSpec::from_schedule(AlphaSchedule::recip_b, data.num_categories());
  SamplerConfig cfg;
  cfg.chains = 3;
  cfg.warmup_iters = 300;
  cfg.sampling_iters = 200;
  cfg.seed = 5;
  cfg.threads = 1;
  const auto a = fit_cpm(data, Link::logit, prior, cfg);
  cfg.threads = 3;
  const auto b = fit_cpm(data, Link::logit, prior, cfg);
  CHECK(a.values == b.values);
  CHECK(a.chain_seeds == b.chain_seeds);
  cfg.seed = 6;
  const auto c = fit_cpm(data, Link::logit, prior, cfg);
  CHECK_FALSE(a.values == c.values);

  for (std::size_t s = 0; s < a.num_draws(); ++s) {
    const auto g = a.gamma(s);
    for (std::size_t k = 1; k < g.size(); ++k) REQUIRE(g[k] > g[k - 1]);
  }
  CHECK(a.num_draws() == 600);
  CHECK(a.chain_column(2, 0).size() == 200);
}
