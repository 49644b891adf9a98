#include <cmath>
#include <numeric>
#include <random>

#include "../oracles.hpp"
#include "cpm/loo.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cpm;
using namespace cpm::testing;

TEST_CASE("pointwise log-likelihood against brute force") {
  std::mt19937_64 rng(1);
  const auto data = random_cpm_data(rng, 3, 4, 1);
  const auto draws = make_draws({{-0.5, 0.7, 0.2}, {-1.0, 0.1, -0.4}, {0.0, 2.0, 1.3}}, 2);
  for (Link link : kAllLinks) {
    const Matrix ll = pointwise_loglik(draws, data, link);
    REQUIRE(ll.rows() == 3);
    REQUIRE(ll.cols() == 4);
    for (std::size_t s = 0; s < 3; ++s) {
      const auto params = draws.params(s);
      double row = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        const double want = std::log(cell_prob(params, link, data.x.row(i), data.encoding.ranks[i]));
        CHECK(ll(s, i) == doctest::Approx(want).epsilon(1e-12));
        row += ll(s, i);
      }
      CHECK(row == doctest::Approx(log_likelihood(params, data, link)).epsilon(1e-12));
    }
  }
  const auto single = subset_observations(data, std::vector<std::size_t>{2});
  const Matrix one = pointwise_loglik(draws, single, Link::logit);
  for (std::size_t s = 0; s < 3; ++s) CHECK(one(s, 0) == log_likelihood(draws.params(s), single, Link::logit));
  CHECK_THROWS_AS(pointwise_loglik(make_draws({{0.0, 1.0}}, 2), data, Link::logit), DimensionError);
}

TEST_CASE("PSIS-LOO on a conjugate normal mean") {
  // y_i ~ N(mu, 1), flat prior: mu | y ~ N(ybar, 1/n), and
  // y_i | y_{-i} ~ N(ybar_{-i}, 1 + 1/(n-1)).
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  const std::size_t n = 20, S = 4000;
  std::vector<double> y(n);
  for (auto& v : y) v = 1.0 + z(rng);
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
  Matrix ll(S, n);
  for (std::size_t s = 0; s < S; ++s) {
    const double mu = ybar + z(rng) / std::sqrt(static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      ll(s, i) = -0.5 * (y[i] - mu) * (y[i] - mu) - 0.5 * std::log(2.0 * M_PI);
  }
  double exact = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = (ybar * n - y[i]) / (n - 1.0);
    const double v = 1.0 + 1.0 / (n - 1.0);
    exact += -0.5 * (y[i] - m) * (y[i] - m) / v - 0.5 * std::log(2.0 * M_PI * v);
  }
  const auto loo = psis_loo(ll);
  CHECK(loo.elpd == doctest::Approx(exact).epsilon(0.005));
  for (double k : loo.pareto_k) CHECK(k < 0.5);
  CHECK(loo.elpd == std::accumulate(loo.pointwise.begin(), loo.pointwise.end(), 0.0));
  CHECK(loo.se > 0.0);
}

TEST_CASE("Pareto shape of a known heavy tail") {
  // exp(r) ~ Pareto with tail index 2, so the generalized Pareto shape is 1/2.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> r(20000);
  for (auto& v : r) v = -0.5 * std::log(1.0 - u(rng));
  const auto w = psis_smooth(r);
  CHECK(w.pareto_k == doctest::Approx(0.5).epsilon(0.25));
  const double max_raw = *std::max_element(r.begin(), r.end());
  for (double lw : w.log_weights) CHECK(lw <= max_raw + 1e-12);
}

TEST_CASE("constant log ratios leave weights unsmoothed") {
  Matrix ll(200, 2, -1.25);
  const auto loo = psis_loo(ll);
  CHECK(loo.pointwise[0] == doctest::Approx(-1.25));
  CHECK(loo.elpd == doctest::Approx(-2.5));
  CHECK(loo.se == 0.0);
}

TEST_CASE("self comparison is exactly zero") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  Matrix ll(500, 12);
  for (std::size_t s = 0; s < 500; ++s)
    for (std::size_t i = 0; i < 12; ++i) ll(s, i) = -1.0 + 0.3 * z(rng);
  const auto a = psis_loo(ll);
  const auto d = elpd_diff(a, a);
  CHECK(d.diff == 0.0);
  CHECK(d.se == 0.0);

  Matrix other(500, 11, -1.0);
  CHECK_THROWS_AS(elpd_diff(a, psis_loo(other)), DimensionError);
}

TEST_CASE("elpd_diff standard error from pointwise differences") {
  LooResult a, b;
  a.pointwise = {-1.0, -2.0, -1.5, -0.5};
  b.pointwise = {-1.5, -2.0, -1.0, -1.5};
  a.elpd = -5.0;
  b.elpd = -6.0;
  const auto d = elpd_diff(a, b);
  // differences 0.5, 0, -0.5, 1: mean 0.25, sample variance 1.25 / 3
  CHECK(d.diff == doctest::Approx(1.0));
  CHECK(d.se == doctest::Approx(std::sqrt(4.0 * 1.25 / 3.0)));
}

TEST_CASE("PSIS-LOO of the intercept-only toy tracks exact leave-one-out") {
  const oracle::LooToy toy;
  const auto data = toy.data();
  SamplerConfig cfg;
  cfg.chains = 4;
  cfg.seed = 99;
  const auto draws = fit_cpm(data, Link::logit, PriorSpec{toy.alpha, std::nullopt, std::nullopt}, cfg);
  const auto loo = psis_loo(pointwise_loglik(draws, data, Link::logit));
  CHECK(std::abs(loo.elpd - toy.exact_elpd()) < 0.3);
}
