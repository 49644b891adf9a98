#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cpm/ppc.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cpm;
using namespace cpm::testing;

namespace {

CpmData small_data(std::optional<double> limit = std::nullopt) {
  const std::vector<double> y{1.0, 1.0, 2.0, 3.5, 5.0, 2.0, 3.5, 8.0};
  Matrix x(8, 1);
  for (std::size_t i = 0; i < 8; ++i) x(i, 0) = static_cast<double>(i) / 4.0;
  return make_cpm_data(encode_outcomes(y, limit), x);
}

}  // namespace

TEST_CASE("degenerate draw replicates the lowest value") {
  const auto data = small_data();
  const auto draws = make_draws({{50.0, 51.0, 52.0, 53.0, 0.0}, {60.0, 61.0, 62.0, 63.0, 0.0}}, 4);
  const auto reps = posterior_predictive_draws(draws, data, Link::logit, 2, 1);
  for (std::size_t r = 0; r < 2; ++r)
    for (double v : reps.values.row(r)) CHECK(v == 1.0);
}

TEST_CASE("replicates stay on the observed support and follow cell probabilities") {
  const auto data = small_data();
  const std::vector<double> row{-0.8, -0.1, 0.6, 1.4, 0.3};
  std::vector<std::vector<double>> rows(4000, row);
  const auto draws = make_draws(rows, 4);
  const auto reps = posterior_predictive_draws(draws, data, Link::probit, 4000, 17);
  const std::set<double> support(data.encoding.unique_values.begin(), data.encoding.unique_values.end());
  std::vector<double> counts(5, 0.0);
  const std::size_t i = 3;
  for (std::size_t r = 0; r < 4000; ++r) {
    for (double v : reps.values.row(r)) REQUIRE(support.count(v) == 1);
    const auto it = std::find(data.encoding.unique_values.begin(), data.encoding.unique_values.end(), reps.values(r, i));
    counts[static_cast<std::size_t>(it - data.encoding.unique_values.begin())] += 1.0;
  }
  const CpmParams params = draws.params(0);
  for (int j = 1; j <= 5; ++j) {
    const double p = cell_prob(params, Link::probit, data.x.row(i), j);
    const double se = std::sqrt(p * (1.0 - p) / 4000.0);
    CAPTURE(j);
    CHECK(std::abs(counts[static_cast<std::size_t>(j - 1)] / 4000.0 - p) < 4.0 * se + 1e-12);
  }
}

TEST_CASE("replicate selection is seeded and without replacement") {
  const auto data = small_data();
  std::vector<std::vector<double>> rows;
  for (int s = 0; s < 50; ++s) rows.push_back({-1.0 + 0.01 * s, 0.0, 0.5, 1.0, 0.2});
  const auto draws = make_draws(rows, 4);
  const auto a = posterior_predictive_draws(draws, data, Link::logit, 10, 5);
  const auto b = posterior_predictive_draws(draws, data, Link::logit, 10, 5);
  CHECK(a.values == b.values);
  CHECK(a.draw_index == b.draw_index);
  CHECK(a.values.rows() == 10);
  CHECK(a.values.cols() == 8);
  std::set<std::size_t> distinct(a.draw_index.begin(), a.draw_index.end());
  CHECK(distinct.size() == 10);
  const auto c = posterior_predictive_draws(draws, data, Link::logit, 10, 6);
  CHECK_FALSE(a.draw_index == c.draw_index);
  CHECK_THROWS_AS(posterior_predictive_draws(draws, data, Link::logit, 51, 5), std::invalid_argument);
}

TEST_CASE("test statistics") {
  const auto enc = encode_outcomes(std::vector<double>{0.0, 1.0}, 0.5);
  const std::vector<double> y{0.5, 0.5, 2.0, 4.0, 10.0};
  // mean 3.4; deviations -2.9 -2.9 -1.4 0.6 6.6
  const double m2 = (2.9 * 2.9 * 2 + 1.4 * 1.4 + 0.36 + 6.6 * 6.6);
  const double m3 = (-2.9 * 2.9 * 2.9 * 2 - 1.4 * 1.4 * 1.4 + 0.216 + 6.6 * 6.6 * 6.6);
  CHECK(test_statistic(TestStatistic::variance, y, enc) == doctest::Approx(m2 / 4.0));
  CHECK(test_statistic(TestStatistic::skewness, y, enc) ==
        doctest::Approx((m3 / 5.0) / std::pow(m2 / 5.0, 1.5)));
  CHECK(test_statistic(TestStatistic::proportion_censored, y, enc) == doctest::Approx(0.4));
  const auto plain = encode_outcomes(std::vector<double>{0.0, 1.0});
  CHECK_THROWS_AS(test_statistic(TestStatistic::proportion_censored, y, plain), std::invalid_argument);
  const std::vector<double> flat{2.0, 2.0, 2.0};
  CHECK(test_statistic(TestStatistic::skewness, flat, plain) == 0.0);
}

TEST_CASE("posterior predictive p-values") {
  const auto enc = encode_outcomes(std::vector<double>{0.0, 1.0});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  Matrix reps(1001, 30);
  std::vector<double> vars;
  for (std::size_t r = 0; r < reps.rows(); ++r) {
    for (double& v : reps.row(r)) v = z(rng);
    vars.push_back(test_statistic(TestStatistic::variance, reps.row(r), enc));
  }
  // Observed set chosen as the replicate with the median variance.
  std::vector<double> sorted = vars;
  std::nth_element(sorted.begin(), sorted.begin() + 500, sorted.end());
  const auto median_row = static_cast<std::size_t>(std::find(vars.begin(), vars.end(), sorted[500]) - vars.begin());
  const std::vector<double> observed(reps.row(median_row).begin(), reps.row(median_row).end());
  CHECK(ppp_value(TestStatistic::variance, reps, observed, enc) == doctest::Approx(0.5).epsilon(0.01));

  std::vector<double> wild(30);
  for (std::size_t i = 0; i < 30; ++i) wild[i] = (i % 2 ? 1.0 : -1.0) * 100.0;
  CHECK(ppp_value(TestStatistic::variance, reps, wild, enc) == 0.0);

  Matrix same(4, 3, 1.0);
  const std::vector<double> ones{1.0, 1.0, 1.0};
  CHECK(ppp_value(TestStatistic::variance, same, ones, enc) == 0.5);
  CHECK_THROWS_AS(ppp_value(TestStatistic::variance, same, std::vector<double>{1.0}, enc), DimensionError);
}

TEST_CASE("encoded outcomes apply the detection limit") {
  const auto data = small_data(1.5);
  const auto y = encoded_outcomes(data.encoding);
  CHECK(y[0] == 1.5);
  CHECK(y[2] == 2.0);
  CHECK(y.size() == 8);
}
