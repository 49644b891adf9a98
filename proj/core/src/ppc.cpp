#include "cpm/ppc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cpm/rng.hpp"

namespace cpm {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Smallest category j (1-based) with G(gamma_j - eta) >= u.
int sample_category(std::span<const double> gamma, double eta, Link link, double u) {
  std::size_t lo = 0;
  std::size_t hi = gamma.size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (detail::raw_cdf(link, gamma[mid] - eta) >= u)
      hi = mid;
    else
      lo = mid + 1;
  }
  return static_cast<int>(lo) + 1;
}

}  // namespace

std::string_view to_string(TestStatistic t) {
  switch (t) {
    case TestStatistic::variance: return "variance";
    case TestStatistic::skewness: return "skewness";
    case TestStatistic::proportion_censored: return "proportion_censored";
  }
  return "unknown";
}

std::vector<double> encoded_outcomes(const OrdinalEncoding& encoding) {
  std::vector<double> y(encoding.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = encoding.unique_values[encoding.ranks[i] - 1];
  return y;
}

ReplicateSets posterior_predictive_draws(const PosteriorDraws& draws, const CpmData& data,
                                         Link link, std::size_t count, std::uint64_t seed) {
  if (count > draws.num_draws())
    throw std::invalid_argument("posterior_predictive_draws: requested " + std::to_string(count) +
                                " replicates but only " + std::to_string(draws.num_draws()) +
                                " draws exist");
  if (draws.num_cutpoints + 1 != static_cast<std::size_t>(data.num_categories()))
    throw DimensionError("posterior_predictive_draws: draws do not match the data");
  RandomStream rng(seed);
  std::vector<std::size_t> pool(draws.num_draws());
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates.
  for (std::size_t r = 0; r < count; ++r) {
    std::uniform_int_distribution<std::size_t> pick(r, pool.size() - 1);
    std::swap(pool[r], pool[pick(rng.engine())]);
  }
  ReplicateSets out;
  out.draw_index.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  out.values = Matrix(count, data.num_obs());
  const auto& support = data.encoding.unique_values;
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t s = out.draw_index[r];
    const auto gamma = draws.gamma(s);
    const auto beta = draws.beta(s);
    for (std::size_t i = 0; i < data.num_obs(); ++i) {
      const double eta = beta.empty() ? 0.0 : dot(data.x.row(i), beta);
      out.values(r, i) = support[sample_category(gamma, eta, link, rng.uniform()) - 1];
    }
  }
  return out;
}

double test_statistic(TestStatistic stat, std::span<const double> y, const OrdinalEncoding& encoding) {
  if (y.empty()) throw std::invalid_argument("test_statistic: no values");
  const double n = static_cast<double>(y.size());
  switch (stat) {
    case TestStatistic::proportion_censored: {
      if (!encoding.detection_limit)
        throw std::invalid_argument("proportion_censored needs a detection limit in the encoding");
      const double limit = *encoding.detection_limit;
      const auto hits = std::count_if(y.begin(), y.end(), [&](double v) { return v <= limit; });
      return static_cast<double>(hits) / n;
    }
    case TestStatistic::variance:
    case TestStatistic::skewness: {
      const double m = std::accumulate(y.begin(), y.end(), 0.0) / n;
      double m2 = 0.0, m3 = 0.0;
      for (double v : y) {
        const double d = v - m;
        m2 += d * d;
        m3 += d * d * d;
      }
      if (stat == TestStatistic::variance) return y.size() > 1 ? m2 / (n - 1.0) : 0.0;
      m2 /= n;
      m3 /= n;
      return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    }
  }
  return 0.0;
}

double ppp_value(TestStatistic stat, const Matrix& replicates, std::span<const double> observed,
                 const OrdinalEncoding& encoding) {
  if (replicates.rows() == 0) throw std::invalid_argument("ppp_value: no replicates");
  if (replicates.cols() != observed.size())
    throw DimensionError("ppp_value: replicate size differs from the observed data");
  const double t_obs = test_statistic(stat, observed, encoding);
  double score = 0.0;
  for (std::size_t r = 0; r < replicates.rows(); ++r) {
    const double t_rep = test_statistic(stat, replicates.row(r), encoding);
    if (t_rep > t_obs)
      score += 1.0;
    else if (t_rep == t_obs)
      score += 0.5;
  }
  return score / static_cast<double>(replicates.rows());
}

}  // namespace cpm
