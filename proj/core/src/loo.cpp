#include "cpm/loo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cpm {

namespace {

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (static_cast<double>(v.size()) - 1.0);
}

struct GpdFit {
  double k;
  double sigma;
};

// Zhang & Stephens (2009) profile-likelihood fit with a weakly informative
// adjustment of k toward 0.5. `x` must be sorted ascending and positive.
GpdFit gpd_fit(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const double prior = 3.0;
  const std::size_t m = 30 + static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  const double x_star = x[static_cast<std::size_t>(std::floor(n / 4.0 + 0.5)) - 1];
  std::vector<double> theta(m), log_lik(m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = 1.0 / x[n - 1] +
               (1.0 - std::sqrt(static_cast<double>(m) / (static_cast<double>(j + 1) - 0.5))) /
                   prior / x_star;
    const double a = -theta[j];
    double k = 0.0;
    for (double xi : x) k += std::log1p(a * xi);
    k /= static_cast<double>(n);
    log_lik[j] = static_cast<double>(n) * (std::log(a / k) - k - 1.0);
  }
  const double lse = log_sum_exp(log_lik);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < m; ++j) theta_hat += theta[j] * std::exp(log_lik[j] - lse);
  double k = 0.0;
  for (double xi : x) k += std::log1p(-theta_hat * xi);
  k /= static_cast<double>(n);
  const double sigma = -k / theta_hat;
  const double a = 10.0;
  k = k * static_cast<double>(n) / (n + a) + a * 0.5 / (n + a);
  if (std::isnan(k)) k = INFINITY;
  return {k, sigma};
}

double gpd_quantile(double p, double k, double sigma) {
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

}  // namespace

Matrix pointwise_loglik(const PosteriorDraws& draws, const CpmData& data, Link link) {
  if (draws.num_cutpoints + 1 != static_cast<std::size_t>(data.num_categories()) ||
      draws.dim() - draws.num_cutpoints != data.num_covariates())
    throw DimensionError("pointwise_loglik: draws do not match the data dimensions");
  Matrix out(draws.num_draws(), data.num_obs());
  for (std::size_t s = 0; s < draws.num_draws(); ++s) {
    const CpmParams params = draws.params(s);
    for (std::size_t i = 0; i < data.num_obs(); ++i)
      out(s, i) = log_likelihood_obs(params, data, link, i);
  }
  return out;
}

PsisWeights psis_smooth(std::span<const double> log_ratios) {
  const std::size_t s_count = log_ratios.size();
  const double max_ratio = *std::max_element(log_ratios.begin(), log_ratios.end());
  PsisWeights out;
  out.log_weights.resize(s_count);
  for (std::size_t s = 0; s < s_count; ++s) out.log_weights[s] = log_ratios[s] - max_ratio;

  const double sd = static_cast<double>(s_count);
  const auto tail_len = static_cast<std::size_t>(std::ceil(std::min(0.2 * sd, 3.0 * std::sqrt(sd))));
  if (tail_len >= 5 && tail_len < s_count) {
    std::vector<std::size_t> order(s_count);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return out.log_weights[a] < out.log_weights[b];
    });
    const std::size_t first_tail = s_count - tail_len;
    const double tail_min = out.log_weights[order[first_tail]];
    const double tail_max = out.log_weights[order[s_count - 1]];
    if (std::abs(tail_max - tail_min) >= 2.220446049250313e-16 / 100.0) {
      const double cutoff = out.log_weights[order[first_tail - 1]];
      const double exp_cutoff = std::exp(cutoff);
      std::vector<double> tail(tail_len);
      for (std::size_t t = 0; t < tail_len; ++t)
        tail[t] = std::exp(out.log_weights[order[first_tail + t]]) - exp_cutoff;
      const GpdFit fit = gpd_fit(tail);
      out.pareto_k = fit.k;
      if (std::isfinite(fit.k)) {
        for (std::size_t t = 0; t < tail_len; ++t) {
          const double p = (static_cast<double>(t) + 0.5) / static_cast<double>(tail_len);
          out.log_weights[order[first_tail + t]] =
              std::log(gpd_quantile(p, fit.k, fit.sigma) + exp_cutoff);
        }
      }
    }
  }
  for (double& w : out.log_weights) {
    if (w > 0.0) w = 0.0;
    w += max_ratio;
  }
  return out;
}

LooResult psis_loo(const Matrix& loglik) {
  const std::size_t s_count = loglik.rows();
  const std::size_t n = loglik.cols();
  if (s_count < 2 || n == 0) throw DimensionError("psis_loo: need at least two draws and one observation");
  LooResult out;
  out.pointwise.resize(n);
  out.pareto_k.resize(n);
  std::vector<double> col(s_count), ratios(s_count), combined(s_count);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < s_count; ++s) {
      col[s] = loglik(s, i);
      ratios[s] = -col[s];
    }
    const PsisWeights w = psis_smooth(ratios);
    for (std::size_t s = 0; s < s_count; ++s) combined[s] = w.log_weights[s] + col[s];
    out.pointwise[i] = log_sum_exp(combined) - log_sum_exp(w.log_weights);
    out.pareto_k[i] = w.pareto_k;
  }
  out.elpd = std::accumulate(out.pointwise.begin(), out.pointwise.end(), 0.0);
  out.se = std::sqrt(static_cast<double>(n) * sample_variance(out.pointwise));
  return out;
}

ElpdDiff elpd_diff(const LooResult& a, const LooResult& b) {
  if (a.pointwise.size() != b.pointwise.size())
    throw DimensionError("elpd_diff: models were evaluated on different numbers of observations");
  std::vector<double> d(a.pointwise.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.pointwise[i] - b.pointwise[i];
  ElpdDiff out;
  out.diff = std::accumulate(d.begin(), d.end(), 0.0);
  out.se = std::sqrt(static_cast<double>(d.size()) * sample_variance(d));
  return out;
}

}  // namespace cpm
