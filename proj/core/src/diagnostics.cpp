#include "cpm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cpm/links.hpp"

namespace cpm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Halves every chain, dropping the middle draw of odd-length chains.
std::vector<std::vector<double>> split_chains(std::span<const std::vector<double>> chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

void check_chains(std::span<const std::vector<double>> chains) {
  if (chains.empty()) throw std::invalid_argument("diagnostics: no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("diagnostics: chains differ in length");
  if (n < 4) throw std::invalid_argument("diagnostics: chains too short to split");
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (static_cast<double>(v.size()) - 1.0);
}

double rhat_of(const std::vector<std::vector<double>>& chains) {
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean_of(c));
    vars.push_back(variance_of(c));
  }
  const double within = mean_of(vars);
  if (!(within > 0.0) || !std::isfinite(within)) return kNaN;
  const double between = m > 1 ? n * variance_of(means) : 0.0;
  const double var_plus = (n - 1.0) / n * within + between / n;
  return std::sqrt(var_plus / within);
}

// Autocovariance at `lag` with 1/n normalization.
double autocovariance(const std::vector<double>& x, double mean, std::size_t lag) {
  double s = 0.0;
  for (std::size_t t = 0; t + lag < x.size(); ++t) s += (x[t] - mean) * (x[t + lag] - mean);
  return s / static_cast<double>(x.size());
}

double ess_of(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(m), chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(chains[c]);
    chain_var[c] = autocovariance(chains[c], means[c], 0) * n / (n - 1.0);
  }
  const double mean_var = mean_of(chain_var);
  if (!(mean_var > 0.0)) return kNaN;
  double var_plus = mean_var * (n - 1.0) / n;
  if (m > 1) var_plus += variance_of(means);

  auto rho_at = [&](std::size_t lag) {
    double acov = 0.0;
    for (std::size_t c = 0; c < m; ++c) acov += autocovariance(chains[c], means[c], lag);
    acov /= static_cast<double>(m);
    return 1.0 - (mean_var - acov) / var_plus;
  };

  std::vector<double> rho(n + 2, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho_at(1);
  rho[1] = rho_odd;
  std::size_t t = 1;
  while (t + 5 < n && std::isfinite(rho_even + rho_odd) && rho_even + rho_odd > 0.0) {
    rho_even = rho_at(t + 1);
    rho_odd = rho_at(t + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho[t + 1] = rho_even;
      rho[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0) rho[max_t + 1] = rho_even;

  // Initial monotone sequence.
  for (std::size_t k = 1; k + 2 <= max_t; k += 2) {
    if (rho[k + 1] + rho[k + 2] > rho[k - 1] + rho[k]) {
      rho[k + 1] = 0.5 * (rho[k - 1] + rho[k]);
      rho[k + 2] = rho[k + 1];
    }
  }
  const double total = static_cast<double>(m * n);
  double tau = -1.0 + rho[max_t + 1];
  for (std::size_t k = 0; k <= max_t; ++k) tau += 2.0 * rho[k];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

// Normal scores of pooled ranks (average ranks for ties).
std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t t = 0; t < chains[c].size(); ++t)
      pooled.emplace_back(chains[c][t], c * chains[c].size() + t);
  std::sort(pooled.begin(), pooled.end());
  const double total = static_cast<double>(pooled.size());
  std::vector<double> scores(pooled.size());
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j + 1 < pooled.size() && pooled[j + 1].first == pooled[i].first) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double z = quantile(Link::probit, (avg_rank - 0.375) / (total + 0.25));
    for (std::size_t k = i; k <= j; ++k) scores[pooled[k].second] = z;
    i = j + 1;
  }
  std::vector<std::vector<double>> out(chains.size());
  const std::size_t n = chains.front().size();
  for (std::size_t c = 0; c < chains.size(); ++c)
    out[c].assign(scores.begin() + static_cast<std::ptrdiff_t>(c * n),
                  scores.begin() + static_cast<std::ptrdiff_t>((c + 1) * n));
  return out;
}

bool is_constant(std::span<const std::vector<double>> chains) {
  const double first = chains.front().front();
  for (const auto& c : chains)
    for (double v : c)
      if (v != first) return false;
  return true;
}

}  // namespace

double split_rhat(std::span<const std::vector<double>> chains) {
  check_chains(chains);
  if (is_constant(chains)) return kNaN;
  return rhat_of(split_chains(chains));
}

double ess_bulk(std::span<const std::vector<double>> chains) {
  check_chains(chains);
  if (is_constant(chains)) return kNaN;
  return ess_of(rank_normalize(split_chains(chains)));
}

double ConvergenceReport::max_rhat() const {
  double out = -INFINITY;
  for (const auto& p : params)
    if (p.defined) out = std::max(out, p.rhat);
  return out;
}

double ConvergenceReport::min_ess() const {
  double out = INFINITY;
  for (const auto& p : params)
    if (p.defined) out = std::min(out, p.ess_bulk);
  return out;
}

std::size_t ConvergenceReport::undefined_count() const {
  return static_cast<std::size_t>(
      std::count_if(params.begin(), params.end(), [](const auto& p) { return !p.defined; }));
}

bool ConvergenceReport::converged(double threshold) const {
  return std::all_of(params.begin(), params.end(),
                     [&](const auto& p) { return !p.defined || p.rhat < threshold; });
}

ConvergenceReport convergence_diagnostics(const PosteriorDraws& draws) {
  if (draws.num_chains < 1 || draws.num_draws() == 0)
    throw std::invalid_argument("convergence_diagnostics: no draws");
  ConvergenceReport report;
  report.divergences = draws.divergences();
  report.max_depth_hits = draws.max_depth_hits();
  for (std::size_t k = 0; k < draws.dim(); ++k) {
    std::vector<std::vector<double>> chains;
    for (int c = 0; c < draws.num_chains; ++c) chains.push_back(draws.chain_column(c, k));
    ParamDiagnostics d;
    d.name = k < draws.param_names.size() ? draws.param_names[k] : "theta[" + std::to_string(k + 1) + "]";
    d.rhat = split_rhat(chains);
    d.ess_bulk = ess_bulk(chains);
    d.defined = std::isfinite(d.rhat) && std::isfinite(d.ess_bulk);
    report.params.push_back(std::move(d));
  }
  return report;
}

}  // namespace cpm
