#include "cpm/inference.hpp"

#include <algorithm>
#include <cmath>

namespace cpm {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("credible level must lie in (0, 1)");
}

void check_draws(const PosteriorDraws& draws, std::span<const double> x,
                 const OrdinalEncoding& encoding) {
  if (draws.num_draws() == 0) throw DimensionError("no posterior draws");
  if (draws.num_cutpoints + 1 != static_cast<std::size_t>(encoding.num_categories()))
    throw DimensionError("draws and encoding disagree on the category count");
  if (x.size() != draws.dim() - draws.num_cutpoints)
    throw DimensionError("covariate row has " + std::to_string(x.size()) + " entries, model has " +
                         std::to_string(draws.dim() - draws.num_cutpoints));
}

void summarize(ConditionalSummary& out, bool use_mean) {
  const std::size_t cols = out.per_draw.cols();
  const double tail = 0.5 * (1.0 - out.level);
  out.point.resize(cols);
  out.lower.resize(cols);
  out.upper.resize(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    const auto column = out.per_draw.column(c);
    if (use_mean) {
      double s = 0.0;
      for (double v : column) s += v;
      out.point[c] = s / static_cast<double>(column.size());
    } else {
      out.point[c] = median(column);
    }
    out.lower[c] = empirical_quantile(column, tail);
    out.upper[c] = empirical_quantile(column, 1.0 - tail);
  }
}

ConditionalSummary scalar_summary(Functional f, const PosteriorDraws& draws,
                                  std::span<const double> x, double level,
                                  const std::vector<double>& values) {
  ConditionalSummary out;
  out.target = f;
  out.at_covariates.assign(x.begin(), x.end());
  out.level = level;
  out.per_draw = Matrix(draws.num_draws(), 1);
  for (std::size_t s = 0; s < values.size(); ++s) out.per_draw(s, 0) = values[s];
  summarize(out, false);
  return out;
}

}  // namespace

std::string_view to_string(Functional f) {
  switch (f) {
    case Functional::cdf: return "cdf";
    case Functional::mean: return "mean";
    case Functional::quantile: return "quantile";
    case Functional::transformation: return "transformation";
  }
  return "unknown";
}

double empirical_quantile(std::span<const double> values, double prob) {
  if (values.empty()) throw DimensionError("empirical_quantile: no values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double median(std::span<const double> values) { return empirical_quantile(values, 0.5); }

namespace per_draw {

std::vector<double> cdf(std::span<const double> gamma, double eta, Link link) {
  std::vector<double> out(gamma.size() + 1);
  for (std::size_t j = 0; j < gamma.size(); ++j) out[j] = detail::raw_cdf(link, gamma[j] - eta);
  out.back() = 1.0;
  return out;
}

double mean(std::span<const double> cdf, std::span<const double> support) {
  double m = 0.0;
  double prev = 0.0;
  for (std::size_t j = 0; j < cdf.size(); ++j) {
    m += support[j] * (cdf[j] - prev);
    prev = cdf[j];
  }
  return m;
}

double quantile(std::span<const double> cdf, std::span<const double> support, double q) {
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), q);
  const std::size_t j = it == cdf.end() ? cdf.size() - 1 : static_cast<std::size_t>(it - cdf.begin());
  if (j == 0) return support[0];
  const double f_lo = cdf[j - 1];
  const double f_hi = cdf[j];
  if (!(f_hi > f_lo)) return support[j];
  return support[j - 1] + (q - f_lo) / (f_hi - f_lo) * (support[j] - support[j - 1]);
}

}  // namespace per_draw

int step_index(const OrdinalEncoding& encoding, double y) {
  const auto& u = encoding.unique_values;
  return static_cast<int>(std::upper_bound(u.begin(), u.end(), y) - u.begin());
}

ConditionalSummary conditional_cdf(const PosteriorDraws& draws, Link link,
                                   std::span<const double> x, const OrdinalEncoding& encoding,
                                   double level) {
  check_draws(draws, x, encoding);
  check_level(level);
  ConditionalSummary out;
  out.target = Functional::cdf;
  out.at_covariates.assign(x.begin(), x.end());
  out.support = encoding.unique_values;
  out.level = level;
  out.per_draw = Matrix(draws.num_draws(), encoding.unique_values.size());
  for (std::size_t s = 0; s < draws.num_draws(); ++s) {
    const auto f = per_draw::cdf(draws.gamma(s), dot(x, draws.beta(s)), link);
    std::copy(f.begin(), f.end(), out.per_draw.row(s).begin());
  }
  summarize(out, true);
  return out;
}

ConditionalSummary conditional_mean(const PosteriorDraws& draws, Link link,
                                    std::span<const double> x, const OrdinalEncoding& encoding,
                                    std::optional<double> censored_value, double level) {
  check_draws(draws, x, encoding);
  check_level(level);
  std::vector<double> support = encoding.unique_values;
  if (encoding.lowest_censored) {
    if (!censored_value)
      throw std::invalid_argument("conditional_mean: the lowest category is censored; a censored value is required");
    support[0] = *censored_value;
  }
  std::vector<double> values(draws.num_draws());
  for (std::size_t s = 0; s < draws.num_draws(); ++s)
    values[s] = per_draw::mean(per_draw::cdf(draws.gamma(s), dot(x, draws.beta(s)), link), support);
  return scalar_summary(Functional::mean, draws, x, level, values);
}

ConditionalSummary conditional_quantile(const PosteriorDraws& draws, Link link,
                                        std::span<const double> x,
                                        const OrdinalEncoding& encoding, double q, double level) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("conditional_quantile: q must lie in (0, 1)");
  check_draws(draws, x, encoding);
  check_level(level);
  std::vector<double> values(draws.num_draws());
  for (std::size_t s = 0; s < draws.num_draws(); ++s)
    values[s] = per_draw::quantile(per_draw::cdf(draws.gamma(s), dot(x, draws.beta(s)), link),
                                   encoding.unique_values, q);
  return scalar_summary(Functional::quantile, draws, x, level, values);
}

ConditionalSummary estimate_transformation(const PosteriorDraws& draws,
                                           const OrdinalEncoding& encoding, double level) {
  if (encoding.num_categories() < 2) throw DimensionError("transformation needs J >= 2");
  if (draws.num_cutpoints + 1 != static_cast<std::size_t>(encoding.num_categories()))
    throw DimensionError("draws and encoding disagree on the category count");
  check_level(level);
  ConditionalSummary out;
  out.target = Functional::transformation;
  out.level = level;
  out.support.assign(encoding.unique_values.begin(), encoding.unique_values.end() - 1);
  out.per_draw = Matrix(draws.num_draws(), draws.num_cutpoints);
  for (std::size_t s = 0; s < draws.num_draws(); ++s) {
    const auto g = draws.gamma(s);
    std::copy(g.begin(), g.end(), out.per_draw.row(s).begin());
  }
  summarize(out, false);
  return out;
}

}  // namespace cpm
