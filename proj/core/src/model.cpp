#include "cpm/model.hpp"

#include <algorithm>
#include <cmath>

namespace cpm {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

void check_cutpoints_increasing(std::span<const double> gamma) {
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    if (!std::isfinite(gamma[k])) throw DomainError("cutpoints must be finite");
    if (k > 0 && !(gamma[k] > gamma[k - 1]))
      throw DomainError("cutpoints must be strictly increasing");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Cutpoint bounding category `category` from above / below, shifted by the
// linear predictor. Sentinels are +/- infinity.
double upper_bound(std::span<const double> gamma, int category, double eta) {
  return category <= static_cast<int>(gamma.size()) ? gamma[category - 1] - eta : INFINITY;
}
double lower_bound(std::span<const double> gamma, int category, double eta) {
  return category >= 2 ? gamma[category - 2] - eta : -INFINITY;
}

// Log-likelihood, accumulating d/dgamma and d/dbeta when the gradient spans
// are non-empty.
double likelihood_terms(std::span<const double> gamma, std::span<const double> beta,
                        const CpmData& data, Link link, std::span<double> grad_gamma,
                        std::span<double> grad_beta) {
  const bool want_grad = !grad_gamma.empty();
  const std::size_t p = beta.size();
  double lp = 0.0;
  for (std::size_t i = 0; i < data.num_obs(); ++i) {
    const auto xi = data.x.row(i);
    const double eta = p == 0 ? 0.0 : dot(xi, beta);
    const int r = data.encoding.ranks[i];
    const double up = upper_bound(gamma, r, eta);
    const double lo = lower_bound(gamma, r, eta);
    const double log_pi = detail::log_cdf_diff(link, up, lo);
    lp += log_pi;
    if (!want_grad) continue;
    const double wu = std::isinf(up) ? 0.0 : std::exp(detail::log_pdf(link, up) - log_pi);
    const double wl = std::isinf(lo) ? 0.0 : std::exp(detail::log_pdf(link, lo) - log_pi);
    if (!std::isinf(up)) grad_gamma[r - 1] += wu;
    if (!std::isinf(lo)) grad_gamma[r - 2] -= wl;
    const double dw = wu - wl;
    for (std::size_t k = 0; k < p; ++k) grad_beta[k] -= xi[k] * dw;
  }
  return lp;
}

// Induced Dirichlet prior on the cutpoints, with optional gradient.
double prior_terms(std::span<const double> gamma, Link link, double alpha,
                   std::span<double> grad_gamma) {
  const bool want_grad = !grad_gamma.empty();
  const std::size_t num_cut = gamma.size();
  const double num_cat = static_cast<double>(num_cut + 1);
  double lp = std::lgamma(num_cat * alpha) - num_cat * std::lgamma(alpha);
  std::vector<double> log_pdf(num_cut);
  for (std::size_t k = 0; k < num_cut; ++k) {
    log_pdf[k] = detail::log_pdf(link, gamma[k]);
    lp += log_pdf[k];
    if (want_grad) grad_gamma[k] += detail::dlog_pdf(link, gamma[k]);
  }
  if (alpha == 1.0) return lp;
  double sum_log_pi = 0.0;
  for (std::size_t j = 1; j <= num_cut + 1; ++j) {
    const int cat = static_cast<int>(j);
    const double up = upper_bound(gamma, cat, 0.0);
    const double lo = lower_bound(gamma, cat, 0.0);
    const double log_pi = detail::log_cdf_diff(link, up, lo);
    sum_log_pi += log_pi;
    if (!want_grad) continue;
    if (j <= num_cut) grad_gamma[j - 1] += (alpha - 1.0) * std::exp(log_pdf[j - 1] - log_pi);
    if (j >= 2) grad_gamma[j - 2] -= (alpha - 1.0) * std::exp(log_pdf[j - 2] - log_pi);
  }
  return lp + (alpha - 1.0) * sum_log_pi;
}

double beta_prior_terms(std::span<const double> beta, const PriorSpec& prior,
                        std::span<double> grad_beta) {
  if (!prior.beta_prior_sd) return 0.0;
  const double sd = *prior.beta_prior_sd;
  const double var = sd * sd;
  double lp = 0.0;
  for (std::size_t k = 0; k < beta.size(); ++k) {
    lp += -0.5 * beta[k] * beta[k] / var - std::log(sd) - kLogSqrt2Pi;
    if (!grad_beta.empty()) grad_beta[k] -= beta[k] / var;
  }
  return lp;
}

void check_dimensions(std::size_t num_cut, std::size_t p, const CpmData& data) {
  if (num_cut + 1 != static_cast<std::size_t>(data.num_categories()))
    throw DimensionError("cutpoint count does not match the category count");
  if (p != data.num_covariates())
    throw DimensionError("coefficient count does not match the covariate count");
}

// Log posterior over the flat unconstrained vector with optional gradient.
double evaluate(std::span<const double> u, std::size_t num_cut, const CpmData& data, Link link,
                const PriorSpec& prior, std::span<double> grad) {
  const bool want_grad = !grad.empty();
  std::vector<double> gamma(num_cut);
  double lp = 0.0;
  for (std::size_t k = 0; k < num_cut; ++k) {
    if (k == 0) {
      gamma[0] = u[0];
    } else {
      gamma[k] = gamma[k - 1] + std::exp(u[k]);
      lp += u[k];
    }
  }
  const auto beta = u.subspan(num_cut);
  std::vector<double> grad_gamma(want_grad ? num_cut : 0, 0.0);
  std::span<double> grad_beta = want_grad ? grad.subspan(num_cut) : std::span<double>{};
  if (want_grad) std::fill(grad_beta.begin(), grad_beta.end(), 0.0);

  lp += likelihood_terms(gamma, beta, data, link, grad_gamma, grad_beta);
  lp += prior_terms(gamma, link, prior.alpha, grad_gamma);
  lp += beta_prior_terms(beta, prior, grad_beta);

  if (want_grad && num_cut > 0) {
    // Chain rule through gamma_k = delta_1 + sum_{m=2..k} exp(delta_m).
    double suffix = 0.0;
    for (std::size_t k = num_cut; k-- > 1;) {
      suffix += grad_gamma[k];
      grad[k] = std::exp(u[k]) * suffix + 1.0;
    }
    grad[0] = suffix + grad_gamma[0];
  }
  return lp;
}

}  // namespace

OrdinalEncoding encode_outcomes(std::span<const double> y, std::optional<double> detection_limit) {
  if (y.empty()) throw std::invalid_argument("encode_outcomes: no outcomes");
  if (detection_limit && !std::isfinite(*detection_limit))
    throw DomainError("encode_outcomes: detection limit must be finite");
  std::vector<double> values(y.begin(), y.end());
  for (double& v : values) {
    if (!std::isfinite(v)) throw DomainError("encode_outcomes: outcomes must be finite");
    if (detection_limit && v < *detection_limit) v = *detection_limit;
  }
  OrdinalEncoding enc;
  enc.unique_values = values;
  std::sort(enc.unique_values.begin(), enc.unique_values.end());
  enc.unique_values.erase(std::unique(enc.unique_values.begin(), enc.unique_values.end()),
                          enc.unique_values.end());
  enc.ranks.reserve(values.size());
  for (double v : values) {
    const auto it = std::lower_bound(enc.unique_values.begin(), enc.unique_values.end(), v);
    enc.ranks.push_back(static_cast<int>(it - enc.unique_values.begin()) + 1);
  }
  enc.detection_limit = detection_limit;
  enc.lowest_censored = detection_limit && enc.unique_values.front() == *detection_limit;
  return enc;
}

std::vector<double> CpmData::to_model_scale(std::span<const double> raw_row) const {
  if (raw_row.size() != num_covariates())
    throw DimensionError("covariate row has " + std::to_string(raw_row.size()) +
                         " entries, model has " + std::to_string(num_covariates()));
  std::vector<double> out(raw_row.begin(), raw_row.end());
  if (centered)
    for (std::size_t k = 0; k < out.size(); ++k) out[k] -= covariate_means[k];
  return out;
}

CpmData make_cpm_data(OrdinalEncoding encoding, const Matrix& x,
                      std::vector<std::string> column_names, bool center) {
  const std::size_t n = encoding.size();
  const std::size_t p = x.cols();
  if (p > 0 && x.rows() != n)
    throw DimensionError("covariate matrix has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(n));
  CpmData data;
  data.encoding = std::move(encoding);
  data.x = p > 0 ? x : Matrix(n, 0);
  data.centered = center;
  data.covariate_means.assign(p, 0.0);
  for (std::size_t r = 0; r < data.x.rows(); ++r)
    for (std::size_t c = 0; c < p; ++c) {
      if (!std::isfinite(data.x(r, c))) throw DomainError("covariates must be finite");
      data.covariate_means[c] += data.x(r, c);
    }
  for (double& m : data.covariate_means) m /= static_cast<double>(n);
  if (center)
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < p; ++c) data.x(r, c) -= data.covariate_means[c];
  if (column_names.empty())
    for (std::size_t c = 0; c < p; ++c) column_names.push_back("x" + std::to_string(c + 1));
  if (column_names.size() != p) throw DimensionError("column name count does not match covariates");
  data.column_names = std::move(column_names);
  return data;
}

CpmData subset_observations(const CpmData& data, std::span<const std::size_t> keep) {
  CpmData out;
  out.encoding.unique_values = data.encoding.unique_values;
  out.encoding.detection_limit = data.encoding.detection_limit;
  out.encoding.lowest_censored = data.encoding.lowest_censored;
  out.x = Matrix(keep.size(), data.num_covariates());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const std::size_t i = keep[r];
    if (i >= data.num_obs()) throw DimensionError("subset index out of range");
    out.encoding.ranks.push_back(data.encoding.ranks[i]);
    for (std::size_t c = 0; c < data.num_covariates(); ++c) out.x(r, c) = data.x(i, c);
  }
  out.covariate_means = data.covariate_means;
  out.column_names = data.column_names;
  out.centered = data.centered;
  return out;
}

std::vector<double> UnconstrainedParams::flatten() const {
  std::vector<double> u(delta);
  u.insert(u.end(), beta.begin(), beta.end());
  return u;
}

UnconstrainedParams UnconstrainedParams::unflatten(std::span<const double> u,
                                                   std::size_t num_cutpoints) {
  if (num_cutpoints > u.size()) throw DimensionError("unflatten: vector too short");
  return {{u.begin(), u.begin() + static_cast<std::ptrdiff_t>(num_cutpoints)},
          {u.begin() + static_cast<std::ptrdiff_t>(num_cutpoints), u.end()}};
}

UnconstrainedParams to_unconstrained(const CpmParams& params) {
  check_cutpoints_increasing(params.gamma);
  UnconstrainedParams u;
  u.delta.resize(params.gamma.size());
  for (std::size_t k = 0; k < params.gamma.size(); ++k)
    u.delta[k] = k == 0 ? params.gamma[0] : std::log(params.gamma[k] - params.gamma[k - 1]);
  u.beta = params.beta;
  return u;
}

CpmParams to_constrained(const UnconstrainedParams& u) {
  CpmParams params;
  params.gamma.resize(u.delta.size());
  for (std::size_t k = 0; k < u.delta.size(); ++k)
    params.gamma[k] = k == 0 ? u.delta[0] : params.gamma[k - 1] + std::exp(u.delta[k]);
  params.beta = u.beta;
  return params;
}

std::string_view to_string(AlphaSchedule schedule) {
  switch (schedule) {
    case AlphaSchedule::uniform: return "uniform";
    case AlphaSchedule::jeffreys: return "jeffreys";
    case AlphaSchedule::inverse_J: return "inverse_J";
    case AlphaSchedule::recip_a: return "recip_a";
    case AlphaSchedule::recip_b: return "recip_b";
  }
  return "unknown";
}

AlphaSchedule parse_alpha_schedule(std::string_view name) {
  for (auto s : {AlphaSchedule::uniform, AlphaSchedule::jeffreys, AlphaSchedule::inverse_J,
                 AlphaSchedule::recip_a, AlphaSchedule::recip_b})
    if (name == to_string(s)) return s;
  throw std::invalid_argument("unknown alpha schedule '" + std::string(name) +
                              "' (expected uniform|jeffreys|inverse_J|recip_a|recip_b)");
}

double alpha_schedule(AlphaSchedule schedule, int num_categories) {
  if (num_categories < 2) throw DomainError("alpha_schedule: need at least two categories");
  const double j = num_categories;
  switch (schedule) {
    case AlphaSchedule::uniform: return 1.0;
    case AlphaSchedule::jeffreys: return 0.5;
    case AlphaSchedule::inverse_J: return 1.0 / j;
    case AlphaSchedule::recip_a: return 1.0 / (2.0 + j / 3.0);
    case AlphaSchedule::recip_b: return 1.0 / (0.8 + 0.35 * j);
  }
  return 1.0;
}

PriorSpec PriorSpec::from_schedule(AlphaSchedule schedule, int num_categories) {
  PriorSpec prior;
  prior.alpha = alpha_schedule(schedule, num_categories);
  prior.schedule = schedule;
  return prior;
}

double cell_prob(const CpmParams& params, Link link, std::span<const double> x, int category) {
  const int num_cat = static_cast<int>(params.gamma.size()) + 1;
  if (category < 1 || category > num_cat)
    throw DomainError("cell_prob: category " + std::to_string(category) + " outside 1.." +
                      std::to_string(num_cat));
  if (x.size() != params.beta.size()) throw DimensionError("cell_prob: covariate size mismatch");
  const double eta = dot(x, params.beta);
  const double up = upper_bound(params.gamma, category, eta);
  const double lo = lower_bound(params.gamma, category, eta);
  const double cu = std::isinf(up) ? 1.0 : detail::raw_cdf(link, up);
  const double cl = std::isinf(lo) ? 0.0 : detail::raw_cdf(link, lo);
  return cu - cl;
}

double log_likelihood(const CpmParams& params, const CpmData& data, Link link) {
  check_dimensions(params.gamma.size(), params.beta.size(), data);
  return likelihood_terms(params.gamma, params.beta, data, link, {}, {});
}

double log_likelihood_obs(const CpmParams& params, const CpmData& data, Link link,
                          std::size_t i) {
  check_dimensions(params.gamma.size(), params.beta.size(), data);
  if (i >= data.num_obs()) throw DimensionError("observation index out of range");
  const double eta = params.beta.empty() ? 0.0 : dot(data.x.row(i), params.beta);
  const int r = data.encoding.ranks[i];
  return detail::log_cdf_diff(link, upper_bound(params.gamma, r, eta),
                              lower_bound(params.gamma, r, eta));
}

double dirichlet_log_density(std::span<const double> pi, double alpha) {
  if (!(alpha > 0.0)) throw DomainError("dirichlet_log_density: alpha must be positive");
  if (pi.size() < 2) throw DomainError("dirichlet_log_density: need at least two categories");
  double total = 0.0;
  double sum_log = 0.0;
  for (double v : pi) {
    if (!(v > 0.0)) throw DomainError("dirichlet_log_density: entries must be positive");
    total += v;
    sum_log += std::log(v);
  }
  if (std::abs(total - 1.0) > 1e-10) throw DomainError("dirichlet_log_density: entries must sum to 1");
  const double j = static_cast<double>(pi.size());
  return std::lgamma(j * alpha) - j * std::lgamma(alpha) + (alpha - 1.0) * sum_log;
}

double induced_prior_log_density(std::span<const double> gamma, Link link, double alpha) {
  if (!(alpha > 0.0)) throw DomainError("induced_prior_log_density: alpha must be positive");
  if (gamma.empty()) throw DomainError("induced_prior_log_density: need at least one cutpoint");
  check_cutpoints_increasing(gamma);
  return prior_terms(gamma, link, alpha, {});
}

double log_posterior(const UnconstrainedParams& u, const CpmData& data, Link link,
                     const PriorSpec& prior) {
  check_dimensions(u.delta.size(), u.beta.size(), data);
  const auto flat = u.flatten();
  return evaluate(flat, u.delta.size(), data, link, prior, {});
}

std::vector<double> grad_log_posterior(const UnconstrainedParams& u, const CpmData& data,
                                       Link link, const PriorSpec& prior) {
  check_dimensions(u.delta.size(), u.beta.size(), data);
  const auto flat = u.flatten();
  std::vector<double> grad(flat.size(), 0.0);
  evaluate(flat, u.delta.size(), data, link, prior, grad);
  return grad;
}

CpmPosterior::CpmPosterior(const CpmData& data, Link link, PriorSpec prior)
    : data_(&data), link_(link), prior_(std::move(prior)),
      num_cutpoints_(static_cast<std::size_t>(data.num_categories() - 1)) {
  if (data.num_categories() < 2) throw DomainError("model needs at least two outcome categories");
  if (!(prior_.alpha > 0.0)) throw DomainError("Dirichlet concentration must be positive");
}

std::size_t CpmPosterior::dim() const { return num_cutpoints_ + data_->num_covariates(); }

double CpmPosterior::log_density(std::span<const double> u) const {
  if (u.size() != dim()) throw DimensionError("log_density: wrong parameter dimension");
  return evaluate(u, num_cutpoints_, *data_, link_, prior_, {});
}

double CpmPosterior::log_density_gradient(std::span<const double> u, std::span<double> grad) const {
  if (u.size() != dim() || grad.size() != dim())
    throw DimensionError("log_density_gradient: wrong parameter dimension");
  return evaluate(u, num_cutpoints_, *data_, link_, prior_, grad);
}

}  // namespace cpm
