#pragma once

// Cumulative probability model: outcome encoding, likelihood, the
// Dirichlet-induced cutpoint prior and the unconstrained parameterization
// used by the sampler.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cpm/links.hpp"
#include "cpm/matrix.hpp"

namespace cpm {

/// Thrown when array sizes disagree with the model dimensions.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Outcomes recoded as ordered categories. Categories are 1-based to match
/// the usual r(y) notation; category j corresponds to unique_values[j - 1].
struct OrdinalEncoding {
  std::vector<double> unique_values;
  std::vector<int> ranks;
  std::optional<double> detection_limit;
  /// True when the lowest category holds values recorded at the detection limit.
  bool lowest_censored = false;

  int num_categories() const { return static_cast<int>(unique_values.size()); }
  std::size_t size() const { return ranks.size(); }
};

/// Sorts and ranks outcomes; ties share a category. With a detection limit,
/// values below it are set to the limit first.
OrdinalEncoding encode_outcomes(std::span<const double> y,
                                std::optional<double> detection_limit = std::nullopt);

/// Encoded outcomes with their (optionally centered) covariate matrix.
struct CpmData {
  OrdinalEncoding encoding;
  Matrix x;  // n x p, centered when `centered` is set
  std::vector<double> covariate_means;
  std::vector<std::string> column_names;
  bool centered = true;

  std::size_t num_obs() const { return encoding.size(); }
  std::size_t num_covariates() const { return x.cols(); }
  int num_categories() const { return encoding.num_categories(); }

  /// Maps a raw-scale covariate row onto the scale the model was fit on.
  std::vector<double> to_model_scale(std::span<const double> raw_row) const;
};

/// `x` is n x p on the raw scale; rows must match the encoding. Empty
/// column names are replaced by x1..xp.
CpmData make_cpm_data(OrdinalEncoding encoding, const Matrix& x,
                      std::vector<std::string> column_names = {}, bool center = true);

/// Keeps only the listed observations. The category set (and therefore the
/// parameter dimension) is left as it was.
CpmData subset_observations(const CpmData& data, std::span<const std::size_t> keep);

/// Cutpoints gamma (strictly increasing, J - 1 of them) and coefficients beta.
struct CpmParams {
  std::vector<double> gamma;
  std::vector<double> beta;
};

/// delta_1 = gamma_1, delta_j = log(gamma_j - gamma_{j-1}) for j >= 2.
struct UnconstrainedParams {
  std::vector<double> delta;
  std::vector<double> beta;

  /// Packs (delta, beta) into the sampler's flat vector.
  std::vector<double> flatten() const;
  static UnconstrainedParams unflatten(std::span<const double> u, std::size_t num_cutpoints);
};

UnconstrainedParams to_unconstrained(const CpmParams& params);
CpmParams to_constrained(const UnconstrainedParams& u);

enum class AlphaSchedule { uniform, jeffreys, inverse_J, recip_a, recip_b };

std::string_view to_string(AlphaSchedule schedule);
AlphaSchedule parse_alpha_schedule(std::string_view name);

/// Dirichlet concentration as a function of the category count:
/// uniform 1, jeffreys 1/2, inverse_J 1/J, recip_a 1/(2 + J/3),
/// recip_b 1/(0.8 + 0.35 J).
double alpha_schedule(AlphaSchedule schedule, int num_categories);

struct PriorSpec {
  double alpha = 1.0;
  std::optional<AlphaSchedule> schedule;
  /// Independent normal(0, sd^2) on each coefficient; flat when unset.
  std::optional<double> beta_prior_sd;

  /// Resolves the schedule (if any) for a given category count.
  static PriorSpec from_schedule(AlphaSchedule schedule, int num_categories);
};

/// pi_ij = G(gamma_j - x'beta) - G(gamma_{j-1} - x'beta), j in 1..J.
double cell_prob(const CpmParams& params, Link link, std::span<const double> x, int category);

double log_likelihood(const CpmParams& params, const CpmData& data, Link link);

/// Log of observation i's likelihood term at `params`.
double log_likelihood_obs(const CpmParams& params, const CpmData& data, Link link, std::size_t i);

/// Symmetric Dirichlet(alpha) log density on the open simplex.
double dirichlet_log_density(std::span<const double> pi, double alpha);

/// Symmetric Dirichlet on the at-origin cell probabilities pushed forward to
/// the cutpoints: log Dir(h(gamma); alpha) + sum_j log g(gamma_j).
double induced_prior_log_density(std::span<const double> gamma, Link link, double alpha);

/// Log posterior on the unconstrained scale (log-likelihood, induced prior,
/// optional beta prior, and the delta -> gamma log-Jacobian).
double log_posterior(const UnconstrainedParams& u, const CpmData& data, Link link,
                     const PriorSpec& prior);

std::vector<double> grad_log_posterior(const UnconstrainedParams& u, const CpmData& data,
                                       Link link, const PriorSpec& prior);

/// Log posterior of a fitted model as a differentiable target over the flat
/// unconstrained vector. Holds references; the data must outlive it.
class CpmPosterior {
 public:
  CpmPosterior(const CpmData& data, Link link, PriorSpec prior);

  std::size_t dim() const;
  std::size_t num_cutpoints() const { return num_cutpoints_; }
  const CpmData& data() const { return *data_; }
  Link link() const { return link_; }
  const PriorSpec& prior() const { return prior_; }

  double log_density(std::span<const double> u) const;
  /// Returns the log density and writes its gradient into `grad`.
  double log_density_gradient(std::span<const double> u, std::span<double> grad) const;

 private:
  const CpmData* data_;
  Link link_;
  PriorSpec prior_;
  std::size_t num_cutpoints_;
};

}  // namespace cpm
