#pragma once

// Simulation study harness: data generators for the three transformation-model
// scenarios (with lower-detection-limit variants), closed-form truths, and
// percent-bias aggregation over replicated fits.
//
//   1: Y = exp(X1 - 0.5 X2 + e),  e ~ N(0, 1),            probit fit
//   2: Y = exp(X1 - 0.5 X2 + e),  e ~ Logistic(0, 1/3),   logit fit (rescaled by 1/3)
//   3: Y = X1 - 0.5 X2 + e,       e ~ Gumbel(0, 1),        loglog fit
//
// with X1 ~ Bernoulli(0.5) and X2 ~ N(0, 1). Censored variants floor Y at 1
// (scenarios 1, 2) or 0 (scenario 3).

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpm/links.hpp"
#include "cpm/matrix.hpp"
#include "cpm/model.hpp"
#include "cpm/sampler.hpp"

namespace cpm::sim {

inline constexpr double kBeta1 = 1.0;
inline constexpr double kBeta2 = -0.5;

struct ScenarioSpec {
  int id = 1;
  int n = 100;
  bool censored = false;
  AlphaSchedule alpha_schedule = AlphaSchedule::recip_b;
  Link link = Link::probit;
  int reps = 100;
  std::uint64_t seed = 1;
};

/// Builds a spec with the scenario's fixed link. Throws on an unknown id or n < 2.
ScenarioSpec make_spec(int id, int n, bool censored, AlphaSchedule schedule, int reps,
                       std::uint64_t seed);

Link scenario_link(int id);
double censoring_threshold(int id);
/// Error scale of the generating model relative to the fitted link (1/3 for
/// scenario 2, otherwise 1).
double scenario_scale(int id);

struct Dataset {
  std::vector<double> y;
  Matrix x;  // n x 2 raw covariates (X1, X2)
  int scenario = 1;
  bool censored = false;
  std::uint64_t data_seed = 0;
  std::size_t rep_index = 0;
};

/// Deterministic in (spec.seed, id, n, rep_index). The censoring flag does
/// not enter the seed, so censored and uncensored datasets agree above the
/// threshold.
Dataset generate_scenario(const ScenarioSpec& spec, std::size_t rep_index);

/// The five outcome values at which cutpoints and the conditional CDF are
/// evaluated.
std::array<double, 5> target_grid(int id);

/// Whether a grid value is estimable: under censoring, only values at or
/// above the threshold are.
bool target_available(const ScenarioSpec& spec, double y);

/// A closed-form truth, or the reason it does not exist.
struct Truth {
  std::optional<double> value;
  std::string reason;
  bool available() const { return value.has_value(); }
};

struct Covariates {
  double x1;
  double x2;
};

/// H^{-1}(y) on the generating scale, i.e. the cutpoint a correctly
/// rescaled fit estimates at y (log y for scenarios 1-2, y for scenario 3).
Truth true_transformation(const ScenarioSpec& spec, double y);
Truth true_cdf(const ScenarioSpec& spec, Covariates x, double y);
/// Mean of the uncensored outcome.
Truth true_mean(const ScenarioSpec& spec, Covariates x);
/// Quantile of the uncensored outcome; unavailable under censoring when it
/// falls below the threshold.
Truth true_quantile(const ScenarioSpec& spec, Covariates x, double q);

/// Multiplies cutpoints and coefficients by a > 0, mapping estimates of
/// xi = beta / a back to beta.
PosteriorDraws rescale_draws(const PosteriorDraws& draws, double a);

struct PercentBias {
  double value = 0.0;
  /// True when the truth is zero and `value` is the average absolute-scale
  /// bias mean(est - truth) instead of a percentage.
  bool absolute = false;
};

/// 100 * mean((est - truth) / truth), or mean(est - truth) flagged when truth == 0.
PercentBias percent_bias(std::span<const double> estimates, double truth);

/// Labels of the quantities tracked per replicate, in report order.
std::vector<std::string> quantity_labels();

/// Truths aligned with quantity_labels().
std::vector<Truth> quantity_truths(const ScenarioSpec& spec);

/// Point estimates from one fitted replicate, aligned with quantity_labels().
/// Missing entries are quantities the replicate could not estimate.
struct RepEstimates {
  std::vector<std::optional<double>> values;
  std::size_t divergences = 0;
  double max_rhat = 0.0;
};

/// Posterior point estimates for one dataset: medians of beta, of the
/// (uncentered, rescaled) cutpoints at the grid, of the conditional mean,
/// median and 20th percentile at (1,0) and (1,1); posterior means of the
/// conditional CDF at (1,1).
RepEstimates estimate_quantities(const ScenarioSpec& spec, const Dataset& data,
                                 const PosteriorDraws& draws, const CpmData& cpm_data);

/// Generates, fits and estimates one replicate.
RepEstimates run_replicate(const ScenarioSpec& spec, std::size_t rep_index,
                           const SamplerConfig& sampler);

struct QuantityResult {
  std::string label;
  std::optional<double> truth;
  double mean_estimate = 0.0;
  PercentBias bias;
  int rep_count = 0;
  bool skipped = false;
  std::string skip_reason;
};

struct BiasReport {
  ScenarioSpec cell;
  std::vector<QuantityResult> quantities;
  int rep_count = 0;
  int failed_reps = 0;
  std::vector<std::string> failures;
  std::size_t divergences = 0;
};

struct StudyConfig {
  std::vector<ScenarioSpec> cells;
  /// Chains, warmup, sampling and tree settings for every fit; the seed is
  /// replaced per (cell, rep).
  SamplerConfig sampler;
  std::uint64_t seed = 1;
  int reps = 100;
  int threads = 0;
};

/// The full grid: 3 scenarios x {uncensored, censored} x {inverse_J, recip_a,
/// recip_b} x n in {25, 50, 100, 200, 400}.
std::vector<ScenarioSpec> default_grid(int reps, std::uint64_t seed);

/// Seed of the fit for a (cell, rep): hashed from the study seed and the
/// cell's defining fields, so it does not depend on grid order.
std::uint64_t fit_seed(const ScenarioSpec& cell, std::size_t rep_index);

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every (cell, rep) job on a work queue and aggregates per cell.
/// Failed replicates are counted and listed, never silently dropped.
std::vector<BiasReport> run_study(const StudyConfig& config, const ProgressFn& progress = {});

/// Aggregates replicate estimates for one cell.
BiasReport aggregate(const ScenarioSpec& cell, const std::vector<std::optional<RepEstimates>>& reps,
                     const std::vector<std::string>& failures);

/// One row per cell x quantity.
void write_bias_csv(std::ostream& os, const std::vector<BiasReport>& reports);

/// Parses a study configuration from JSON text. Missing grid axes fall back
/// to the default grid.
StudyConfig parse_study_config(const std::string& json_text);

/// JSON manifest with the grid, per-cell seeds and software version.
std::string study_manifest_json(const StudyConfig& config);

std::string_view software_version();

/// Synthetic stand-in shaped like a clinical biomarker case study (n = 216,
/// right-skewed outcomes under a lower detection limit). Not real data.
struct SurrogateData {
  std::vector<std::string> column_names;  // covariates
  Matrix x;
  std::vector<double> outcome_a;  // about 3% at its detection limit
  std::vector<double> outcome_b;  // about 39% at its detection limit
  double limit_a = 0.0;
  double limit_b = 0.0;
};

SurrogateData make_surrogate(std::uint64_t seed);

/// Writes the surrogate as a CSV with columns outcome_a, outcome_b and the covariates.
void write_surrogate_csv(std::ostream& os, const SurrogateData& data);

}  // namespace cpm::sim
