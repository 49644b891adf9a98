#pragma once

// Posterior conditional functionals computed draw by draw: the step CDF,
// the conditional mean, interpolated quantiles and the estimated
// transformation (cutpoints against outcome values).

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cpm/links.hpp"
#include "cpm/matrix.hpp"
#include "cpm/model.hpp"
#include "cpm/sampler.hpp"

namespace cpm {

enum class Functional { cdf, mean, quantile, transformation };

std::string_view to_string(Functional f);

/// Per-draw values of a functional and their summaries. Scalar functionals
/// have one column; the CDF has one column per support point and the
/// transformation one per cutpoint.
struct ConditionalSummary {
  Functional target = Functional::mean;
  std::vector<double> at_covariates;  // model (centered) scale
  std::vector<double> support;        // outcome value for each column
  Matrix per_draw;                    // S x columns
  std::vector<double> point;          // posterior mean for the CDF, median otherwise
  std::vector<double> lower;
  std::vector<double> upper;
  double level = 0.95;

  std::size_t columns() const { return per_draw.cols(); }
};

/// Type-7 (linear interpolation) empirical quantile of unsorted values.
double empirical_quantile(std::span<const double> values, double prob);
double median(std::span<const double> values);

/// Conditional CDF F(y_j | x) = G(gamma_j - x'beta) for each draw, a step
/// function over the encoding's unique values ending at exactly 1.
ConditionalSummary conditional_cdf(const PosteriorDraws& draws, Link link,
                                   std::span<const double> x, const OrdinalEncoding& encoding,
                                   double level = 0.95);

/// E[Y | x] = sum_j y_j f(y_j | x). When the lowest category is censored
/// its value is replaced by `censored_value`, which is then required.
ConditionalSummary conditional_mean(const PosteriorDraws& draws, Link link,
                                    std::span<const double> x, const OrdinalEncoding& encoding,
                                    std::optional<double> censored_value = std::nullopt,
                                    double level = 0.95);

/// q-th conditional quantile with linear interpolation inside the step
/// that first reaches q. Returns y_1 when the first step already does.
ConditionalSummary conditional_quantile(const PosteriorDraws& draws, Link link,
                                        std::span<const double> x,
                                        const OrdinalEncoding& encoding, double q,
                                        double level = 0.95);

/// Pairs (y_j, gamma_j) for j = 1..J-1, summarized by posterior medians.
ConditionalSummary estimate_transformation(const PosteriorDraws& draws,
                                           const OrdinalEncoding& encoding, double level = 0.95);

/// Single-draw building blocks, exposed for the simulation harness and tests.
namespace per_draw {
/// F(y_j | x) for j = 1..J given one draw's cutpoints and linear predictor.
std::vector<double> cdf(std::span<const double> gamma, double eta, Link link);
double mean(std::span<const double> cdf, std::span<const double> support);
double quantile(std::span<const double> cdf, std::span<const double> support, double q);
}  // namespace per_draw

/// Index j (1-based) of the step containing y, i.e. the largest j with
/// y_j <= y; 0 when y lies below every support point.
int step_index(const OrdinalEncoding& encoding, double y);

}  // namespace cpm
