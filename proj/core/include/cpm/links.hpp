#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cpm {

/// Link family of a cumulative probability model. G is the CDF that
/// maps the linear predictor to a cumulative probability:
///   logit  -> standard logistic
///   probit -> standard normal
///   loglog -> standard Gumbel, G(x) = exp(-exp(-x))
enum class Link { logit, probit, loglog };

std::string_view to_string(Link link);

/// Parses "logit", "probit" or "loglog"; throws std::invalid_argument otherwise.
Link parse_link(std::string_view name);

/// Raised for arguments outside a function's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Smallest probability returned by cdf(). Probabilities are clamped to
/// [kProbFloor, kProbCeil] so that their logs stay finite.
inline constexpr double kProbFloor = 1e-300;
/// Largest double strictly below one.
inline constexpr double kProbCeil = 1.0 - 0x1p-53;

double cdf(Link link, double x);
double pdf(Link link, double x);
double quantile(Link link, double p);

namespace detail {

// Unclamped companions used by the likelihood. None of these validate
// their argument; +/-infinity is accepted where it has a limit.

double log_cdf(Link link, double x);
/// log(1 - G(x)), accurate in the upper tail.
double log_ccdf(Link link, double x);
double log_pdf(Link link, double x);
/// d/dx log g(x).
double dlog_pdf(Link link, double x);
/// 1 - G(x) without cancellation.
double ccdf(Link link, double x);
/// G(x) without clamping.
double raw_cdf(Link link, double x);
double raw_pdf(Link link, double x);

/// log(G(upper) - G(lower)) for upper > lower. Either endpoint may be
/// infinite (the cutpoint sentinels). Works in probability space and
/// falls back to log space when the difference underflows.
double log_cdf_diff(Link link, double upper, double lower);

}  // namespace detail
}  // namespace cpm
