#include "cpm/links.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cpm {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
// Below this the probit log-CDF switches to the asymptotic expansion;
// erfc underflows near -37.5.
constexpr double kProbitTail = -30.0;
// Differences smaller than this lose precision as subnormals.
constexpr double kDiffFloor = 1e-290;

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log Phi(x) for x <= kProbitTail via the Mills-ratio series.
double probit_log_cdf_tail(double x) {
  const double z = 1.0 / (x * x);
  const double series =
      1.0 + z * (-1.0 + z * (3.0 + z * (-15.0 + z * (105.0 + z * (-945.0)))));
  return -0.5 * x * x - std::log(-x) - kLogSqrt2Pi + std::log(series);
}

double probit_log_cdf(double x) {
  if (x <= kProbitTail) return probit_log_cdf_tail(x);
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x * kInvSqrt2));
  return std::log(0.5 * std::erfc(-x * kInvSqrt2));
}

// Wichura (1988), AS241 PPND16, followed by one Halley step.
double probit_quantile(double p) {
  const double q = p - 0.5;
  double x;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    x = q *
        (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
              6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
            1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
          1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
              3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
            5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
  } else {
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    if (r <= 5.0) {
      r -= 1.6;
      x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
              3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
            4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
            2.05319162663775882187e+0) * r + 1.0);
    } else {
      r -= 5.0;
      x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
            5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
    }
    if (q < 0.0) x = -x;
  }
  // Polish against the erfc-based CDF; the residual is taken in whichever
  // tail keeps it free of cancellation.
  const double dens = std::exp(-0.5 * x * x - kLogSqrt2Pi);
  if (dens > 0.0) {
    const double resid = x > 0.0 ? (1.0 - p) - 0.5 * std::erfc(x * kInvSqrt2)
                                 : 0.5 * std::erfc(-x * kInvSqrt2) - p;
    const double t = resid / dens;
    x -= t / (1.0 + 0.5 * x * t);
  }
  return x;
}

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw DomainError(std::string(what) + ": argument must be finite");
}

}  // namespace

std::string_view to_string(Link link) {
  switch (link) {
    case Link::logit: return "logit";
    case Link::probit: return "probit";
    case Link::loglog: return "loglog";
  }
  return "unknown";
}

Link parse_link(std::string_view name) {
  if (name == "logit") return Link::logit;
  if (name == "probit") return Link::probit;
  if (name == "loglog") return Link::loglog;
  throw std::invalid_argument("unknown link '" + std::string(name) + "' (expected logit|probit|loglog)");
}

namespace detail {

double raw_cdf(Link link, double x) {
  switch (link) {
    case Link::logit: return logistic(x);
    case Link::probit: return 0.5 * std::erfc(-x * kInvSqrt2);
    case Link::loglog: return std::exp(-std::exp(-x));
  }
  return 0.0;
}

double ccdf(Link link, double x) {
  switch (link) {
    case Link::logit: return logistic(-x);
    case Link::probit: return 0.5 * std::erfc(x * kInvSqrt2);
    case Link::loglog: return -std::expm1(-std::exp(-x));
  }
  return 0.0;
}

double raw_pdf(Link link, double x) { return std::exp(log_pdf(link, x)); }

double log_cdf(Link link, double x) {
  if (x == -INFINITY) return -INFINITY;
  if (x == INFINITY) return 0.0;
  switch (link) {
    case Link::logit: return -softplus(-x);
    case Link::probit: return probit_log_cdf(x);
    case Link::loglog: return -std::exp(-x);
  }
  return 0.0;
}

double log_ccdf(Link link, double x) {
  if (x == -INFINITY) return 0.0;
  if (x == INFINITY) return -INFINITY;
  switch (link) {
    case Link::logit: return -softplus(x);
    case Link::probit: return probit_log_cdf(-x);
    case Link::loglog: {
      const double t = std::exp(-x);
      if (t < 1e-8) return -x + std::log1p(-0.5 * t);
      return std::log(-std::expm1(-t));
    }
  }
  return 0.0;
}

double log_pdf(Link link, double x) {
  if (std::isinf(x)) return -INFINITY;
  switch (link) {
    case Link::logit: return -softplus(x) - softplus(-x);
    case Link::probit: return -0.5 * x * x - kLogSqrt2Pi;
    case Link::loglog: return -x - std::exp(-x);
  }
  return 0.0;
}

double dlog_pdf(Link link, double x) {
  switch (link) {
    case Link::logit: return std::tanh(-0.5 * x);
    case Link::probit: return -x;
    case Link::loglog: return std::expm1(-x);
  }
  return 0.0;
}

double log_cdf_diff(Link link, double upper, double lower) {
  if (upper == INFINITY) return log_ccdf(link, lower);
  if (lower == -INFINITY) return log_cdf(link, upper);
  if (!(upper > lower)) return std::log(kProbFloor);
  const bool upper_tail = lower > 0.0;
  const double diff = upper_tail ? ccdf(link, lower) - ccdf(link, upper)
                                 : raw_cdf(link, upper) - raw_cdf(link, lower);
  if (diff >= kDiffFloor) return std::log(diff);
  double big, small;
  if (upper_tail) {
    big = log_ccdf(link, lower);
    small = log_ccdf(link, upper);
  } else {
    big = log_cdf(link, upper);
    small = log_cdf(link, lower);
  }
  const double out = big + std::log1p(-std::exp(small - big));
  return std::isfinite(out) ? out : std::log(kProbFloor);
}

}  // namespace detail

double cdf(Link link, double x) {
  require_finite(x, "cdf");
  return std::clamp(detail::raw_cdf(link, x), kProbFloor, kProbCeil);
}

double pdf(Link link, double x) {
  require_finite(x, "pdf");
  return detail::raw_pdf(link, x);
}

double quantile(Link link, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile: probability must lie in (0, 1)");
  switch (link) {
    case Link::logit: return std::log(p) - std::log1p(-p);
    case Link::probit: return probit_quantile(p);
    case Link::loglog: return -std::log(-std::log(p));
  }
  return 0.0;
}

}  // namespace cpm
