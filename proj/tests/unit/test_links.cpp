#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "cpm/links.hpp"
#include "doctest.h"

using namespace cpm;

namespace {

constexpr Link kLinks[] = {Link::logit, Link::probit, Link::loglog};

// Reference values from boost (probit) and closed forms in long double.
double ref_cdf(Link link, double x) {
  switch (link) {
    case Link::logit: return static_cast<double>(1.0L / (1.0L + std::exp(-static_cast<long double>(x))));
    case Link::probit: return boost::math::cdf(boost::math::normal(), x);
    case Link::loglog: return static_cast<double>(std::exp(-std::exp(-static_cast<long double>(x))));
  }
  return 0.0;
}

double ref_ccdf(Link link, double x) {
  switch (link) {
    case Link::logit: return static_cast<double>(1.0L / (1.0L + std::exp(static_cast<long double>(x))));
    case Link::probit: return boost::math::cdf(boost::math::complement(boost::math::normal(), x));
    case Link::loglog: return static_cast<double>(-std::expm1(-std::exp(-static_cast<long double>(x))));
  }
  return 0.0;
}

double ref_quantile(Link link, double p) {
  switch (link) {
    case Link::logit: return static_cast<double>(std::log(static_cast<long double>(p) / (1.0L - p)));
    case Link::probit: return boost::math::quantile(boost::math::normal(), p);
    case Link::loglog: return static_cast<double>(-std::log(-std::log(static_cast<long double>(p))));
  }
  return 0.0;
}

}  // namespace

TEST_CASE("cdf reference points") {
  CHECK(cdf(Link::logit, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cdf(Link::probit, 1.959964) == doctest::Approx(0.975).epsilon(1e-7));
  CHECK(cdf(Link::loglog, 0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
}

TEST_CASE("pdf reference points") {
  CHECK(pdf(Link::logit, 0.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(pdf(Link::probit, 0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-15));
  CHECK(pdf(Link::loglog, 0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
}

TEST_CASE("quantile reference points") {
  CHECK(quantile(Link::logit, 0.5) == doctest::Approx(0.0));
  CHECK(quantile(Link::probit, 0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(std::abs(quantile(Link::loglog, std::exp(-1.0))) < 1e-15);
}

TEST_CASE("cdf matches independent references") {
  for (Link link : kLinks) {
    for (double x = -35.0; x <= 35.0; x += 0.173) {
      const double want = ref_cdf(link, x);
      if (want < kProbFloor) continue;
      CAPTURE(to_string(link));
      CAPTURE(x);
      CHECK(cdf(link, x) == doctest::Approx(std::min(want, kProbCeil)).epsilon(1e-13));
    }
  }
}

TEST_CASE("probit lower tail keeps relative accuracy") {
  for (double x : {-8.5, -12.0, -20.0, -30.0, -35.0, -37.5}) {
    CAPTURE(x);
    const double want = boost::math::cdf(boost::math::normal(), x);
    CHECK(cdf(Link::probit, x) == doctest::Approx(want).epsilon(1e-12));
    CHECK(detail::log_cdf(Link::probit, x) == doctest::Approx(std::log(want)).epsilon(1e-13));
  }
  // Beyond the double range the log stays finite; Mills ratio series for the reference.
  const double r = 1.0 / (100.0 * 100.0);
  const double series = std::log(1.0 - r + 3.0 * r * r - 15.0 * r * r * r);
  CHECK(detail::log_cdf(Link::probit, -100.0) ==
        doctest::Approx(-5000.0 - std::log(100.0) - 0.5 * std::log(2.0 * M_PI) + series).epsilon(1e-13));
}

TEST_CASE("round trip on [-10, 10]") {
  for (Link link : kLinks) {
    for (int k = 0; k < 1000; ++k) {
      const double x = -10.0 + 20.0 * k / 999.0;
      const double p = cdf(link, x);
      if (p >= kProbCeil) continue;  // upper tail saturates for loglog beyond ~3.6e1
      CAPTURE(to_string(link));
      CAPTURE(x);
      // Rounding p near one moves x by about eps / g(x).
      CHECK(std::abs(quantile(link, p) - x) < 1e-8 + 0x1p-52 / pdf(link, x));
    }
  }
}

TEST_CASE("quantile inverts cdf over [1e-8, 1 - 1e-8]") {
  for (Link link : kLinks) {
    for (double lp = -8.0; lp <= -0.30103; lp += 0.05) {
      for (double p : {std::pow(10.0, lp), 1.0 - std::pow(10.0, lp)}) {
        CAPTURE(to_string(link));
        CAPTURE(p);
        CHECK(std::abs(cdf(link, quantile(link, p)) - p) < 1e-10);
        CHECK(quantile(link, p) == doctest::Approx(ref_quantile(link, p)).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("pdf is the derivative of cdf") {
  const double h = 1e-5;
  for (Link link : kLinks) {
    for (double x = -8.0; x <= 8.0; x += 0.01) {
      const double fd = (cdf(link, x + h) - cdf(link, x - h)) / (2.0 * h);
      CAPTURE(to_string(link));
      CAPTURE(x);
      CHECK(std::abs(pdf(link, x) - fd) < 1e-6);
    }
  }
}

TEST_CASE("cdf is strictly inside (0, 1) and monotone for |x| <= 700") {
  for (Link link : kLinks) {
    double prev = 0.0;
    for (double x = -700.0; x <= 700.0; x += 0.5) {
      const double p = cdf(link, x);
      CAPTURE(to_string(link));
      CAPTURE(x);
      REQUIRE(p > 0.0);
      REQUIRE(p < 1.0);
      CHECK(p >= prev);
      prev = p;
    }
  }
}

TEST_CASE("pdf is positive and finite") {
  for (Link link : kLinks)
    // The loglog density underflows once exp(-x) passes ~708.
    for (double x = link == Link::loglog ? -6.5 : -30.0; x <= 30.0; x += 0.25) {
      CHECK(pdf(link, x) > 0.0);
      CHECK(std::isfinite(pdf(link, x)));
    }
}

TEST_CASE("domain errors") {
  const double inf = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Link link : kLinks) {
    CHECK_THROWS_AS(cdf(link, nan), DomainError);
    CHECK_THROWS_AS(cdf(link, inf), DomainError);
    CHECK_THROWS_AS(pdf(link, -inf), DomainError);
    CHECK_THROWS_AS(quantile(link, 0.0), DomainError);
    CHECK_THROWS_AS(quantile(link, 1.0), DomainError);
    CHECK_THROWS_AS(quantile(link, -0.2), DomainError);
    CHECK_THROWS_AS(quantile(link, nan), DomainError);
  }
}

TEST_CASE("parse and print link names") {
  for (Link link : kLinks) CHECK(parse_link(to_string(link)) == link);
  CHECK_THROWS_AS(parse_link("cauchit"), std::invalid_argument);
}

TEST_CASE("log companions agree with direct evaluation") {
  for (Link link : kLinks) {
    for (double x = -6.0; x <= 6.0; x += 0.37) {
      CAPTURE(to_string(link));
      CAPTURE(x);
      CHECK(detail::log_cdf(link, x) == doctest::Approx(std::log(ref_cdf(link, x))).epsilon(1e-12));
      CHECK(detail::log_ccdf(link, x) == doctest::Approx(std::log(ref_ccdf(link, x))).epsilon(1e-12));
      CHECK(detail::log_pdf(link, x) == doctest::Approx(std::log(pdf(link, x))).epsilon(1e-12));
      const double h = 1e-5;
      const double fd = (detail::log_pdf(link, x + h) - detail::log_pdf(link, x - h)) / (2.0 * h);
      CHECK(detail::dlog_pdf(link, x) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("log_cdf_diff handles sentinels and far tails") {
  const double inf = std::numeric_limits<double>::infinity();
  for (Link link : kLinks) {
    CAPTURE(to_string(link));
    CHECK(detail::log_cdf_diff(link, inf, -inf) == doctest::Approx(0.0));
    CHECK(detail::log_cdf_diff(link, 0.3, -inf) == doctest::Approx(std::log(ref_cdf(link, 0.3))));
    CHECK(detail::log_cdf_diff(link, inf, 0.3) == doctest::Approx(std::log1p(-ref_cdf(link, 0.3))));
    CHECK(detail::log_cdf_diff(link, 1.0, -1.0) ==
          doctest::Approx(std::log(ref_cdf(link, 1.0) - ref_cdf(link, -1.0))).epsilon(1e-13));
    CHECK(std::isfinite(detail::log_cdf_diff(link, -1.0, -1.0)));
  }
  // Both endpoints deep in the lower normal tail: log(Phi(-40) - Phi(-40.1)).
  const double a = detail::log_cdf(Link::probit, -40.0);
  const double b = detail::log_cdf(Link::probit, -40.1);
  CHECK(detail::log_cdf_diff(Link::probit, -40.0, -40.1) ==
        doctest::Approx(a + std::log1p(-std::exp(b - a))).epsilon(1e-12));
  // Upper tail: 1 - Phi(9) - (1 - Phi(9.5)) keeps precision.
  const double up = boost::math::cdf(boost::math::complement(boost::math::normal(), 9.0)) -
                    boost::math::cdf(boost::math::complement(boost::math::normal(), 9.5));
  CHECK(detail::log_cdf_diff(Link::probit, 9.5, 9.0) == doctest::Approx(std::log(up)).epsilon(1e-12));
}
