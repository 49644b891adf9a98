#pragma once

// Independent reference computations shared by unit and acceptance tests.

#include <array>
#include <cmath>
#include <vector>

#include "cpm/matrix.hpp"
#include "cpm/model.hpp"

namespace cpm::oracle {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double normal_log_pdf(double x) { return -0.5 * x * x - 0.5 * std::log(2.0 * M_PI); }

// Tiny probit CPM used for the quadrature comparison: J = 3, n = 6, p = 1.
struct TinyCpm {
  std::vector<double> y{1, 2, 3, 1, 2, 3};
  std::vector<double> x{-1.2, -0.3, 0.4, 0.1, 0.9, 1.5};

  CpmData data() const {
    Matrix m(x.size(), 1);
    for (std::size_t i = 0; i < x.size(); ++i) m(i, 0) = x[i];
    return make_cpm_data(encode_outcomes(y), m, {"x"}, false);
  }
};

// Posterior means of (gamma1, gamma2, beta) for the tiny model with a
// uniform Dirichlet and flat beta prior, by midpoint quadrature on a box
// large enough to hold all but a negligible sliver of the mass.
inline std::array<double, 3> tiny_cpm_posterior_means(int points = 160) {
  const TinyCpm tiny;
  const double g_lo = -7.0, g_hi = 7.0, b_lo = -12.0, b_hi = 12.0;
  const double hg = (g_hi - g_lo) / points;
  const double hb = (b_hi - b_lo) / points;
  // Log prior up to a constant: sum log phi(gamma_j).
  double norm = 0.0;
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  std::vector<double> log_w;
  std::vector<std::array<double, 3>> nodes;
  double max_lw = -INFINITY;
  for (int a = 0; a < points; ++a) {
    const double g1 = g_lo + (a + 0.5) * hg;
    for (int b = 0; b < points; ++b) {
      const double g2 = g_lo + (b + 0.5) * hg;
      if (!(g2 > g1)) continue;
      for (int c = 0; c < points; ++c) {
        const double beta = b_lo + (c + 0.5) * hb;
        double lw = normal_log_pdf(g1) + normal_log_pdf(g2);
        for (std::size_t i = 0; i < tiny.y.size(); ++i) {
          const double eta = beta * tiny.x[i];
          const int r = static_cast<int>(tiny.y[i]);
          const double up = r == 1 ? normal_cdf(g1 - eta) : r == 2 ? normal_cdf(g2 - eta) : 1.0;
          const double lo = r == 1 ? 0.0 : r == 2 ? normal_cdf(g1 - eta) : normal_cdf(g2 - eta);
          lw += std::log(std::max(up - lo, 1e-300));
        }
        log_w.push_back(lw);
        nodes.push_back({g1, g2, beta});
        max_lw = std::max(max_lw, lw);
      }
    }
  }
  for (std::size_t k = 0; k < log_w.size(); ++k) {
    const double w = std::exp(log_w[k] - max_lw);
    norm += w;
    for (int d = 0; d < 3; ++d) acc[d] += w * nodes[k][d];
  }
  for (double& v : acc) v /= norm;
  return acc;
}

// Intercept-only toy for leave-one-out: n = 5 outcomes over J = 3 categories.
// With no covariates the induced prior makes the cell probabilities exactly
// Dirichlet(alpha + counts) a posteriori, so leave-one-out predictive
// densities have a closed form.
struct LooToy {
  std::vector<double> y{0.4, 1.7, 1.7, 3.1, 0.4};
  double alpha = 1.0;

  CpmData data() const { return make_cpm_data(encode_outcomes(y), Matrix(y.size(), 0)); }

  std::vector<double> exact_pointwise() const {
    const auto enc = encode_outcomes(y);
    const int J = enc.num_categories();
    std::vector<double> counts(static_cast<std::size_t>(J), 0.0);
    for (int r : enc.ranks) counts[static_cast<std::size_t>(r - 1)] += 1.0;
    std::vector<double> out;
    const double n = static_cast<double>(y.size());
    for (int r : enc.ranks) {
      const double c = counts[static_cast<std::size_t>(r - 1)] - 1.0;
      out.push_back(std::log((alpha + c) / (J * alpha + n - 1.0)));
    }
    return out;
  }

  double exact_elpd() const {
    double s = 0.0;
    for (double v : exact_pointwise()) s += v;
    return s;
  }
};

}  // namespace cpm::oracle
