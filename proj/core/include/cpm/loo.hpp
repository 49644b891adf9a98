#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cpm/matrix.hpp"
#include "cpm/model.hpp"
#include "cpm/sampler.hpp"

namespace cpm {

/// S x n matrix of per-observation log-likelihood terms, one row per draw.
Matrix pointwise_loglik(const PosteriorDraws& draws, const CpmData& data, Link link);

struct LooResult {
  double elpd = 0.0;
  double se = 0.0;
  std::vector<double> pointwise;
  std::vector<double> pareto_k;
};

struct ElpdDiff {
  double diff = 0.0;
  double se = 0.0;
};

/// Pareto-smoothed importance sampling leave-one-out estimate of the
/// expected log pointwise predictive density.
LooResult psis_loo(const Matrix& loglik);

/// Smoothed, truncated log importance weights for one observation's log
/// ratios, and the fitted Pareto shape k (infinite when no fit was made).
struct PsisWeights {
  std::vector<double> log_weights;
  double pareto_k = INFINITY;
};
PsisWeights psis_smooth(std::span<const double> log_ratios);

/// sum_i (a_i - b_i) with standard error sqrt(n * var(a_i - b_i)).
ElpdDiff elpd_diff(const LooResult& a, const LooResult& b);

}  // namespace cpm
