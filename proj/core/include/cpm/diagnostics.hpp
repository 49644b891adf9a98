#pragma once

#include <span>
#include <string>
#include <vector>

#include "cpm/sampler.hpp"

namespace cpm {

/// Split R-hat from the between/within half-chain variance ratio. Returns
/// NaN when the within-chain variance is zero (e.g. a constant parameter).
double split_rhat(std::span<const std::vector<double>> chains);

/// Bulk effective sample size: rank-normalized split chains with Geyer's
/// initial monotone sequence. NaN when undefined.
double ess_bulk(std::span<const std::vector<double>> chains);

struct ParamDiagnostics {
  std::string name;
  double rhat = 0.0;
  double ess_bulk = 0.0;
  /// False when the diagnostics could not be computed (constant draws).
  bool defined = true;
};

struct ConvergenceReport {
  std::vector<ParamDiagnostics> params;
  std::size_t divergences = 0;
  std::size_t max_depth_hits = 0;

  /// Largest R-hat over defined parameters.
  double max_rhat() const;
  double min_ess() const;
  std::size_t undefined_count() const;
  /// True when every defined R-hat is below `threshold`.
  bool converged(double threshold = 1.01) const;
};

/// Needs at least two chains, or one chain long enough to split (>= 4 draws).
ConvergenceReport convergence_diagnostics(const PosteriorDraws& draws);

}  // namespace cpm
