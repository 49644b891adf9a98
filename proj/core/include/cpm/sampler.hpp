#pragma once

// No-U-Turn Hamiltonian Monte Carlo with multinomial trajectory sampling,
// the generalized U-turn criterion, dual-averaging step size adaptation and
// a windowed diagonal metric.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpm/matrix.hpp"
#include "cpm/model.hpp"
#include "cpm/rng.hpp"

namespace cpm {

struct SamplerConfig {
  int chains = 2;
  int warmup_iters = 2000;
  int sampling_iters = 2000;
  std::uint64_t seed = 1;
  int max_tree_depth = 10;
  double target_accept = 0.8;
  double init_jitter = 0.1;
  /// Worker threads for chains; 0 reads CPM_THREADS or uses the hardware count.
  int threads = 0;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

struct DrawStats {
  double step_size = 0.0;
  int tree_depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double accept_stat = 0.0;
  double energy = 0.0;
};

/// Retained draws from all chains, stacked chain by chain. For CPM fits the
/// columns are the constrained cutpoints followed by the coefficients.
struct PosteriorDraws {
  Matrix values;
  std::vector<int> chain_id;
  std::vector<DrawStats> stats;
  std::vector<std::string> param_names;
  std::size_t num_cutpoints = 0;
  int num_chains = 0;
  int max_tree_depth = 0;
  std::vector<std::uint64_t> chain_seeds;

  std::size_t num_draws() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }
  std::span<const double> draw(std::size_t s) const { return values.row(s); }
  std::span<const double> gamma(std::size_t s) const { return draw(s).first(num_cutpoints); }
  std::span<const double> beta(std::size_t s) const { return draw(s).subspan(num_cutpoints); }
  CpmParams params(std::size_t s) const;

  std::size_t divergences() const;
  std::size_t max_depth_hits() const;
  /// Draws of one chain, in iteration order.
  std::vector<double> chain_column(int chain, std::size_t param) const;
};

/// Differentiable log density over d reals. The callback returns the log
/// density and writes the gradient; it must be safe to call concurrently.
struct Target {
  std::size_t dim = 0;
  std::function<double(std::span<const double>, std::span<double>)> log_density_gradient;
};

/// Produces a starting point for one chain from that chain's random stream.
using InitFn = std::function<std::vector<double>(RandomStream&)>;

class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs `config.chains` independent chains. Warmup draws are discarded.
/// Chain c draws from a stream keyed by (seed, c), so results do not depend
/// on thread scheduling. Up to 100 jittered restarts are tried per chain
/// before InitializationError.
PosteriorDraws nuts_sample(const Target& target, const SamplerConfig& config, const InitFn& init);

/// Same, starting each chain at the origin plus uniform jitter.
PosteriorDraws nuts_sample(const Target& target, const SamplerConfig& config);

/// Equal-probability cutpoints gamma_j = G^{-1}(j / J) mapped to the
/// unconstrained scale, beta = 0, plus U(-jitter, jitter) on every coordinate.
UnconstrainedParams initialize(const CpmData& data, Link link, const PriorSpec& prior,
                               double jitter, std::uint64_t seed);
UnconstrainedParams initialize(const CpmData& data, Link link, double jitter, RandomStream& rng);

/// Samples the CPM posterior and returns constrained (gamma, beta) draws
/// named gamma[1..J-1] and the data's column names.
PosteriorDraws fit_cpm(const CpmData& data, Link link, const PriorSpec& prior,
                       const SamplerConfig& config);

/// Thread count from the request, CPM_THREADS, or the hardware.
int resolve_threads(int requested);

}  // namespace cpm
