#include "cpm/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace cpm {

namespace {

using Vec = std::vector<double>;

constexpr double kMaxDeltaH = 1000.0;
constexpr double kMaxStepSize = 1e7;
constexpr int kInitAttempts = 100;

double log_sum_exp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void add_to(Vec& acc, const Vec& x) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += x[k];
}

Vec sum(const Vec& a, const Vec& b) {
  Vec out(a);
  add_to(out, b);
  return out;
}

bool no_u_turn(const Vec& p_sharp_minus, const Vec& p_sharp_plus, const Vec& rho) {
  return dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0;
}

// Phase-space point.
struct PhasePoint {
  Vec q, p, grad;
  double log_density = 0.0;
};

// Nesterov dual averaging of log step size.
class StepSizeAdapter {
 public:
  explicit StepSizeAdapter(double target) : target_(target) {}

  void restart(double step_size) {
    mu_ = std::log(10.0 * step_size);
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }

  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(accept_stat, 1.0);
    const double c = static_cast<double>(counter_);
    const double eta = 1.0 / (c + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(c) / kGamma;
    const double x_eta = std::pow(c, -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::min(std::exp(x), kMaxStepSize);
  }

  double final_step_size() const { return std::min(std::exp(x_bar_), kMaxStepSize); }

 private:
  static constexpr double kT0 = 10.0;
  static constexpr double kGamma = 0.05;
  static constexpr double kKappa = 0.75;
  double target_;
  double mu_ = 0.0;
  long counter_ = 0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

// Slow-phase windows for the metric: an initial fast buffer, doubling
// windows, and a terminal fast buffer.
class MetricWindows {
 public:
  explicit MetricWindows(int num_warmup) : num_warmup_(num_warmup) {
    if (num_warmup < 20) {
      enabled_ = false;
      return;
    }
    if (init_buffer_ + base_window_ + term_buffer_ > num_warmup) {
      init_buffer_ = static_cast<int>(0.15 * num_warmup);
      term_buffer_ = static_cast<int>(0.1 * num_warmup);
      base_window_ = num_warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
  }

  bool in_window() const {
    return enabled_ && counter_ >= init_buffer_ && counter_ < num_warmup_ - term_buffer_ &&
           counter_ != num_warmup_;
  }
  bool end_of_window() const {
    return enabled_ && counter_ == next_window_ && counter_ != num_warmup_;
  }
  void advance() { ++counter_; }

  void compute_next_window() {
    if (next_window_ == num_warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != num_warmup_ - term_buffer_ - 1) {
      const int boundary = next_window_ + 2 * window_size_;
      if (boundary >= num_warmup_ - term_buffer_) next_window_ = num_warmup_ - term_buffer_ - 1;
    }
  }

 private:
  int num_warmup_;
  bool enabled_ = true;
  int init_buffer_ = 75;
  int term_buffer_ = 50;
  int base_window_ = 25;
  int window_size_ = 0;
  int next_window_ = 0;
  int counter_ = 0;
};

// Welford running variance.
class VarianceEstimator {
 public:
  explicit VarianceEstimator(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}
  void restart() {
    n_ = 0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    std::fill(m2_.begin(), m2_.end(), 0.0);
  }
  void add(const Vec& x) {
    ++n_;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = x[k] - mean_[k];
      mean_[k] += d / static_cast<double>(n_);
      m2_[k] += d * (x[k] - mean_[k]);
    }
  }
  // Sample variance shrunk toward 1e-3.
  Vec regularized() const {
    const double n = static_cast<double>(n_);
    Vec var(mean_.size());
    for (std::size_t k = 0; k < var.size(); ++k) {
      const double v = n > 1 ? m2_[k] / (n - 1.0) : 1.0;
      var[k] = (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0));
    }
    return var;
  }

 private:
  long n_ = 0;
  Vec mean_, m2_;
};

class NutsChain {
 public:
  NutsChain(const Target& target, const SamplerConfig& config, std::uint64_t seed)
      : target_(target), config_(config), rng_(seed), inv_metric_(target.dim, 1.0) {}

  RandomStream& rng() { return rng_; }

  // Returns false when the density or gradient is non-finite at q.
  bool set_position(const Vec& q) {
    z_.q = q;
    z_.p.assign(q.size(), 0.0);
    z_.grad.assign(q.size(), 0.0);
    z_.log_density = target_.log_density_gradient(z_.q, z_.grad);
    if (!std::isfinite(z_.log_density)) return false;
    return std::all_of(z_.grad.begin(), z_.grad.end(), [](double g) { return std::isfinite(g); });
  }

  void run(int chain, Matrix& out_values, std::vector<DrawStats>& out_stats) {
    const int num_warmup = config_.warmup_iters;
    StepSizeAdapter step_adapter(config_.target_accept);
    MetricWindows windows(num_warmup);
    VarianceEstimator estimator(target_.dim);

    step_size_ = 1.0;
    init_step_size();
    step_adapter.restart(step_size_);

    for (int it = 0; it < num_warmup; ++it) {
      const DrawStats s = transition();
      step_size_ = step_adapter.learn(s.accept_stat);
      if (windows.in_window()) estimator.add(z_.q);
      if (windows.end_of_window()) {
        windows.compute_next_window();
        inv_metric_ = estimator.regularized();
        estimator.restart();
        init_step_size();
        step_adapter.restart(step_size_);
      }
      windows.advance();
    }
    if (num_warmup > 0) step_size_ = step_adapter.final_step_size();

    const std::size_t offset = static_cast<std::size_t>(chain) * config_.sampling_iters;
    for (int it = 0; it < config_.sampling_iters; ++it) {
      const DrawStats s = transition();
      auto row = out_values.row(offset + it);
      std::copy(z_.q.begin(), z_.q.end(), row.begin());
      out_stats[offset + it] = s;
    }
  }

 private:
  double hamiltonian(const PhasePoint& z) const {
    double kinetic = 0.0;
    for (std::size_t k = 0; k < z.p.size(); ++k) kinetic += inv_metric_[k] * z.p[k] * z.p[k];
    const double h = -z.log_density + 0.5 * kinetic;
    return std::isnan(h) ? INFINITY : h;
  }

  Vec p_sharp(const PhasePoint& z) const {
    Vec out(z.p.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = inv_metric_[k] * z.p[k];
    return out;
  }

  void sample_momentum(PhasePoint& z) {
    for (std::size_t k = 0; k < z.p.size(); ++k) z.p[k] = rng_.normal() / std::sqrt(inv_metric_[k]);
  }

  void leapfrog(PhasePoint& z, double eps) {
    const std::size_t d = z.q.size();
    for (std::size_t k = 0; k < d; ++k) z.p[k] += 0.5 * eps * z.grad[k];
    for (std::size_t k = 0; k < d; ++k) z.q[k] += eps * inv_metric_[k] * z.p[k];
    z.log_density = target_.log_density_gradient(z.q, z.grad);
    if (!std::isfinite(z.log_density)) {
      z.log_density = -INFINITY;
      return;
    }
    for (std::size_t k = 0; k < d; ++k) z.p[k] += 0.5 * eps * z.grad[k];
  }

  // Heuristic search for a step size with one-step acceptance near 0.8.
  void init_step_size() {
    if (step_size_ == 0.0 || step_size_ > kMaxStepSize || std::isnan(step_size_)) return;
    const PhasePoint start = z_;
    auto trial_delta = [&]() {
      z_ = start;
      sample_momentum(z_);
      const double h0 = hamiltonian(z_);
      leapfrog(z_, step_size_);
      return h0 - hamiltonian(z_);
    };
    const double log_target = std::log(0.8);
    const int direction = trial_delta() > log_target ? 1 : -1;
    for (int guard = 0; guard < 200; ++guard) {
      const double delta_h = trial_delta();
      if (direction == 1 && !(delta_h > log_target)) break;
      if (direction == -1 && !(delta_h < log_target)) break;
      step_size_ = direction == 1 ? 2.0 * step_size_ : 0.5 * step_size_;
      if (step_size_ >= kMaxStepSize) {
        step_size_ = kMaxStepSize;
        break;
      }
      if (step_size_ < 1e-300) break;
    }
    z_ = start;
  }

  struct TreeState {
    double h0;
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    bool divergent = false;
  };

  bool build_tree(int depth, PhasePoint& z_propose, Vec& p_sharp_beg, Vec& p_sharp_end, Vec& rho,
                  Vec& p_beg, Vec& p_end, double sign, TreeState& ts, double& log_sum_weight) {
    if (depth == 0) {
      leapfrog(z_, sign * step_size_);
      ++ts.n_leapfrog;
      const double h = hamiltonian(z_);
      if (h - ts.h0 > kMaxDeltaH || !std::isfinite(h)) ts.divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, ts.h0 - h);
      ts.sum_metro_prob += ts.h0 - h > 0.0 ? 1.0 : std::exp(ts.h0 - h);
      z_propose = z_;
      p_sharp_beg = p_sharp(z_);
      p_sharp_end = p_sharp_beg;
      add_to(rho, z_.p);
      p_beg = z_.p;
      p_end = p_beg;
      return !ts.divergent;
    }

    const std::size_t d = z_.q.size();
    double log_sum_weight_init = -INFINITY;
    Vec p_init_end(d), p_sharp_init_end(d), rho_init(d, 0.0);
    if (!build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end,
                    sign, ts, log_sum_weight_init))
      return false;

    PhasePoint z_propose_final = z_;
    double log_sum_weight_final = -INFINITY;
    Vec p_final_beg(d), p_sharp_final_beg(d), rho_final(d, 0.0);
    if (!build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                    p_final_beg, p_end, sign, ts, log_sum_weight_final))
      return false;

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree ||
        rng_.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree))
      z_propose = std::move(z_propose_final);

    const Vec rho_subtree = sum(rho_init, rho_final);
    add_to(rho, rho_subtree);
    bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, sum(rho_init, p_final_beg));
    persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, sum(rho_final, p_init_end));
    return persist;
  }

  DrawStats transition() {
    sample_momentum(z_);
    PhasePoint z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;

    Vec p_fwd_fwd = z_.p, p_sharp_fwd_fwd = p_sharp(z_);
    Vec p_fwd_bck = z_.p, p_sharp_fwd_bck = p_sharp_fwd_fwd;
    Vec p_bck_fwd = z_.p, p_sharp_bck_fwd = p_sharp_fwd_fwd;
    Vec p_bck_bck = z_.p, p_sharp_bck_bck = p_sharp_fwd_fwd;
    Vec rho = z_.p;

    TreeState ts;
    ts.h0 = hamiltonian(z_);
    double log_sum_weight = 0.0;
    int depth = 0;
    const std::size_t d = z_.q.size();

    while (depth < config_.max_tree_depth) {
      Vec rho_fwd(d, 0.0), rho_bck(d, 0.0);
      double log_sum_weight_subtree = -INFINITY;
      bool valid;
      if (rng_.uniform() > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid = build_tree(depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck,
                           p_fwd_fwd, 1.0, ts, log_sum_weight_subtree);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid = build_tree(depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd,
                           p_bck_bck, -1.0, ts, log_sum_weight_subtree);
        z_bck = z_;
      }
      if (!valid) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight ||
          rng_.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight))
        z_sample = z_propose;
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = sum(rho_bck, rho_fwd);
      bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, sum(rho_bck, p_fwd_bck));
      persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, sum(rho_fwd, p_bck_fwd));
      if (!persist) break;
    }

    z_ = std::move(z_sample);
    DrawStats s;
    s.step_size = step_size_;
    s.tree_depth = depth;
    s.n_leapfrog = ts.n_leapfrog;
    s.divergent = ts.divergent;
    s.accept_stat = ts.n_leapfrog > 0 ? ts.sum_metro_prob / ts.n_leapfrog : 0.0;
    s.energy = hamiltonian(z_);
    return s;
  }

  const Target& target_;
  const SamplerConfig& config_;
  RandomStream rng_;
  Vec inv_metric_;
  PhasePoint z_;
  double step_size_ = 1.0;
};

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw std::invalid_argument("sampler: chains must be >= 1");
  if (warmup_iters < 0) throw std::invalid_argument("sampler: warmup iterations must be >= 0");
  if (sampling_iters < 1) throw std::invalid_argument("sampler: sampling iterations must be >= 1");
  if (max_tree_depth < 1) throw std::invalid_argument("sampler: max tree depth must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("sampler: target acceptance must lie in (0, 1)");
  if (!(init_jitter >= 0.0)) throw std::invalid_argument("sampler: init jitter must be >= 0");
}

CpmParams PosteriorDraws::params(std::size_t s) const {
  const auto g = gamma(s);
  const auto b = beta(s);
  return {{g.begin(), g.end()}, {b.begin(), b.end()}};
}

std::size_t PosteriorDraws::divergences() const {
  return static_cast<std::size_t>(
      std::count_if(stats.begin(), stats.end(), [](const DrawStats& s) { return s.divergent; }));
}

std::size_t PosteriorDraws::max_depth_hits() const {
  return static_cast<std::size_t>(std::count_if(stats.begin(), stats.end(), [&](const DrawStats& s) {
    return s.tree_depth >= max_tree_depth;
  }));
}

std::vector<double> PosteriorDraws::chain_column(int chain, std::size_t param) const {
  std::vector<double> out;
  for (std::size_t s = 0; s < num_draws(); ++s)
    if (chain_id[s] == chain) out.push_back(values(s, param));
  return out;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CPM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

PosteriorDraws nuts_sample(const Target& target, const SamplerConfig& config, const InitFn& init) {
  config.validate();
  if (target.dim == 0) throw std::invalid_argument("nuts_sample: target has no parameters");
  const std::size_t total = static_cast<std::size_t>(config.chains) * config.sampling_iters;

  PosteriorDraws out;
  out.values = Matrix(total, target.dim);
  out.stats.resize(total);
  out.chain_id.resize(total);
  out.num_chains = config.chains;
  out.max_tree_depth = config.max_tree_depth;
  for (int c = 0; c < config.chains; ++c) {
    out.chain_seeds.push_back(derive_seed(config.seed, {static_cast<std::uint64_t>(c)}));
    for (int it = 0; it < config.sampling_iters; ++it)
      out.chain_id[static_cast<std::size_t>(c) * config.sampling_iters + it] = c;
  }
  for (std::size_t k = 0; k < target.dim; ++k) out.param_names.push_back("theta[" + std::to_string(k + 1) + "]");

  auto run_chain = [&](int c) {
    NutsChain chain(target, config, out.chain_seeds[c]);
    bool ok = false;
    for (int attempt = 0; attempt < kInitAttempts && !ok; ++attempt) {
      const std::vector<double> q0 = init(chain.rng());
      if (q0.size() != target.dim) throw DimensionError("nuts_sample: init has wrong dimension");
      ok = chain.set_position(q0);
    }
    if (!ok)
      throw InitializationError("chain " + std::to_string(c) + ": log density not finite after " +
                                std::to_string(kInitAttempts) + " initialization attempts");
    chain.run(c, out.values, out.stats);
  };

  const int workers = std::min(resolve_threads(config.threads), config.chains);
  std::vector<std::exception_ptr> errors(config.chains);
  if (workers <= 1) {
    for (int c = 0; c < config.chains; ++c) run_chain(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int c = next++; c < config.chains; c = next++) {
          try {
            run_chain(c);
          } catch (...) {
            errors[c] = std::current_exception();
          }
        }
      });
    pool.clear();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

PosteriorDraws nuts_sample(const Target& target, const SamplerConfig& config) {
  const double jitter = config.init_jitter;
  const std::size_t dim = target.dim;
  return nuts_sample(target, config, [jitter, dim](RandomStream& rng) {
    std::vector<double> q(dim);
    for (double& v : q) v = jitter > 0.0 ? rng.uniform(-jitter, jitter) : 0.0;
    return q;
  });
}

UnconstrainedParams initialize(const CpmData& data, Link link, double jitter, RandomStream& rng) {
  const int num_cat = data.num_categories();
  CpmParams params;
  for (int j = 1; j < num_cat; ++j)
    params.gamma.push_back(quantile(link, static_cast<double>(j) / num_cat));
  params.beta.assign(data.num_covariates(), 0.0);
  UnconstrainedParams u = to_unconstrained(params);
  if (jitter > 0.0) {
    for (double& v : u.delta) v += rng.uniform(-jitter, jitter);
    for (double& v : u.beta) v += rng.uniform(-jitter, jitter);
  }
  return u;
}

UnconstrainedParams initialize(const CpmData& data, Link link, const PriorSpec& /*prior*/,
                               double jitter, std::uint64_t seed) {
  RandomStream rng(seed);
  return initialize(data, link, jitter, rng);
}

PosteriorDraws fit_cpm(const CpmData& data, Link link, const PriorSpec& prior,
                       const SamplerConfig& config) {
  const CpmPosterior posterior(data, link, prior);
  Target target;
  target.dim = posterior.dim();
  target.log_density_gradient = [&posterior](std::span<const double> u, std::span<double> g) {
    return posterior.log_density_gradient(u, g);
  };
  const double jitter = config.init_jitter;
  PosteriorDraws draws = nuts_sample(target, config, [&](RandomStream& rng) {
    return initialize(data, link, jitter, rng).flatten();
  });

  const std::size_t num_cut = posterior.num_cutpoints();
  draws.num_cutpoints = num_cut;
  draws.param_names.clear();
  for (std::size_t k = 0; k < num_cut; ++k) draws.param_names.push_back("gamma[" + std::to_string(k + 1) + "]");
  for (const auto& name : data.column_names) draws.param_names.push_back(name);

  for (std::size_t s = 0; s < draws.num_draws(); ++s) {
    auto row = draws.values.row(s);
    const auto u = UnconstrainedParams::unflatten(row, num_cut);
    const CpmParams params = to_constrained(u);
    std::copy(params.gamma.begin(), params.gamma.end(), row.begin());
    for (std::size_t k = 1; k < num_cut; ++k)
      if (!(row[k] > row[k - 1]))
        throw std::logic_error("fit_cpm: retained draw violates cutpoint ordering");
  }
  return draws;
}

}  // namespace cpm
