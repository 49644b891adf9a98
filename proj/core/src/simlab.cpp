#include "cpm/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "cpm/diagnostics.hpp"
#include "cpm/inference.hpp"
#include "cpm/rng.hpp"
#include "json.hpp"

namespace cpm::sim {

namespace {

constexpr double kLogisticScale = 1.0 / 3.0;
constexpr double kEulerGamma = 0.57721566490153286061;

void check_id(int id) {
  if (id < 1 || id > 3) throw std::invalid_argument("unknown scenario " + std::to_string(id));
}

double location(Covariates x) { return kBeta1 * x.x1 + kBeta2 * x.x2; }

bool log_scale(int id) { return id != 3; }

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

constexpr std::array<Covariates, 2> kPoints{{{1.0, 0.0}, {1.0, 1.0}}};

std::uint64_t schedule_key(AlphaSchedule s) { return static_cast<std::uint64_t>(s) + 1; }

}  // namespace

ScenarioSpec make_spec(int id, int n, bool censored, AlphaSchedule schedule, int reps,
                       std::uint64_t seed) {
  check_id(id);
  if (n < 2) throw std::invalid_argument("scenario sample size must be at least 2");
  if (reps < 1) throw std::invalid_argument("scenario needs at least one replicate");
  ScenarioSpec s;
  s.id = id;
  s.n = n;
  s.censored = censored;
  s.alpha_schedule = schedule;
  s.link = scenario_link(id);
  s.reps = reps;
  s.seed = seed;
  return s;
}

Link scenario_link(int id) {
  check_id(id);
  switch (id) {
    case 1: return Link::probit;
    case 2: return Link::logit;
    default: return Link::loglog;
  }
}

double censoring_threshold(int id) {
  check_id(id);
  return id == 3 ? 0.0 : 1.0;
}

double scenario_scale(int id) {
  check_id(id);
  return id == 2 ? kLogisticScale : 1.0;
}

Dataset generate_scenario(const ScenarioSpec& spec, std::size_t rep_index) {
  check_id(spec.id);
  if (spec.n < 2) throw std::invalid_argument("scenario sample size must be at least 2");
  Dataset d;
  d.scenario = spec.id;
  d.censored = spec.censored;
  d.rep_index = rep_index;
  d.data_seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(spec.id),
                                        static_cast<std::uint64_t>(spec.n), rep_index});
  RandomStream rng(d.data_seed);
  const auto n = static_cast<std::size_t>(spec.n);
  d.x = Matrix(n, 2);
  d.y.resize(n);
  const double limit = censoring_threshold(spec.id);
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const double x2 = rng.normal();
    double eps = 0.0;
    switch (spec.id) {
      case 1: eps = rng.normal(); break;
      case 2: {
        const double u = rng.uniform();
        eps = kLogisticScale * std::log(u / (1.0 - u));
        break;
      }
      default: eps = -std::log(-std::log(rng.uniform())); break;
    }
    const double latent = location({x1, x2}) + eps;
    double y = log_scale(spec.id) ? std::exp(latent) : latent;
    if (spec.censored && y < limit) y = limit;
    d.x(i, 0) = x1;
    d.x(i, 1) = x2;
    d.y[i] = y;
  }
  return d;
}

std::array<double, 5> target_grid(int id) {
  check_id(id);
  using std::exp;
  switch (id) {
    case 1: return {exp(-1.0), exp(-0.33), exp(0.5), exp(1.33), exp(2.0)};
    case 2: return {exp(-0.5), exp(0.0), exp(0.5), exp(1.0), exp(1.5)};
    default: return {-0.3, 0.0, 0.5, 1.5, 2.5};
  }
}

bool target_available(const ScenarioSpec& spec, double y) {
  return !spec.censored || y >= censoring_threshold(spec.id);
}

Truth true_transformation(const ScenarioSpec& spec, double y) {
  check_id(spec.id);
  if (!target_available(spec, y)) return {std::nullopt, "below censoring threshold"};
  if (log_scale(spec.id)) {
    if (!(y > 0.0)) return {std::nullopt, "outside the outcome support"};
    return {std::log(y), {}};
  }
  return {y, {}};
}

Truth true_cdf(const ScenarioSpec& spec, Covariates x, double y) {
  check_id(spec.id);
  if (!target_available(spec, y)) return {std::nullopt, "below censoring threshold"};
  const double mu = location(x);
  switch (spec.id) {
    case 1: return {y > 0.0 ? cdf(Link::probit, std::log(y) - mu) : 0.0, {}};
    case 2: return {y > 0.0 ? cdf(Link::logit, (std::log(y) - mu) / kLogisticScale) : 0.0, {}};
    default: return {cdf(Link::loglog, y - mu), {}};
  }
}

Truth true_mean(const ScenarioSpec& spec, Covariates x) {
  check_id(spec.id);
  const double mu = location(x);
  switch (spec.id) {
    case 1: return {std::exp(mu + 0.5), {}};
    case 2: {
      const double a = std::numbers::pi * kLogisticScale;
      return {std::exp(mu) * a / std::sin(a), {}};
    }
    default: return {mu + kEulerGamma, {}};
  }
}

Truth true_quantile(const ScenarioSpec& spec, Covariates x, double q) {
  check_id(spec.id);
  if (!(q > 0.0 && q < 1.0)) throw DomainError("true_quantile: q must lie in (0, 1)");
  const double mu = location(x);
  double v = 0.0;
  switch (spec.id) {
    case 1: v = std::exp(mu + quantile(Link::probit, q)); break;
    case 2: v = std::exp(mu + kLogisticScale * quantile(Link::logit, q)); break;
    default: v = mu + quantile(Link::loglog, q); break;
  }
  if (spec.censored && v < censoring_threshold(spec.id))
    return {std::nullopt, "quantile falls below censoring threshold"};
  return {v, {}};
}

PosteriorDraws rescale_draws(const PosteriorDraws& draws, double a) {
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("rescale_draws: a must be positive");
  PosteriorDraws out = draws;
  if (a == 1.0) return out;
  for (std::size_t s = 0; s < out.num_draws(); ++s)
    for (double& v : out.values.row(s)) v *= a;
  return out;
}

PercentBias percent_bias(std::span<const double> estimates, double truth) {
  if (estimates.empty()) throw std::invalid_argument("percent_bias: no estimates");
  if (!std::isfinite(truth)) throw std::invalid_argument("percent_bias: truth is not available");
  double s = 0.0;
  PercentBias out;
  if (truth == 0.0) {
    for (double e : estimates) s += e - truth;
    out.absolute = true;
    out.value = s / static_cast<double>(estimates.size());
    return out;
  }
  for (double e : estimates) s += (e - truth) / truth;
  out.value = 100.0 * s / static_cast<double>(estimates.size());
  return out;
}

std::vector<std::string> quantity_labels() {
  std::vector<std::string> out{"beta1", "beta2"};
  for (int k = 1; k <= 5; ++k) out.push_back("gamma_y" + std::to_string(k));
  for (int k = 1; k <= 5; ++k) out.push_back("cdf_y" + std::to_string(k) + "_x11");
  for (const char* f : {"mean", "median", "q20"})
    for (const char* at : {"_x10", "_x11"}) out.push_back(std::string(f) + at);
  return out;
}

std::vector<Truth> quantity_truths(const ScenarioSpec& spec) {
  std::vector<Truth> out{{kBeta1, {}}, {kBeta2, {}}};
  const auto grid = target_grid(spec.id);
  for (double y : grid) out.push_back(true_transformation(spec, y));
  for (double y : grid) out.push_back(true_cdf(spec, kPoints[1], y));
  for (const auto& x : kPoints) out.push_back(true_mean(spec, x));
  for (const auto& x : kPoints) out.push_back(true_quantile(spec, x, 0.5));
  for (const auto& x : kPoints) out.push_back(true_quantile(spec, x, 0.2));
  return out;
}

RepEstimates estimate_quantities(const ScenarioSpec& spec, const Dataset& data,
                                 const PosteriorDraws& fitted, const CpmData& cpm_data) {
  (void)data;
  const Link link = spec.link;
  const PosteriorDraws draws = rescale_draws(fitted, scenario_scale(spec.id));
  const std::size_t S = draws.num_draws();
  const auto& enc = cpm_data.encoding;
  const int J = enc.num_categories();
  RepEstimates out;
  out.values.reserve(quantity_labels().size());
  std::vector<double> buf(S);

  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t s = 0; s < S; ++s) buf[s] = draws.beta(s)[k];
    out.values.emplace_back(median(buf));
  }

  const auto grid = target_grid(spec.id);
  const auto& means = cpm_data.covariate_means;
  for (double y : grid) {
    const int j = step_index(enc, y);
    if (!target_available(spec, y) || j < 1 || j >= J) {
      out.values.emplace_back(std::nullopt);
      continue;
    }
    for (std::size_t s = 0; s < S; ++s) {
      const auto b = draws.beta(s);
      double shift = 0.0;
      for (std::size_t c = 0; c < b.size(); ++c) shift += means[c] * b[c];
      buf[s] = draws.gamma(s)[static_cast<std::size_t>(j - 1)] + shift;
    }
    out.values.emplace_back(median(buf));
  }

  // Functionals use the fitted (unscaled) draws; they are scale-free.
  const std::vector<double> raw11{kPoints[1].x1, kPoints[1].x2};
  const std::vector<double> x11 = cpm_data.to_model_scale(raw11);
  for (double y : grid) {
    if (!target_available(spec, y)) {
      out.values.emplace_back(std::nullopt);
      continue;
    }
    const int j = step_index(enc, y);
    double acc = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      double f = 0.0;
      if (j >= J)
        f = 1.0;
      else if (j >= 1) {
        const auto b = fitted.beta(s);
        double eta = 0.0;
        for (std::size_t c = 0; c < b.size(); ++c) eta += x11[c] * b[c];
        f = cdf(link, fitted.gamma(s)[static_cast<std::size_t>(j - 1)] - eta);
      }
      acc += f;
    }
    out.values.emplace_back(acc / static_cast<double>(S));
  }

  const std::optional<double> censored_value =
      enc.lowest_censored ? std::optional<double>(censoring_threshold(spec.id)) : std::nullopt;
  std::array<std::vector<double>, 2> model_x;
  for (std::size_t p = 0; p < 2; ++p) {
    const std::vector<double> raw{kPoints[p].x1, kPoints[p].x2};
    model_x[p] = cpm_data.to_model_scale(raw);
  }
  for (const auto& x : model_x)
    out.values.emplace_back(conditional_mean(fitted, link, x, enc, censored_value).point[0]);
  for (double q : {0.5, 0.2})
    for (const auto& x : model_x)
      out.values.emplace_back(conditional_quantile(fitted, link, x, enc, q).point[0]);

  out.divergences = fitted.divergences();
  out.max_rhat = convergence_diagnostics(fitted).max_rhat();
  return out;
}

std::uint64_t fit_seed(const ScenarioSpec& cell, std::size_t rep_index) {
  return derive_seed(cell.seed, {static_cast<std::uint64_t>(cell.id),
                                 static_cast<std::uint64_t>(cell.n), cell.censored ? 2u : 1u,
                                 schedule_key(cell.alpha_schedule), rep_index, 0x6669u});
}

RepEstimates run_replicate(const ScenarioSpec& spec, std::size_t rep_index,
                           const SamplerConfig& sampler) {
  const Dataset d = generate_scenario(spec, rep_index);
  const std::optional<double> limit =
      spec.censored ? std::optional<double>(censoring_threshold(spec.id)) : std::nullopt;
  CpmData data = make_cpm_data(encode_outcomes(d.y, limit), d.x, {"x1", "x2"}, true);
  const PriorSpec prior = PriorSpec::from_schedule(spec.alpha_schedule, data.num_categories());
  SamplerConfig cfg = sampler;
  cfg.seed = fit_seed(spec, rep_index);
  const PosteriorDraws draws = fit_cpm(data, spec.link, prior, cfg);
  return estimate_quantities(spec, d, draws, data);
}

BiasReport aggregate(const ScenarioSpec& cell, const std::vector<std::optional<RepEstimates>>& reps,
                     const std::vector<std::string>& failures) {
  BiasReport out;
  out.cell = cell;
  out.failures = failures;
  const auto labels = quantity_labels();
  const auto truths = quantity_truths(cell);
  std::vector<const RepEstimates*> ok;
  for (const auto& r : reps) {
    if (r) {
      ok.push_back(&*r);
      out.divergences += r->divergences;
    } else {
      ++out.failed_reps;
    }
  }
  out.rep_count = static_cast<int>(ok.size());
  for (std::size_t q = 0; q < labels.size(); ++q) {
    QuantityResult res;
    res.label = labels[q];
    res.truth = truths[q].value;
    if (!truths[q].available()) {
      res.skipped = true;
      res.skip_reason = truths[q].reason;
      out.quantities.push_back(std::move(res));
      continue;
    }
    std::vector<double> est;
    for (const RepEstimates* r : ok)
      if (q < r->values.size() && r->values[q]) est.push_back(*r->values[q]);
    res.rep_count = static_cast<int>(est.size());
    if (est.empty()) {
      res.skipped = true;
      res.skip_reason = "no replicate could estimate this quantity";
      out.quantities.push_back(std::move(res));
      continue;
    }
    double m = 0.0;
    for (double e : est) m += e;
    res.mean_estimate = m / static_cast<double>(est.size());
    res.bias = percent_bias(est, *res.truth);
    if (res.bias.absolute)
      res.skip_reason = "truth is zero; absolute bias";
    else if (res.label.rfind("cdf", 0) == 0 && *res.truth < 0.01)
      res.skip_reason = "truth below 0.01";
    out.quantities.push_back(std::move(res));
  }
  return out;
}

std::vector<BiasReport> run_study(const StudyConfig& config, const ProgressFn& progress) {
  config.sampler.validate();
  struct Job {
    std::size_t cell;
    std::size_t rep;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < config.cells.size(); ++c)
    for (std::size_t r = 0; r < static_cast<std::size_t>(config.cells[c].reps); ++r) jobs.push_back({c, r});

  std::vector<std::vector<std::optional<RepEstimates>>> results(config.cells.size());
  std::vector<std::vector<std::string>> errors(config.cells.size());
  for (std::size_t c = 0; c < config.cells.size(); ++c) {
    results[c].resize(static_cast<std::size_t>(config.cells[c].reps));
    errors[c].resize(results[c].size());
  }

  SamplerConfig sampler = config.sampler;
  sampler.threads = 1;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      const Job job = jobs[k];
      try {
        results[job.cell][job.rep] = run_replicate(config.cells[job.cell], job.rep, sampler);
      } catch (const std::exception& e) {
        errors[job.cell][job.rep] = "rep " + std::to_string(job.rep) + ": " + e.what();
      }
      const std::size_t finished = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(finished, jobs.size());
      }
    }
  };
  const int threads = std::max(1, std::min<int>(resolve_threads(config.threads),
                                                 static_cast<int>(std::max<std::size_t>(jobs.size(), 1))));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  std::vector<BiasReport> out;
  out.reserve(config.cells.size());
  for (std::size_t c = 0; c < config.cells.size(); ++c) {
    std::vector<std::string> failures;
    for (auto& e : errors[c])
      if (!e.empty()) failures.push_back(e);
    out.push_back(aggregate(config.cells[c], results[c], failures));
  }
  return out;
}

std::vector<ScenarioSpec> default_grid(int reps, std::uint64_t seed) {
  std::vector<ScenarioSpec> out;
  for (int id = 1; id <= 3; ++id)
    for (bool censored : {false, true})
      for (AlphaSchedule s : {AlphaSchedule::inverse_J, AlphaSchedule::recip_a, AlphaSchedule::recip_b})
        for (int n : {25, 50, 100, 200, 400}) out.push_back(make_spec(id, n, censored, s, reps, seed));
  return out;
}

void write_bias_csv(std::ostream& os, const std::vector<BiasReport>& reports) {
  os << "scenario,censored,prior,n,link,quantity,truth,mean_estimate,bias,bias_scale,reps_used,"
        "reps_failed,skipped,note\n";
  for (const auto& r : reports) {
    for (const auto& q : r.quantities) {
      os << r.cell.id << ',' << (r.cell.censored ? "true" : "false") << ','
         << to_string(r.cell.alpha_schedule) << ',' << r.cell.n << ',' << to_string(r.cell.link)
         << ',' << q.label << ',' << (q.truth ? format_number(*q.truth) : "NA") << ','
         << (q.skipped ? "NA" : format_number(q.mean_estimate)) << ','
         << (q.skipped ? "NA" : format_number(q.bias.value)) << ','
         << (q.skipped ? "NA" : (q.bias.absolute ? "absolute" : "percent")) << ',' << q.rep_count
         << ',' << r.failed_reps << ',' << (q.skipped ? "true" : "false") << ',' << q.skip_reason
         << '\n';
    }
  }
}

StudyConfig parse_study_config(const std::string& json_text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("study config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("study config must be a JSON object");
  static const std::vector<std::string> known{"seed",      "reps",         "threads", "sampler",
                                              "scenarios", "sample_sizes", "censored", "priors"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw std::invalid_argument("study config: unknown key '" + it.key() + "'");

  StudyConfig cfg;
  try {
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.reps = j.value("reps", 100);
    cfg.threads = j.value("threads", 0);
    if (j.contains("sampler")) {
      const json& s = j.at("sampler");
      if (!s.is_object()) throw std::invalid_argument("study config: sampler must be an object");
      cfg.sampler.chains = s.value("chains", cfg.sampler.chains);
      cfg.sampler.warmup_iters = s.value("warmup", cfg.sampler.warmup_iters);
      cfg.sampler.sampling_iters = s.value("samples", cfg.sampler.sampling_iters);
      cfg.sampler.max_tree_depth = s.value("max_tree_depth", cfg.sampler.max_tree_depth);
      cfg.sampler.target_accept = s.value("target_accept", cfg.sampler.target_accept);
    }
    const std::vector<int> ids = j.value("scenarios", std::vector<int>{1, 2, 3});
    const std::vector<int> sizes = j.value("sample_sizes", std::vector<int>{25, 50, 100, 200, 400});
    const std::vector<bool> censored = j.value("censored", std::vector<bool>{false, true});
    std::vector<AlphaSchedule> priors;
    for (const auto& name :
         j.value("priors", std::vector<std::string>{"inverse_J", "recip_a", "recip_b"}))
      priors.push_back(parse_alpha_schedule(name));
    if (ids.empty() || sizes.empty() || censored.empty() || priors.empty())
      throw std::invalid_argument("study config: every grid axis needs at least one value");
    for (int id : ids)
      for (bool c : censored)
        for (AlphaSchedule p : priors)
          for (int n : sizes) cfg.cells.push_back(make_spec(id, n, c, p, cfg.reps, cfg.seed));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("study config: ") + e.what());
  }
  cfg.sampler.seed = cfg.seed;
  cfg.sampler.validate();
  return cfg;
}

std::string study_manifest_json(const StudyConfig& config) {
  using nlohmann::ordered_json;
  ordered_json m;
  m["software"] = "cpm";
  m["version"] = std::string(software_version());
  m["seed"] = config.seed;
  m["reps"] = config.reps;
  m["sampler"] = {{"chains", config.sampler.chains},
                  {"warmup", config.sampler.warmup_iters},
                  {"samples", config.sampler.sampling_iters},
                  {"max_tree_depth", config.sampler.max_tree_depth},
                  {"target_accept", config.sampler.target_accept}};
  m["seed_rule"] =
      "data: hash(seed, scenario, n, rep); fit: hash(seed, scenario, n, censored, prior, rep)";
  ordered_json cells = ordered_json::array();
  for (const auto& c : config.cells) {
    cells.push_back({{"scenario", c.id},
                     {"censored", c.censored},
                     {"prior", std::string(to_string(c.alpha_schedule))},
                     {"n", c.n},
                     {"link", std::string(to_string(c.link))},
                     {"reps", c.reps},
                     {"first_data_seed", generate_scenario(c, 0).data_seed},
                     {"first_fit_seed", fit_seed(c, 0)}});
  }
  m["cell_count"] = config.cells.size();
  m["cells"] = std::move(cells);
  return m.dump(2) + "\n";
}

std::string_view software_version() { return "0.1.0"; }

namespace {

// Floors the smallest `share` of values at the value of that order statistic.
double apply_limit(std::vector<double>& v, double share) {
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  const auto k = static_cast<std::size_t>(std::lround(share * static_cast<double>(v.size())));
  const double limit = sorted[std::min(k, sorted.size() - 1)];
  for (double& e : v) e = std::max(e, limit);
  return limit;
}

}  // namespace

SurrogateData make_surrogate(std::uint64_t seed) {
  constexpr std::size_t n = 216;
  RandomStream rng(derive_seed(seed, {0x5375u}));
  SurrogateData d;
  d.column_names = {"age", "male", "treated"};
  d.x = Matrix(n, 3);
  d.outcome_a.resize(n);
  d.outcome_b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double age = std::round(38.0 + 9.0 * rng.normal());
    const double male = rng.uniform() < 0.6 ? 1.0 : 0.0;
    const double treated = rng.uniform() < 0.5 ? 1.0 : 0.0;
    d.x(i, 0) = age;
    d.x(i, 1) = male;
    d.x(i, 2) = treated;
    const double lp = 0.015 * (age - 38.0) + 0.2 * male - 0.6 * treated;
    d.outcome_a[i] = std::exp(2.0 + lp + 0.8 * rng.normal());
    d.outcome_b[i] = std::exp(0.5 + 1.5 * lp + 1.3 * rng.normal());
  }
  d.limit_a = apply_limit(d.outcome_a, 0.03);
  d.limit_b = apply_limit(d.outcome_b, 0.39);
  return d;
}

void write_surrogate_csv(std::ostream& os, const SurrogateData& data) {
  os << "outcome_a,outcome_b";
  for (const auto& c : data.column_names) os << ',' << c;
  os << '\n';
  for (std::size_t i = 0; i < data.x.rows(); ++i) {
    os << format_number(data.outcome_a[i]) << ',' << format_number(data.outcome_b[i]);
    for (std::size_t c = 0; c < data.x.cols(); ++c) os << ',' << format_number(data.x(i, c));
    os << '\n';
  }
}

}  // namespace cpm::sim
