#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "cpm/diagnostics.hpp"
#include "cpm/inference.hpp"
#include "cpm/loo.hpp"
#include "cpm/ppc.hpp"
#include "cpm/rng.hpp"
#include "cpm/simlab.hpp"
#include "csv.hpp"
#include "json.hpp"

namespace cpm::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr double kRhatThreshold = 1.01;

// Stan-style sampler columns appended after the parameters in draws.csv.
const std::vector<std::string> kStatColumns{"accept_stat__", "stepsize__", "treedepth__",
                                            "n_leapfrog__", "divergent__", "energy__"};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !std::isfinite(v)) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(what + ": '" + item + "' is not a number");
    }
  }
  return out;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
}

// ---- fit -------------------------------------------------------------------

struct FitOptions {
  std::string data_path;
  std::string outcome = "y";
  std::string covariates;
  std::string link = "logit";
  std::optional<double> alpha;
  std::string schedule = "recip_b";
  std::optional<double> detection_limit;
  std::optional<double> beta_prior_sd;
  bool no_center = false;
  SamplerConfig sampler;
  std::string out = "fit";
  bool no_strict = false;
};

std::string draws_csv(const PosteriorDraws& draws) {
  std::string s = "chain,iteration";
  for (const auto& name : draws.param_names) s += "," + name;
  for (const auto& name : kStatColumns) s += "," + name;
  s += "\n";
  std::vector<int> iter(static_cast<std::size_t>(draws.num_chains), 0);
  for (std::size_t r = 0; r < draws.num_draws(); ++r) {
    const int c = draws.chain_id[r];
    s += std::to_string(c + 1) + "," + std::to_string(++iter[static_cast<std::size_t>(c)]);
    for (double v : draws.draw(r)) s += "," + format_exact(v);
    const auto& st = draws.stats[r];
    s += "," + format_exact(st.accept_stat) + "," + format_exact(st.step_size) + "," +
         std::to_string(st.tree_depth) + "," + std::to_string(st.n_leapfrog) + "," +
         (st.divergent ? "1" : "0") + "," + format_exact(st.energy) + "\n";
  }
  return s;
}

json data_json(const CpmData& data) {
  json j;
  j["unique_values"] = data.encoding.unique_values;
  j["ranks"] = data.encoding.ranks;
  j["detection_limit"] = data.encoding.detection_limit ? json(*data.encoding.detection_limit) : json(nullptr);
  j["lowest_censored"] = data.encoding.lowest_censored;
  j["column_names"] = data.column_names;
  j["centered"] = data.centered;
  j["covariate_means"] = data.covariate_means;
  json rows = json::array();
  for (std::size_t i = 0; i < data.x.rows(); ++i) {
    const auto r = data.x.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  j["x"] = std::move(rows);
  return j;
}

json summary_json(const FitOptions& opt, const std::vector<std::string>& covariates, const CpmData& data,
                  const PriorSpec& prior, const PosteriorDraws& draws, const ConvergenceReport& report) {
  json j;
  j["software"] = "cpm";
  j["version"] = std::string(sim::software_version());
  j["data"] = {{"path", opt.data_path},
               {"outcome", opt.outcome},
               {"covariates", covariates},
               {"n", data.num_obs()},
               {"num_categories", data.num_categories()},
               {"detection_limit", data.encoding.detection_limit ? json(*data.encoding.detection_limit) : json(nullptr)},
               {"censored_count", data.encoding.lowest_censored
                                      ? std::count(data.encoding.ranks.begin(), data.encoding.ranks.end(), 1)
                                      : 0},
               {"centered", data.centered},
               {"covariate_means", data.covariate_means}};
  j["model"] = {{"link", std::string(to_string(parse_link(opt.link)))},
                {"alpha", prior.alpha},
                {"alpha_schedule", prior.schedule ? json(std::string(to_string(*prior.schedule))) : json(nullptr)},
                {"beta_prior", prior.beta_prior_sd ? "normal" : "flat"},
                {"beta_prior_sd", prior.beta_prior_sd ? json(*prior.beta_prior_sd) : json(nullptr)}};
  const auto& s = opt.sampler;
  j["sampler"] = {{"algorithm", "nuts"},
                  {"chains", s.chains},
                  {"warmup", s.warmup_iters},
                  {"samples", s.sampling_iters},
                  {"seed", s.seed},
                  {"max_tree_depth", s.max_tree_depth},
                  {"target_accept", s.target_accept},
                  {"init_jitter", s.init_jitter},
                  {"chain_seeds", draws.chain_seeds}};
  json params = json::array();
  for (std::size_t k = 0; k < draws.dim(); ++k) {
    const auto col = draws.values.column(k);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double sd = col.size() > 1 ? std::sqrt(ss / static_cast<double>(col.size() - 1)) : 0.0;
    const auto& d = report.params[k];
    params.push_back({{"name", draws.param_names[k]},
                      {"mean", mean},
                      {"sd", sd},
                      {"median", median(col)},
                      {"q2.5", empirical_quantile(col, 0.025)},
                      {"q97.5", empirical_quantile(col, 0.975)},
                      {"rhat", d.defined ? json(d.rhat) : json(nullptr)},
                      {"ess_bulk", d.defined ? json(d.ess_bulk) : json(nullptr)}});
  }
  j["parameters"] = std::move(params);
  return j;
}

json diagnostics_json(const PosteriorDraws& draws, const ConvergenceReport& report) {
  json j;
  std::vector<std::size_t> div(static_cast<std::size_t>(draws.num_chains), 0);
  std::vector<double> step(static_cast<std::size_t>(draws.num_chains), 0.0);
  for (std::size_t r = 0; r < draws.num_draws(); ++r) {
    const auto c = static_cast<std::size_t>(draws.chain_id[r]);
    div[c] += draws.stats[r].divergent ? 1 : 0;
    step[c] = draws.stats[r].step_size;
  }
  std::vector<std::string> undefined;
  json params = json::array();
  for (const auto& p : report.params) {
    if (!p.defined) undefined.push_back(p.name);
    params.push_back({{"name", p.name},
                      {"rhat", p.defined ? json(p.rhat) : json(nullptr)},
                      {"ess_bulk", p.defined ? json(p.ess_bulk) : json(nullptr)}});
  }
  j["rhat_threshold"] = kRhatThreshold;
  j["converged"] = report.converged(kRhatThreshold);
  j["max_rhat"] = report.max_rhat();
  j["min_ess_bulk"] = report.min_ess();
  j["divergences"] = report.divergences;
  j["divergences_per_chain"] = div;
  j["max_tree_depth"] = draws.max_tree_depth;
  j["max_tree_depth_hits"] = report.max_depth_hits;
  j["step_size_per_chain"] = step;
  j["undefined_parameters"] = undefined;
  j["parameters"] = std::move(params);
  return j;
}

int cmd_fit(const FitOptions& opt, std::ostream& out, std::ostream& err) {
  const Link link = [&] {
    try {
      return parse_link(opt.link);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }();
  opt.sampler.validate();
  if (opt.alpha && !(*opt.alpha > 0.0)) throw UsageError("--alpha must be positive");

  const Table table = read_csv(opt.data_path);
  std::vector<std::string> covariates = split_names(opt.covariates);
  if (opt.covariates.empty())
    for (const auto& h : table.header)
      if (h != opt.outcome) covariates.push_back(h);
  const auto y = table.numeric_column(opt.outcome);
  if (y.size() < 2) throw DataError("need at least two rows of data");
  Matrix x(y.size(), covariates.size());
  for (std::size_t k = 0; k < covariates.size(); ++k) {
    if (covariates[k] == opt.outcome) throw UsageError("outcome '" + opt.outcome + "' listed as a covariate");
    const auto col = table.numeric_column(covariates[k]);
    for (std::size_t i = 0; i < col.size(); ++i) x(i, k) = col[i];
  }
  auto encoding = encode_outcomes(y, opt.detection_limit);
  if (encoding.num_categories() < 2) throw DataError("outcome has fewer than two distinct values");
  const CpmData data = make_cpm_data(std::move(encoding), x, covariates, !opt.no_center);

  PriorSpec prior;
  if (opt.alpha) {
    prior.alpha = *opt.alpha;
  } else {
    try {
      prior = PriorSpec::from_schedule(parse_alpha_schedule(opt.schedule), data.num_categories());
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  prior.beta_prior_sd = opt.beta_prior_sd;

  PosteriorDraws draws;
  try {
    draws = fit_cpm(data, link, prior, opt.sampler);
  } catch (const InitializationError& e) {
    throw DataError(std::string("sampler could not start: ") + e.what());
  }
  const auto report = convergence_diagnostics(draws);

  const fs::path dir = opt.out;
  ensure_dir(dir);
  write_atomic(dir / "draws.csv", draws_csv(draws));
  write_atomic(dir / "data.json", dump(data_json(data)));
  write_atomic(dir / "summary.json", dump(summary_json(opt, covariates, data, prior, draws, report)));
  write_atomic(dir / "diagnostics.json", dump(diagnostics_json(draws, report)));

  out << "fit: n=" << data.num_obs() << " J=" << data.num_categories() << " alpha=" << format_report(prior.alpha)
      << " draws=" << draws.num_draws() << " divergences=" << report.divergences
      << " max_rhat=" << format_report(report.max_rhat()) << "\n";
  out << "wrote " << (dir / "draws.csv").string() << ", summary.json, diagnostics.json, data.json\n";
  if (!report.converged(kRhatThreshold)) {
    if (opt.no_strict) {
      err << "warning: max split R-hat " << format_report(report.max_rhat()) << " >= " << kRhatThreshold << "\n";
    } else {
      err << "error: max split R-hat " << format_report(report.max_rhat()) << " >= " << kRhatThreshold
          << "; run longer chains or pass --no-strict\n";
      return kNotConverged;
    }
  }
  return kOk;
}

// ---- loading fits ----------------------------------------------------------

PosteriorDraws read_draws(const fs::path& path, const json& summary, std::size_t num_cutpoints,
                          std::size_t num_params) {
  const Table t = read_csv(path);
  PosteriorDraws d;
  d.num_cutpoints = num_cutpoints;
  d.num_chains = summary.at("sampler").at("chains").get<int>();
  d.max_tree_depth = summary.at("sampler").at("max_tree_depth").get<int>();
  d.chain_seeds = summary.at("sampler").at("chain_seeds").get<std::vector<std::uint64_t>>();
  if (t.header.size() != 2 + num_params + kStatColumns.size())
    throw DataError("'" + path.string() + "' does not match summary.json");
  d.param_names.assign(t.header.begin() + 2, t.header.begin() + 2 + static_cast<std::ptrdiff_t>(num_params));
  std::vector<std::vector<double>> cols;
  for (const auto& h : t.header) cols.push_back(t.numeric_column(h));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::vector<double> row(num_params);
    for (std::size_t k = 0; k < num_params; ++k) row[k] = cols[2 + k][r];
    d.values.append_row(row);
    d.chain_id.push_back(static_cast<int>(cols[0][r]) - 1);
    const std::size_t b = 2 + num_params;
    DrawStats st;
    st.accept_stat = cols[b][r];
    st.step_size = cols[b + 1][r];
    st.tree_depth = static_cast<int>(cols[b + 2][r]);
    st.n_leapfrog = static_cast<int>(cols[b + 3][r]);
    st.divergent = cols[b + 4][r] != 0.0;
    st.energy = cols[b + 5][r];
    d.stats.push_back(st);
  }
  if (d.num_draws() == 0) throw DataError("'" + path.string() + "' holds no draws");
  return d;
}

}  // namespace

FitArtifacts load_fit(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a fit directory");
  const json summary = read_json(dir / "summary.json");
  const json dj = read_json(dir / "data.json");
  FitArtifacts f;
  try {
    auto& enc = f.data.encoding;
    enc.unique_values = dj.at("unique_values").get<std::vector<double>>();
    enc.ranks = dj.at("ranks").get<std::vector<int>>();
    if (!dj.at("detection_limit").is_null()) enc.detection_limit = dj.at("detection_limit").get<double>();
    enc.lowest_censored = dj.at("lowest_censored").get<bool>();
    f.data.column_names = dj.at("column_names").get<std::vector<std::string>>();
    f.data.centered = dj.at("centered").get<bool>();
    f.data.covariate_means = dj.at("covariate_means").get<std::vector<double>>();
    const auto& rows = dj.at("x");
    f.data.x = Matrix(rows.size(), f.data.column_names.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t k = 0; k < f.data.column_names.size(); ++k) f.data.x(i, k) = rows.at(i).at(k).get<double>();

    const auto& model = summary.at("model");
    f.link = parse_link(model.at("link").get<std::string>());
    f.prior.alpha = model.at("alpha").get<double>();
    if (!model.at("alpha_schedule").is_null())
      f.prior.schedule = parse_alpha_schedule(model.at("alpha_schedule").get<std::string>());
    if (!model.at("beta_prior_sd").is_null()) f.prior.beta_prior_sd = model.at("beta_prior_sd").get<double>();
    f.seed = summary.at("sampler").at("seed").get<std::uint64_t>();
    const auto J = static_cast<std::size_t>(f.data.num_categories());
    f.draws = read_draws(dir / "draws.csv", summary, J - 1, J - 1 + f.data.num_covariates());
  } catch (const json::exception& e) {
    throw DataError("fit directory '" + dir.string() + "' is incomplete: " + e.what());
  }
  if (f.data.x.rows() != f.data.encoding.size()) throw DataError("data.json: covariate rows do not match outcomes");
  return f;
}

namespace {

// ---- summarize -------------------------------------------------------------

struct SummarizeOptions {
  std::string dir;
  std::string query;
  std::vector<std::string> at;
  std::optional<double> q;
  std::optional<double> censored_value;
  double level = 0.95;
  std::string out;
};

std::string join_raw(std::span<const double> raw) {
  std::string s;
  for (std::size_t k = 0; k < raw.size(); ++k) s += (k ? ";" : "") + format_report(raw[k]);
  return s;
}

int cmd_summarize(const SummarizeOptions& opt, std::ostream& out) {
  const Functional target = [&] {
    for (Functional f : {Functional::cdf, Functional::mean, Functional::quantile, Functional::transformation})
      if (opt.query == to_string(f)) return f;
    throw UsageError("unknown query '" + opt.query + "'");
  }();
  if (target == Functional::quantile && !opt.q) throw UsageError("quantile query needs --q");
  if (opt.q && !(*opt.q > 0.0 && *opt.q < 1.0)) throw UsageError("--q must lie in (0, 1)");
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw UsageError("--level must lie in (0, 1)");

  const FitArtifacts fit = load_fit(opt.dir);
  const auto& data = fit.data;

  std::vector<std::vector<double>> points;
  for (const auto& text : opt.at) points.push_back(parse_numbers(text, "--at"));
  if (points.empty()) {
    // Default to the covariate means, i.e. the centered origin.
    points.push_back(data.covariate_means.empty() ? std::vector<double>(data.num_covariates(), 0.0)
                                                  : data.covariate_means);
  }

  std::string csv = "functional,at,q,y,estimate,lower,upper,level\n";
  const std::string q_text = target == Functional::quantile ? format_report(*opt.q) : "NA";
  auto emit = [&](const std::string& at, const std::string& y, double est, double lo, double hi) {
    csv += std::string(to_string(target)) + "," + at + "," + q_text + "," + y + "," + format_report(est) + "," +
           format_report(lo) + "," + format_report(hi) + "," + format_report(opt.level) + "\n";
  };

  if (target == Functional::transformation) {
    const auto s = estimate_transformation(fit.draws, data.encoding, opt.level);
    for (std::size_t c = 0; c < s.columns(); ++c)
      emit("NA", format_report(s.support[c]), s.point[c], s.lower[c], s.upper[c]);
  } else {
    for (const auto& raw : points) {
      if (raw.size() != data.num_covariates())
        throw UsageError("--at has " + std::to_string(raw.size()) + " values but the fit has " +
                         std::to_string(data.num_covariates()) + " covariates");
      const auto x = data.to_model_scale(raw);
      const std::string at = join_raw(raw);
      ConditionalSummary s;
      if (target == Functional::cdf) {
        s = conditional_cdf(fit.draws, fit.link, x, data.encoding, opt.level);
      } else if (target == Functional::mean) {
        if (data.encoding.lowest_censored && !opt.censored_value)
          throw UsageError("fit has a detection limit; mean query needs --censored-value");
        s = conditional_mean(fit.draws, fit.link, x, data.encoding, opt.censored_value, opt.level);
      } else {
        s = conditional_quantile(fit.draws, fit.link, x, data.encoding, *opt.q, opt.level);
      }
      for (std::size_t c = 0; c < s.columns(); ++c) {
        const std::string y = target == Functional::cdf ? format_report(s.support[c]) : "NA";
        emit(at, y, s.point[c], s.lower[c], s.upper[c]);
      }
    }
  }
  const fs::path path = opt.out.empty() ? fs::path(opt.dir) / "conditional.csv" : fs::path(opt.out);
  write_atomic(path, csv);
  out << "wrote " << path.string() << "\n";
  return kOk;
}

// ---- compare ---------------------------------------------------------------

struct CompareOptions {
  std::vector<std::string> dirs;
  std::string out = "elpd_table.csv";
};

int cmd_compare(const CompareOptions& opt, std::ostream& out) {
  struct Row {
    std::string model;
    std::string link;
    double alpha = 0.0;
    LooResult loo;
    double lpd = 0.0;
  };
  std::vector<Row> rows;
  std::optional<OrdinalEncoding> reference;
  for (const auto& dir : opt.dirs) {
    const FitArtifacts fit = load_fit(dir);
    const auto& enc = fit.data.encoding;
    if (reference) {
      if (enc.size() != reference->size())
        throw DataError("fits use different datasets: n=" + std::to_string(reference->size()) + " vs n=" +
                        std::to_string(enc.size()) + " in '" + dir + "'");
      if (enc.ranks != reference->ranks || enc.unique_values != reference->unique_values)
        throw DataError("fits use different outcomes: '" + dir + "' does not match '" + opt.dirs.front() + "'");
    } else {
      reference = enc;
    }
    const Matrix ll = pointwise_loglik(fit.draws, fit.data, fit.link);
    Row row{dir, std::string(to_string(fit.link)), fit.prior.alpha, psis_loo(ll), 0.0};
    for (std::size_t i = 0; i < ll.cols(); ++i) {
      const auto col = ll.column(i);
      const double m = *std::max_element(col.begin(), col.end());
      double acc = 0.0;
      for (double v : col) acc += std::exp(v - m);
      row.lpd += m + std::log(acc / static_cast<double>(col.size()));
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.loo.elpd > b.loo.elpd; });
  std::string csv = "model,link,alpha,n,elpd_loo,se_elpd_loo,elpd_diff,se_diff,p_loo,max_pareto_k,k_above_0.7\n";
  for (const auto& r : rows) {
    const auto d = elpd_diff(r.loo, rows.front().loo);
    const double kmax = *std::max_element(r.loo.pareto_k.begin(), r.loo.pareto_k.end());
    const auto high = std::count_if(r.loo.pareto_k.begin(), r.loo.pareto_k.end(), [](double k) { return k > 0.7; });
    csv += r.model + "," + r.link + "," + format_report(r.alpha) + "," + std::to_string(r.loo.pointwise.size()) + "," +
           format_report(r.loo.elpd) + "," + format_report(r.loo.se) + "," + format_report(d.diff) + "," +
           format_report(d.se) + "," + format_report(r.lpd - r.loo.elpd) + "," + format_report(kmax) + "," +
           std::to_string(high) + "\n";
  }
  write_atomic(opt.out, csv);
  out << "wrote " << opt.out << " (" << rows.size() << " models, best: " << rows.front().model << ")\n";
  return kOk;
}

// ---- simulate --------------------------------------------------------------

struct SimulateOptions {
  std::string config;
  std::string out = "simulation";
  bool progress = false;
  bool manifest_only = false;
};

int cmd_simulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err) {
  std::ifstream in(opt.config, std::ios::binary);
  if (!in) throw DataError("cannot read '" + opt.config + "'");
  std::stringstream text;
  text << in.rdbuf();
  sim::StudyConfig config;
  try {
    config = sim::parse_study_config(text.str());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed study config: ") + e.what());
  }
  const fs::path dir = opt.out;
  ensure_dir(dir);
  write_atomic(dir / "manifest.json", sim::study_manifest_json(config));
  if (opt.manifest_only) {
    out << "simulate: " << config.cells.size() << " cells\nwrote " << (dir / "manifest.json").string() << "\n";
    return kOk;
  }
  sim::ProgressFn progress;
  if (opt.progress)
    progress = [&err](std::size_t done, std::size_t total) { err << "\rreplicates " << done << "/" << total << std::flush; };
  const auto reports = sim::run_study(config, progress);
  if (opt.progress) err << "\n";
  std::ostringstream csv;
  sim::write_bias_csv(csv, reports);
  write_atomic(dir / "bias_report.csv", csv.str());
  std::size_t failed = 0;
  for (const auto& r : reports) failed += static_cast<std::size_t>(r.failed_reps);
  out << "simulate: " << reports.size() << " cells, " << failed << " failed replicates\n";
  out << "wrote " << (dir / "bias_report.csv").string() << ", manifest.json\n";
  return kOk;
}

// ---- ppc -------------------------------------------------------------------

struct PpcOptions {
  std::string dir;
  std::size_t replicates = 10;
  std::size_t ppp_draws = 0;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_ppc(const PpcOptions& opt, std::ostream& out) {
  const FitArtifacts fit = load_fit(opt.dir);
  const std::size_t S = fit.draws.num_draws();
  if (opt.replicates > S)
    throw UsageError("--replicates " + std::to_string(opt.replicates) + " exceeds the " + std::to_string(S) +
                     " posterior draws");
  if (opt.ppp_draws > S)
    throw UsageError("--ppp-draws " + std::to_string(opt.ppp_draws) + " exceeds the " + std::to_string(S) +
                     " posterior draws");
  const auto& enc = fit.data.encoding;
  const auto observed = encoded_outcomes(enc);

  const auto overlay = posterior_predictive_draws(fit.draws, fit.data, fit.link, opt.replicates,
                                                  derive_seed(opt.seed, {1}));
  std::string csv = "obs,observed";
  for (std::size_t r = 0; r < opt.replicates; ++r) csv += ",rep_" + std::to_string(r + 1);
  csv += "\n";
  for (std::size_t i = 0; i < observed.size(); ++i) {
    csv += std::to_string(i + 1) + "," + format_report(observed[i]);
    for (std::size_t r = 0; r < opt.replicates; ++r) csv += "," + format_report(overlay.values(r, i));
    csv += "\n";
  }

  const std::size_t used = opt.ppp_draws == 0 ? S : opt.ppp_draws;
  const auto reps = posterior_predictive_draws(fit.draws, fit.data, fit.link, used, derive_seed(opt.seed, {2}));
  json j;
  j["seed"] = opt.seed;
  j["draws_used"] = used;
  j["overlay_draws"] = overlay.draw_index;
  std::vector<TestStatistic> stats{TestStatistic::variance, TestStatistic::skewness};
  if (enc.lowest_censored) stats.push_back(TestStatistic::proportion_censored);
  for (TestStatistic t : stats) {
    double rep_mean = 0.0;
    for (std::size_t r = 0; r < reps.values.rows(); ++r) rep_mean += test_statistic(t, reps.values.row(r), enc);
    j[std::string(to_string(t))] = {{"ppp", ppp_value(t, reps.values, observed, enc)},
                                    {"observed", test_statistic(t, observed, enc)},
                                    {"replicate_mean", rep_mean / static_cast<double>(reps.values.rows())}};
  }
  if (!enc.lowest_censored)
    j["notes"] = std::vector<std::string>{"proportion_censored omitted: fit has no detection limit"};

  const fs::path dir = opt.out.empty() ? fs::path(opt.dir) : fs::path(opt.out);
  ensure_dir(dir);
  write_atomic(dir / "ppc_draws.csv", csv);
  write_atomic(dir / "ppp.json", dump(j));
  out << "ppc: " << opt.replicates << " replicate sets, p-values from " << used << " draws\n";
  out << "wrote " << (dir / "ppc_draws.csv").string() << ", ppp.json\n";
  return kOk;
}

// ---- surrogate -------------------------------------------------------------

int cmd_surrogate(std::uint64_t seed, const std::string& path, std::ostream& out) {
  const auto s = sim::make_surrogate(seed);
  std::ostringstream csv;
  sim::write_surrogate_csv(csv, s);
  write_atomic(path, csv.str());
  out << "wrote " << path << " (synthetic, n=" << s.x.rows() << ", limits " << format_report(s.limit_a) << " and "
      << format_report(s.limit_b) << ")\n";
  return kOk;
}

void add_sampler_flags(CLI::App* cmd, SamplerConfig& s) {
  cmd->add_option("--chains", s.chains, "Number of chains")->capture_default_str();
  cmd->add_option("--warmup", s.warmup_iters, "Warmup iterations per chain")->capture_default_str();
  cmd->add_option("--samples", s.sampling_iters, "Retained iterations per chain")->capture_default_str();
  cmd->add_option("--seed", s.seed, "Random seed")->capture_default_str();
  cmd->add_option("--max-tree-depth", s.max_tree_depth, "NUTS maximum tree depth")->capture_default_str();
  cmd->add_option("--target-accept", s.target_accept, "Step-size adaptation target")->capture_default_str();
  cmd->add_option("--init-jitter", s.init_jitter, "Uniform jitter on the unconstrained initial values")
      ->capture_default_str();
  cmd->add_option("--threads", s.threads, "Worker threads (0: CPM_THREADS or hardware)")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian cumulative probability models for continuous and censored outcomes", "cpm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sim::software_version()));

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a CSV file");
  fit_cmd->add_option("data", fit.data_path, "CSV with a header row")->required();
  fit_cmd->add_option("--outcome", fit.outcome, "Outcome column")->capture_default_str();
  fit_cmd->add_option("--covariates", fit.covariates, "Comma-separated covariate columns (default: all others)");
  fit_cmd->add_option("--link", fit.link, "logit, probit or loglog")
      ->check(CLI::IsMember({"logit", "probit", "loglog"}))
      ->capture_default_str();
  auto* alpha_opt = fit_cmd->add_option("--alpha", fit.alpha, "Dirichlet concentration");
  fit_cmd->add_option("--alpha-schedule", fit.schedule, "uniform, jeffreys, inverse_J, recip_a or recip_b")
      ->check(CLI::IsMember({"uniform", "jeffreys", "inverse_J", "recip_a", "recip_b"}))
      ->capture_default_str()
      ->excludes(alpha_opt);
  fit_cmd->add_option("--detection-limit", fit.detection_limit, "Lower detection limit of the outcome");
  fit_cmd->add_option("--beta-prior-sd", fit.beta_prior_sd, "Normal(0, sd^2) prior on coefficients (default flat)");
  fit_cmd->add_flag("--no-center", fit.no_center, "Do not center covariates");
  fit_cmd->add_option("--out", fit.out, "Output directory")->capture_default_str();
  fit_cmd->add_flag("--no-strict", fit.no_strict, "Exit 0 even when R-hat >= 1.01");
  add_sampler_flags(fit_cmd, fit.sampler);

  SummarizeOptions sum;
  auto* sum_cmd = app.add_subcommand("summarize", "Posterior conditional quantities from a fit");
  sum_cmd->add_option("fit", sum.dir, "Fit directory")->required();
  sum_cmd->add_option("--query", sum.query, "cdf, mean, quantile or transformation")->required();
  sum_cmd->add_option("--at", sum.at, "Raw covariate values, comma-separated (repeatable)");
  sum_cmd->add_option("--q", sum.q, "Probability for quantile queries");
  sum_cmd->add_option("--censored-value", sum.censored_value, "Value used for the censored category in means");
  sum_cmd->add_option("--level", sum.level, "Credible level")->capture_default_str();
  sum_cmd->add_option("--out", sum.out, "Output CSV (default <fit>/conditional.csv)");

  CompareOptions cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "PSIS-LOO comparison of fits on the same data");
  cmp_cmd->add_option("fits", cmp.dirs, "Fit directories")->required();
  cmp_cmd->add_option("--out", cmp.out, "Output CSV")->capture_default_str();

  SimulateOptions simo;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a simulation study from a JSON config");
  sim_cmd->add_option("config", simo.config, "Study config (JSON)")->required();
  sim_cmd->add_option("--out", simo.out, "Output directory")->capture_default_str();
  sim_cmd->add_flag("--progress", simo.progress, "Report progress on stderr");
  sim_cmd->add_flag("--manifest-only", simo.manifest_only, "Write the manifest without running fits");

  PpcOptions ppc;
  auto* ppc_cmd = app.add_subcommand("ppc", "Posterior predictive replicates and p-values");
  ppc_cmd->add_option("fit", ppc.dir, "Fit directory")->required();
  ppc_cmd->add_option("--replicates", ppc.replicates, "Replicate sets written for overlays")->capture_default_str();
  ppc_cmd->add_option("--ppp-draws", ppc.ppp_draws, "Draws used for p-values (0: all)")->capture_default_str();
  ppc_cmd->add_option("--seed", ppc.seed, "Random seed")->capture_default_str();
  ppc_cmd->add_option("--out", ppc.out, "Output directory (default: the fit directory)");

  std::uint64_t sur_seed = 1;
  std::string sur_out = "surrogate.csv";
  auto* sur_cmd = app.add_subcommand("surrogate", "Write the synthetic case-study surrogate (not real data)");
  sur_cmd->add_option("--seed", sur_seed, "Random seed")->capture_default_str();
  sur_cmd->add_option("--out", sur_out, "Output CSV")->capture_default_str();

  std::vector<std::string> storage{"cpm"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit, out, err);
    if (*sum_cmd) return cmd_summarize(sum, out);
    if (*cmp_cmd) return cmd_compare(cmp, out);
    if (*sim_cmd) return cmd_simulate(simo, out, err);
    if (*ppc_cmd) return cmd_ppc(ppc, out);
    if (*sur_cmd) return cmd_surrogate(sur_seed, sur_out, out);
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const InitializationError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::domain_error& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace cpm::cli
