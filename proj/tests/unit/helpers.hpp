#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cpm/model.hpp"

namespace cpm::testing {

inline constexpr Link kAllLinks[] = {Link::logit, Link::probit, Link::loglog};
inline constexpr AlphaSchedule kAllSchedules[] = {AlphaSchedule::uniform, AlphaSchedule::jeffreys,
                                                  AlphaSchedule::inverse_J, AlphaSchedule::recip_a,
                                                  AlphaSchedule::recip_b};

inline Matrix make_matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  Matrix m(rows, cols);
  auto it = values.begin();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = *it++;
  return m;
}

// Random data set with `num_cat` categories (every category observed at
// least once) and `p` normal covariates.
inline CpmData random_cpm_data(std::mt19937_64& rng, int num_cat, std::size_t n, std::size_t p) {
  std::normal_distribution<double> z;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<double>(i % static_cast<std::size_t>(num_cat)) * 1.5 + 0.25;
  std::shuffle(y.begin(), y.end(), rng);
  Matrix x(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < p; ++k) x(i, k) = z(rng);
  return make_cpm_data(encode_outcomes(y), x);
}

inline std::vector<double> random_increasing(std::mt19937_64& rng, std::size_t count) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> gap(0.05, 1.5);
  std::vector<double> g(count);
  double v = -1.0 + 0.5 * z(rng);
  for (auto& e : g) {
    e = v;
    v += gap(rng);
  }
  return g;
}

}  // namespace cpm::testing

#include "cpm/sampler.hpp"

namespace cpm::testing {

// Draws assembled by hand: each row is (gamma..., beta...).
inline PosteriorDraws make_draws(const std::vector<std::vector<double>>& rows, std::size_t num_cut,
                                 int chains = 1) {
  PosteriorDraws d;
  for (const auto& r : rows) d.values.append_row(r);
  d.num_cutpoints = num_cut;
  d.num_chains = chains;
  d.stats.resize(rows.size());
  const std::size_t per_chain = rows.size() / static_cast<std::size_t>(chains);
  for (std::size_t s = 0; s < rows.size(); ++s) d.chain_id.push_back(static_cast<int>(s / per_chain));
  for (std::size_t k = 0; k < rows.front().size(); ++k)
    d.param_names.push_back(k < num_cut ? "gamma[" + std::to_string(k + 1) + "]" : "b" + std::to_string(k - num_cut + 1));
  return d;
}

}  // namespace cpm::testing
