#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cpm/matrix.hpp"
#include "cpm/model.hpp"
#include "cpm/sampler.hpp"

namespace cpm {

/// Replicated outcome sets: row r is one replicate of all n observations,
/// generated from posterior draw draw_index[r].
struct ReplicateSets {
  std::vector<std::size_t> draw_index;
  Matrix values;
};

/// Picks `count` distinct draws at random (seeded) and samples every
/// observation's outcome from its categorical cell probabilities over the
/// encoding's unique values.
ReplicateSets posterior_predictive_draws(const PosteriorDraws& draws, const CpmData& data,
                                         Link link, std::size_t count, std::uint64_t seed);

enum class TestStatistic { variance, skewness, proportion_censored };

std::string_view to_string(TestStatistic t);

/// Sample variance (n - 1 denominator), skewness (third standardized moment
/// with n denominators) or the fraction of values in the censored lowest
/// category.
double test_statistic(TestStatistic stat, std::span<const double> y, const OrdinalEncoding& encoding);

/// Fraction of replicate statistics at or above the observed one, ties
/// counted one half.
double ppp_value(TestStatistic stat, const Matrix& replicates, std::span<const double> observed,
                 const OrdinalEncoding& encoding);

/// Outcome values as encoded (values below a detection limit read as the limit).
std::vector<double> encoded_outcomes(const OrdinalEncoding& encoding);

}  // namespace cpm
