#pragma once

// Command-line front end. `run` is the whole program minus process exit, so
// tests can drive it in-process.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpm/links.hpp"
#include "cpm/model.hpp"
#include "cpm/sampler.hpp"

namespace cpm::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNotConverged = 3 };

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Everything a fit directory holds, reloaded without touching the raw CSV.
struct FitArtifacts {
  CpmData data;
  PosteriorDraws draws;
  Link link = Link::logit;
  PriorSpec prior;
  std::uint64_t seed = 0;
};

FitArtifacts load_fit(const std::filesystem::path& dir);

}  // namespace cpm::cli
