#pragma once

// Comma-separated tables with a header row, plus atomic file output.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpm::cli {

/// Problems with user data or fit artifacts (exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column; throws DataError when absent.
  std::size_t column(const std::string& name) const;
  /// Parses every cell of a column as a finite double.
  std::vector<double> numeric_column(const std::string& name) const;
};

Table read_csv(const std::filesystem::path& path);

/// Full-precision formatting for values that are read back.
std::string format_exact(double v);
/// Shorter formatting for reports; NaN prints as NA.
std::string format_report(double v);

/// Writes to a sibling temp file then renames over the target.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace cpm::cli
