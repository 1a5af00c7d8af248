#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsqr/dgp.hpp"
#include "tsqr/errors.hpp"

namespace tsqr::io {

/// Malformed series CSV; `line()` is 1-based.
class CsvError : public InvalidInput {
 public:
  CsvError(std::size_t line, const std::string& what) : InvalidInput(what), line_(line) {}
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Header `t,y`, one row per observation, t = 1..n, values printed with
/// round-trip precision.
void write_series_csv(std::ostream& os, const std::vector<double>& values);
void write_series_csv(const std::filesystem::path& path, const std::vector<double>& values);

/// Parses the `t,y` format. t must be integral and strictly increasing.
[[nodiscard]] std::vector<double> read_series_csv(std::istream& is);
[[nodiscard]] std::vector<double> read_series_csv(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Shortest decimal form that parses back to the same double.
[[nodiscard]] std::string format_double(double x);

}  // namespace tsqr::io
