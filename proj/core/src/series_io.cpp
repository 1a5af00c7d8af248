#include "tsqr/series_io.hpp"

#include <charconv>
#include <limits>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tsqr::io {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& field, double& out) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw std::runtime_error("double formatting failed");
  return std::string(buf, ptr);
}

void write_series_csv(std::ostream& os, const std::vector<double>& values) {
  os << "t,y\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    os << (i + 1) << ',' << format_double(values[i]) << '\n';
  }
}

void write_series_csv(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ostringstream os;
  write_series_csv(os, values);
  write_file_atomic(path, os.str());
}

std::vector<double> read_series_csv(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw CsvError(1, "empty input: expected header 't,y'");
  ++line_no;
  if (trim(line) != "t,y") throw CsvError(1, "expected header 't,y', got '" + trim(line) + "'");

  std::vector<double> values;
  double last_t = -std::numeric_limits<double>::infinity();
  while (std::getline(is, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty()) continue;
    const auto comma = row.find(',');
    if (comma == std::string::npos || row.find(',', comma + 1) != std::string::npos) {
      throw CsvError(line_no, "line " + std::to_string(line_no) + ": expected two fields 't,y'");
    }
    double t = 0.0;
    double y = 0.0;
    if (!parse_double(trim(row.substr(0, comma)), t) || t != std::floor(t)) {
      throw CsvError(line_no, "line " + std::to_string(line_no) + ": t is not an integer");
    }
    if (!parse_double(trim(row.substr(comma + 1)), y) || !std::isfinite(y)) {
      throw CsvError(line_no, "line " + std::to_string(line_no) + ": y is not a finite number");
    }
    if (!(t > last_t)) {
      throw CsvError(line_no, "line " + std::to_string(line_no) + ": t is not increasing");
    }
    last_t = t;
    values.push_back(y);
  }
  return values;
}

std::vector<double> read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
  return read_series_csv(in);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << contents;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace tsqr::io
