#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace psfunmix {

/// Shortest round-trip decimal form of x ('.' separator, no locale).
std::string format_double(double x);

/// Comma-separated table with a header row and LF line endings.
class CsvBuilder {
 public:
  explicit CsvBuilder(std::vector<std::string> header);

  CsvBuilder& row(const std::vector<std::string>& cells);
  CsvBuilder& row(const std::vector<double>& values);

  std::size_t columns() const noexcept { return header_.size(); }
  const std::string& str() const noexcept { return text_; }

 private:
  std::vector<std::string> header_;
  std::string text_;
};

/// Plain CSV parse (no quoting). Blank lines are skipped; each row keeps the
/// 1-based source line number for diagnostics.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> cells;
};
std::vector<CsvRow> parse_csv(std::string_view text);

/// Strict double parse; throws ParseError(what, line) on garbage.
double parse_double(std::string_view cell, std::size_t line);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace psfunmix
