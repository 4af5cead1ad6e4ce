#include "psfunmix/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "psfunmix/errors.hpp"

namespace psfunmix {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

CsvBuilder::CsvBuilder(std::vector<std::string> header) : header_(std::move(header)) {
  if (header_.empty()) throw InputError("CSV header must not be empty");
  row(header_);
}

CsvBuilder& CsvBuilder::row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size()) {
    throw InputError("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                     std::to_string(header_.size()));
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) text_ += ',';
    text_ += cells[k];
  }
  text_ += '\n';
  return *this;
}

CsvBuilder& CsvBuilder::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_double(v));
  return row(cells);
}

std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view ln = text.substr(pos, end - pos);
    ++line;
    if (!ln.empty() && ln.back() == '\r') ln.remove_suffix(1);
    const bool blank = ln.find_first_not_of(" \t") == std::string_view::npos;
    if (!blank) {
      CsvRow row{line, {}};
      std::size_t start = 0;
      for (;;) {
        const std::size_t comma = ln.find(',', start);
        std::string_view cell = ln.substr(start, comma == std::string_view::npos
                                                     ? std::string_view::npos
                                                     : comma - start);
        const auto b = cell.find_first_not_of(" \t");
        const auto e = cell.find_last_not_of(" \t");
        row.cells.emplace_back(b == std::string_view::npos ? std::string_view{}
                                                           : cell.substr(b, e - b + 1));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      rows.push_back(std::move(row));
    }
    if (end == text.size()) break;
    pos = end + 1;
  }
  return rows;
}

double parse_double(std::string_view cell, std::size_t line) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  if (cell.empty() || res.ec != std::errc() || res.ptr != last) {
    throw ParseError("not a number: '" + std::string(cell) + "'", line);
  }
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw InputError("cannot rename " + tmp.string() + ": " + ec.message());
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 15; k >= 0; --k) {
    out[k] = digits[value & 0xF];
    value >>= 4;
  }
  return out;
}

}  // namespace psfunmix
