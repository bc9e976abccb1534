#include "qkfmag/csv.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace qkfmag {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double: buffer too small");
  return std::string(buf, ptr);
}

CsvWriter::CsvWriter(std::ostream& out, std::string_view config_json, std::uint64_t seed,
                     std::vector<std::string> columns)
    : out_(out), columns_(std::move(columns)) {
  out_ << "# config: " << config_json << '\n' << "# seed: " << seed << '\n';
  for (std::size_t i = 0; i < columns_.size(); ++i) out_ << (i ? "," : "") << columns_[i];
  out_ << '\n';
}

void CsvWriter::row(std::initializer_list<CsvCell> cells) {
  if (cells.size() != columns_.size()) throw std::logic_error("csv row width mismatch");
  bool first = true;
  for (const auto& cell : cells) {
    if (!first) out_ << ',';
    first = false;
    if (const auto* d = std::get_if<double>(&cell))
      out_ << format_double(*d);
    else if (const auto* s = std::get_if<std::string_view>(&cell))
      out_ << *s;
    else
      out_ << std::get<std::uint64_t>(cell);
  }
  out_ << '\n';
  ++rows_;
}

}  // namespace qkfmag
