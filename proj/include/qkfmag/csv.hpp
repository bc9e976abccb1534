#pragma once

#include <cstdint>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace qkfmag {

/// Shortest decimal that round-trips to the same double; "inf", "-inf", "nan"
/// for non-finite values.
std::string format_double(double v);

using CsvCell = std::variant<double, std::string_view, std::uint64_t>;

/// Writes "# config: <json>" and "# seed: <n>" comment lines, then the
/// column header. Every row must have exactly the header's width.
class CsvWriter {
public:
  CsvWriter(std::ostream& out, std::string_view config_json, std::uint64_t seed,
            std::vector<std::string> columns);

  void row(std::initializer_list<CsvCell> cells);
  std::size_t rows_written() const noexcept { return rows_; }

private:
  std::ostream& out_;
  std::vector<std::string> columns_;
  std::size_t rows_ = 0;
};

}  // namespace qkfmag
