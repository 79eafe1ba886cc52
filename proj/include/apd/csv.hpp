#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace apd::csv {

// Header-addressed table of string cells. Lines starting with '#' and blank
// lines are skipped; cells are trimmed; no quoting.
class Table {
 public:
  static Table parse(std::string_view text);
  static Table load(const std::filesystem::path& path);

  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t rows() const noexcept { return cells_.size(); }

  // InvalidData when the column is absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const noexcept;

  const std::string& cell(std::size_t row, std::size_t col) const { return cells_.at(row).at(col); }
  double number(std::size_t row, std::size_t col) const;
  // Cell value times 10^-shift, correctly rounded from the decimal text.
  double number_scaled(std::size_t row, std::size_t col, int shift) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> cells_;
};

// Shortest representation that round-trips a double.
std::string format_number(double v);

// v * 10^shift as decimal text. The exponent of the shortest round-trip
// representation is shifted, so no rounding happens on either side.
std::string format_scaled(double v, int shift);

// Decimal number text with its exponent moved by shift. No validation.
std::string shift_exponent(std::string_view text, int shift);

void write_row(std::ostream& os, const std::vector<std::string>& cells);

}  // namespace apd::csv
