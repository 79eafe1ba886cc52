#include "apd/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "apd/errors.hpp"

namespace apd::csv {

namespace {

std::string trimmed(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(trimmed(line.substr(pos)));
      break;
    }
    out.push_back(trimmed(line.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

}  // namespace

Table Table::parse(std::string_view text) {
  Table t;
  std::size_t pos = 0;
  int line_no = 0;
  bool have_header = false;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    const auto content = trimmed(line);
    if (content.empty() || content.front() == '#') continue;
    auto cells = split(content);
    if (!have_header) {
      t.header_ = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header_.size())
      throw InvalidData("csv line " + std::to_string(line_no) + ": expected " + std::to_string(t.header_.size()) +
                        " cells, got " + std::to_string(cells.size()));
    t.cells_.push_back(std::move(cells));
  }
  if (!have_header) throw InvalidData("csv: missing header");
  return t;
}

Table Table::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidData("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return i;
  throw InvalidData("csv: missing column '" + std::string(name) + "'");
}

bool Table::has_column(std::string_view name) const noexcept {
  for (const auto& h : header_)
    if (h == name) return true;
  return false;
}

double Table::number(std::size_t row, std::size_t col) const {
  const auto& s = cell(row, col);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw InvalidData("csv row " + std::to_string(row + 1) + ", column '" + header_.at(col) + "': not a number: '" +
                      s + "'");
  return v;
}

double Table::number_scaled(std::size_t row, std::size_t col, int shift) const {
  number(row, col);
  const auto text = shift_exponent(cell(row, col), -shift);
  double v = 0.0;
  std::from_chars(text.data(), text.data() + text.size(), v);
  return v;
}

std::string format_scaled(double v, int shift) {
  if (v == 0.0 || !std::isfinite(v)) return format_number(v);
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific);
  (void)ec;
  const std::string_view text(buf, static_cast<std::size_t>(end - buf));
  const auto e = text.find('e');
  std::string_view mant = text.substr(0, e);
  const int exp = std::atoi(std::string(text.substr(e + 1)).c_str()) + shift;
  std::string sign;
  if (mant.front() == '-') {
    sign = "-";
    mant.remove_prefix(1);
  }
  std::string digits;
  for (char c : mant)
    if (c != '.') digits += c;
  if (exp < -5 || exp > 16) return sign + std::string(mant) + "e" + std::to_string(exp);
  if (exp < 0) return sign + "0." + std::string(static_cast<std::size_t>(-exp - 1), '0') + digits;
  const auto point = static_cast<std::size_t>(exp) + 1;
  if (digits.size() <= point) return sign + digits + std::string(point - digits.size(), '0');
  return sign + digits.substr(0, point) + "." + digits.substr(point);
}

std::string shift_exponent(std::string_view text, int shift) {
  std::string out(text);
  int exp = 0;
  const auto e = out.find_first_of("eE");
  if (e != std::string::npos) {
    exp = std::atoi(out.c_str() + e + 1);
    out.resize(e);
  }
  return out + "e" + std::to_string(exp + shift);
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

void write_row(std::ostream& os, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) os << ',';
    os << cells[i];
  }
  os << '\n';
}

}  // namespace apd::csv
