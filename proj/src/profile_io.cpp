#include "apd/profile_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "apd/csv.hpp"
#include "apd/errors.hpp"

namespace apd {

namespace {

std::string num(double v) { return csv::format_number(v); }

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(std::string_view s, int line) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw InvalidData("profile line " + std::to_string(line) + ": not a number: '" + std::string(s) + "'");
  return v;
}

// Text in a display unit to SI without binary rounding on the way.
double parse_scaled(std::string_view s, int shift, int line) {
  s = trim(s);
  parse_double(s, line);
  return parse_double(csv::shift_exponent(s, -shift), line);
}

std::vector<std::pair<std::string_view, std::string_view>> split_pairs(std::string_view s, int line) {
  std::vector<std::pair<std::string_view, std::string_view>> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    if (comma == std::string_view::npos) comma = s.size();
    auto item = trim(s.substr(pos, comma - pos));
    auto colon = item.find(':');
    if (colon == std::string_view::npos)
      throw InvalidData("profile line " + std::to_string(line) + ": expected a:b pair, got '" + std::string(item) + "'");
    out.emplace_back(item.substr(0, colon), item.substr(colon + 1));
    pos = comma + 1;
  }
  return out;
}

void finish(DetectorProfile& p, bool& open, std::vector<DetectorProfile>& out) {
  if (!open) return;
  std::sort(p.jitter.anchors.begin(), p.jitter.anchors.end(),
            [](const JitterAnchor& a, const JitterAnchor& b) { return a.efficiency < b.efficiency; });
  try {
    validate(p);
  } catch (const std::exception& e) {
    throw InvalidData("profile '" + p.name + "': " + e.what());
  }
  out.push_back(std::move(p));
  p = DetectorProfile{};
  open = false;
}

}  // namespace

std::string format_profile(const DetectorProfile& p) {
  std::ostringstream os;
  os << "name = " << p.name << '\n';
  if (p.temperature_c) os << "temperature_c = " << num(*p.temperature_c) << '\n';
  os << "efficiency = " << num(p.efficiency) << '\n';
  os << "dark_p10 = " << num(p.dark.p10) << '\n';
  os << "dark_slope = " << num(p.dark.slope) << '\n';
  os << "gate_width_ns = " << csv::format_scaled(p.gate_width, 9) << '\n';
  os << "afterpulse = ";
  for (std::size_t i = 0; i < p.afterpulse.terms.size(); ++i) {
    if (i) os << ", ";
    os << num(p.afterpulse.terms[i].amplitude) << ':' << csv::format_scaled(p.afterpulse.terms[i].lifetime, 6);
  }
  os << '\n';
  os << "afterpulse_horizon_us = " << csv::format_scaled(p.afterpulse.horizon, 6) << '\n';
  os << "jitter = ";
  for (std::size_t i = 0; i < p.jitter.anchors.size(); ++i) {
    if (i) os << ", ";
    os << num(p.jitter.anchors[i].efficiency) << ':' << csv::format_scaled(p.jitter.anchors[i].fwhm, 12);
  }
  os << '\n';
  if (!p.note.empty()) os << "note = " << p.note << '\n';
  return os.str();
}

std::string format_profiles(const std::vector<DetectorProfile>& profiles) {
  std::string out;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (i) out += '\n';
    out += format_profile(profiles[i]);
  }
  return out;
}

std::vector<DetectorProfile> parse_profiles(std::string_view text) {
  std::vector<DetectorProfile> out;
  DetectorProfile cur;
  bool open = false;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    std::string_view key_part = line;
    // `note` keeps '#' characters; every other value strips comments.
    auto eq = line.find('=');
    if (eq != std::string_view::npos && trim(line.substr(0, eq)) == "note") {
      key_part = line;
    } else if (auto hash = line.find('#'); hash != std::string_view::npos) {
      key_part = line.substr(0, hash);
    }
    key_part = trim(key_part);
    if (key_part.empty()) {
      if (trim(line).empty()) finish(cur, open, out);
      continue;
    }
    eq = key_part.find('=');
    if (eq == std::string_view::npos)
      throw InvalidData("profile line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(key_part.substr(0, eq));
    const auto value = trim(key_part.substr(eq + 1));

    if (key == "name") {
      finish(cur, open, out);
      cur = DetectorProfile{};
      cur.name = std::string(value);
      cur.jitter = JitterModel{};
      open = true;
      continue;
    }
    if (!open) throw InvalidData("profile line " + std::to_string(line_no) + ": key before 'name'");

    if (key == "temperature_c") {
      cur.temperature_c = parse_double(value, line_no);
    } else if (key == "efficiency") {
      cur.efficiency = parse_double(value, line_no);
    } else if (key == "dark_p10") {
      cur.dark.p10 = parse_double(value, line_no);
    } else if (key == "dark_slope") {
      cur.dark.slope = parse_double(value, line_no);
    } else if (key == "gate_width_ns") {
      cur.gate_width = parse_scaled(value, 9, line_no);
    } else if (key == "afterpulse") {
      cur.afterpulse.terms.clear();
      for (auto [a, tau_us] : split_pairs(value, line_no))
        cur.afterpulse.terms.push_back({parse_double(a, line_no), parse_scaled(tau_us, 6, line_no)});
    } else if (key == "afterpulse_horizon_us") {
      cur.afterpulse.horizon = parse_scaled(value, 6, line_no);
    } else if (key == "jitter") {
      cur.jitter.anchors.clear();
      for (auto [eff, ps] : split_pairs(value, line_no))
        cur.jitter.anchors.push_back({parse_double(eff, line_no), parse_scaled(ps, 12, line_no)});
    } else if (key == "note") {
      cur.note = std::string(value);
    } else {
      throw InvalidData("profile line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
  }
  finish(cur, open, out);
  return out;
}

std::vector<DetectorProfile> load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidData("cannot open profile file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_profiles(ss.str());
  } catch (const InvalidData& e) {
    throw InvalidData(path.string() + ": " + e.what());
  }
}

std::string profile_fingerprint(const DetectorProfile& profile) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : format_profile(profile)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<DetectorProfile> merge_registries(std::vector<DetectorProfile> base,
                                              const std::vector<DetectorProfile>& overrides) {
  for (const auto& p : overrides) {
    auto it = std::find_if(base.begin(), base.end(), [&](const DetectorProfile& b) { return b.name == p.name; });
    if (it != base.end())
      *it = p;
    else
      base.push_back(p);
  }
  return base;
}

const DetectorProfile& find_profile(const std::vector<DetectorProfile>& profiles, std::string_view name) {
  for (const auto& p : profiles)
    if (p.name == name) return p;
  std::vector<std::string> names;
  std::string list;
  for (const auto& p : profiles) {
    names.push_back(p.name);
    list += (list.empty() ? "" : ", ") + p.name;
  }
  throw NotFound("unknown profile '" + std::string(name) + "' (available: " + list + ")", std::move(names));
}

}  // namespace apd
