#include <doctest.h>

#include <random>
#include <sstream>

#include "apd/csv.hpp"
#include "apd/errors.hpp"
#include "apd/profile_io.hpp"

using namespace apd;

namespace {

void check_same(const DetectorProfile& a, const DetectorProfile& b) {
  CHECK(a.name == b.name);
  CHECK(a.temperature_c == b.temperature_c);
  CHECK(a.efficiency == b.efficiency);
  CHECK(a.dark.p10 == b.dark.p10);
  CHECK(a.dark.slope == b.dark.slope);
  CHECK(a.gate_width == b.gate_width);
  CHECK(a.afterpulse.horizon == b.afterpulse.horizon);
  REQUIRE(a.afterpulse.terms.size() == b.afterpulse.terms.size());
  for (std::size_t i = 0; i < a.afterpulse.terms.size(); ++i) {
    CHECK(a.afterpulse.terms[i].amplitude == b.afterpulse.terms[i].amplitude);
    CHECK(a.afterpulse.terms[i].lifetime == b.afterpulse.terms[i].lifetime);
  }
  REQUIRE(a.jitter.anchors.size() == b.jitter.anchors.size());
  for (std::size_t i = 0; i < a.jitter.anchors.size(); ++i) {
    CHECK(a.jitter.anchors[i].efficiency == b.jitter.anchors[i].efficiency);
    CHECK(a.jitter.anchors[i].fwhm == b.jitter.anchors[i].fwhm);
  }
  CHECK(a.note == b.note);
}

const char* kMinimal = R"(# lab registry
name = lab-a
efficiency = 0.12
dark_p10 = 1e-5   # measured 2024
dark_slope = 28
gate_width_ns = 2.5
afterpulse = 0.01:0.5, 0.002:5
jitter = 0.1:400
note = bench #3 detector

name = lab-b
dark_p10 = 2e-5
jitter = 0.1:450
)";

}  // namespace

TEST_SUITE("profile_io") {
  TEST_CASE("builtin profiles survive a text round trip exactly") {
    const auto reg = builtin_profiles();
    const auto parsed = parse_profiles(format_profiles(reg));
    REQUIRE(parsed.size() == reg.size());
    for (std::size_t i = 0; i < reg.size(); ++i) {
      check_same(reg[i], parsed[i]);
      CHECK(profile_fingerprint(reg[i]) == profile_fingerprint(parsed[i]));
    }
  }

  TEST_CASE("random profiles survive a text round trip exactly") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      DetectorProfile p;
      p.name = "r" + std::to_string(trial);
      p.temperature_c = -200.0 * u(rng);
      p.efficiency = 0.01 + 0.2 * u(rng);
      p.dark = {1e-7 + 1e-4 * u(rng), 10 + 20 * u(rng)};
      p.gate_width = 1e-9 + 20e-9 * u(rng);
      p.afterpulse.horizon = 1e-6 + 1e-3 * u(rng);
      for (int k = 0; k < 3; ++k) p.afterpulse.terms.push_back({0.01 * u(rng), 1e-8 * std::pow(1e4, u(rng))});
      p.jitter.anchors = {{0.05, 1e-9 * u(rng) + 5e-10}, {0.2, 4e-10 * u(rng)}};
      const auto back = parse_profiles(format_profile(p));
      REQUIRE(back.size() == 1);
      check_same(p, back[0]);
    }
  }

  TEST_CASE("parsing: comments, defaults and notes keep '#'") {
    const auto reg = parse_profiles(kMinimal);
    REQUIRE(reg.size() == 2);
    CHECK(reg[0].name == "lab-a");
    CHECK(reg[0].dark.p10 == 1e-5);
    CHECK(reg[0].gate_width == 2.5e-9);
    CHECK(reg[0].afterpulse.terms.size() == 2);
    CHECK(reg[0].afterpulse.terms[1].lifetime == 5e-6);
    CHECK(reg[0].note == "bench #3 detector");
    CHECK(reg[1].efficiency == 0.10);
    CHECK(reg[1].dark.slope == 30.0);
    CHECK(reg[1].afterpulse.terms.empty());
  }

  TEST_CASE("parsing errors carry the line number") {
    auto message = [](const std::string& text) {
      try {
        parse_profiles(text);
      } catch (const InvalidData& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("name = a\ndark_p10 = abc\njitter = 0.1:400\n").find("line 2") != std::string::npos);
    CHECK(message("name = a\ncolour = blue\n").find("unknown key") != std::string::npos);
    CHECK(message("dark_p10 = 1e-5\n").find("before 'name'") != std::string::npos);
    CHECK(message("name = a\njust text\n").find("line 2") != std::string::npos);
    CHECK(message("name = a\ndark_p10 = 1e-5\n").find("no anchors") != std::string::npos);
    CHECK(message("name = a\ndark_p10 = 2\njitter = 0.1:400\n").find("profile 'a'") != std::string::npos);
  }

  TEST_CASE("display units are written without rounding") {
    auto p = builtin_profiles().front();
    p.afterpulse.terms = {{0.01, 1.5e-6}, {0.002, 20e-9}};
    p.gate_width = 2.4e-9;
    const auto text = format_profile(p);
    CHECK(text.find("gate_width_ns = 2.4\n") != std::string::npos);
    CHECK(text.find("0.01:1.5, 0.002:0.02\n") != std::string::npos);
    CHECK(text.find("afterpulse_horizon_us = 100\n") != std::string::npos);
    CHECK(parse_profiles("name = x\njitter = 0.1:4.5e2\n")[0].jitter.anchors[0].fwhm == 450e-12);
  }

  TEST_CASE("fingerprints distinguish profiles") {
    auto reg = builtin_profiles();
    auto p = reg[0];
    const auto f0 = profile_fingerprint(p);
    CHECK(f0.size() == 16);
    p.dark.p10 *= 1.0000001;
    CHECK(profile_fingerprint(p) != f0);
    CHECK(profile_fingerprint(reg[0]) != profile_fingerprint(reg[1]));
  }

  TEST_CASE("registry merge and lookup") {
    auto base = builtin_profiles();
    auto extra = parse_profiles(kMinimal);
    extra[1].name = "epitaxx-60";
    const auto merged = merge_registries(base, extra);
    CHECK(merged.size() == base.size() + 1);
    CHECK(find_profile(merged, "epitaxx-60").dark.p10 == 2e-5);
    CHECK(find_profile(merged, "lab-a").dark.p10 == 1e-5);
    try {
      find_profile(merged, "bogus");
      FAIL("expected NotFound");
    } catch (const NotFound& e) {
      CHECK(e.available().size() == merged.size());
      CHECK(std::string(e.what()).find("epitaxx-40") != std::string::npos);
    }
  }
}

TEST_SUITE("csv") {
  TEST_CASE("table parsing") {
    const auto t = csv::Table::parse("# comment\n a , b\n\n1, x \n2,y\n");
    CHECK(t.header() == std::vector<std::string>{"a", "b"});
    CHECK(t.rows() == 2);
    CHECK(t.number(1, t.column("a")) == 2.0);
    CHECK(t.cell(0, 1) == "x");
    CHECK(t.has_column("b"));
    CHECK_FALSE(t.has_column("c"));
    CHECK_THROWS_AS(t.column("c"), InvalidData);
    CHECK_THROWS_AS(t.number(0, 1), InvalidData);
    CHECK_THROWS_AS(csv::Table::parse("a,b\n1\n"), InvalidData);
    CHECK_THROWS_AS(csv::Table::parse("# only\n"), InvalidData);
    CHECK_THROWS_AS(csv::Table::load("/nonexistent/file.csv"), InvalidData);
  }

  TEST_CASE("number formatting round-trips") {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> e(-300, 300);
    for (int i = 0; i < 1000; ++i) {
      const double v = std::pow(10.0, e(rng)) * (i % 2 ? -1 : 1);
      CHECK(std::stod(csv::format_number(v)) == v);
    }
    CHECK(csv::format_number(0.1) == "0.1");
    CHECK(csv::format_number(2.8e-5) == "2.8e-05");
  }

  TEST_CASE("scaled formatting and parsing are exact") {
    CHECK(csv::format_scaled(1e-7, 6) == "0.1");
    CHECK(csv::format_scaled(450e-12, 12) == "450");
    CHECK(csv::format_scaled(-2.5e-9, 9) == "-2.5");
    CHECK(csv::format_scaled(0.0, 6) == "0");
    CHECK(csv::format_scaled(3e-30, 6) == "3e-24");
    CHECK(csv::shift_exponent("1.5e3", -2) == "1.5e1");
    const auto t = csv::Table::parse("dt_us\n0.1\n1e2\nx\n");
    CHECK(t.number_scaled(0, 0, 6) == 1e-7);
    CHECK(t.number_scaled(1, 0, 6) == 1e-4);
    CHECK_THROWS_AS(t.number_scaled(2, 0, 6), InvalidData);
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> e(-20, 5);
    for (int i = 0; i < 1000; ++i) {
      const double v = std::pow(10.0, e(rng));
      const auto back = csv::Table::parse("x\n" + csv::format_scaled(v, 6) + "\n").number_scaled(0, 0, 6);
      CHECK(back == v);
    }
  }
}
