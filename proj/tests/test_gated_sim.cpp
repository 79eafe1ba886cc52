#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "apd/errors.hpp"
#include "apd/gated_sim.hpp"
#include "apd/link_model.hpp"
#include "apd/profile_io.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace apd;

namespace {

SimConfig epitaxx_at(double d_km, std::uint64_t gates, std::uint64_t seed) {
  SimConfig cfg;
  cfg.profile = find_profile(builtin_profiles(), "epitaxx-60");
  cfg.link.distance_km = d_km;
  cfg.n_gates = gates;
  cfg.seed = seed;
  return cfg;
}

// Bright source so every cause shows up in a short run.
SimConfig busy(std::uint64_t gates, std::uint64_t seed) {
  auto cfg = epitaxx_at(0.0, gates, seed);
  cfg.link.mu = 0.5;
  cfg.link.receiver_transmission = 1.0;
  cfg.profile.dark.p10 = 1e-3;
  return cfg;
}

bool within(double value, double expected, double se, double k = 3.0) { return std::abs(value - expected) <= k * se; }

}  // namespace

TEST_SUITE("gated_sim") {
  TEST_CASE("fixed seed gives bit-identical outcomes") {
    auto cfg = busy(200'000, 7);
    cfg.record_events = true;
    const auto a = run_simulation_serial(cfg);
    const auto b = run_simulation_serial(cfg);
    CHECK(a == b);
    CHECK(a.triggers[Cause::afterpulse] > 0);
    cfg.seed = 8;
    CHECK_FALSE(run_simulation_serial(cfg) == a);
  }

  TEST_CASE("parallel runs match the serial reference for any thread count") {
    auto cfg = busy(400'000, 11);
    cfg.streams = 5;
    cfg.n_skip_holdoff = 1;
    cfg.record_events = true;
    const auto ref = run_simulation_serial(cfg);
    for (int threads : {1, 2, 3, 8}) CHECK(run_simulation(cfg, threads) == ref);
    CHECK(run_simulation(cfg) == ref);
  }

  TEST_CASE("streams partition the gates") {
    auto cfg = busy(100'003, 12);
    cfg.streams = 4;
    cfg.record_events = true;
    const auto out = run_simulation_serial(cfg);
    CHECK(out.n_gates == 100'003);
    CHECK(out.gates_applied + out.gates_skipped == out.n_gates);
    for (std::size_t i = 1; i < out.events.size(); ++i) CHECK(out.events[i].gate_index > out.events[i - 1].gate_index);
    CHECK(out.events.back().gate_index < out.n_gates);
  }

  TEST_CASE("hold-off accounting") {
    for (std::int64_t skip : {1, 2, 5, 17}) {
      auto cfg = busy(300'000, 13 + static_cast<std::uint64_t>(skip));
      cfg.n_skip_holdoff = skip;
      cfg.record_events = true;
      const auto out = run_simulation_serial(cfg);
      REQUIRE(out.events.size() == out.triggers.total());
      std::uint64_t full = 0;
      std::uint64_t tail = 0;
      for (const auto& e : out.events) {
        const std::uint64_t remaining = cfg.n_gates - 1 - e.gate_index;
        if (remaining >= static_cast<std::uint64_t>(skip))
          ++full;
        else
          tail += remaining;
      }
      CHECK(out.gates_skipped == static_cast<std::uint64_t>(skip) * full + tail);
      CHECK(out.gates_applied + out.gates_skipped == cfg.n_gates);
      // No trigger lands inside another trigger's hold-off.
      for (std::size_t i = 1; i < out.events.size(); ++i)
        CHECK(out.events[i].gate_index - out.events[i - 1].gate_index > static_cast<std::uint64_t>(skip));
    }
  }

  TEST_CASE("no stimulus, no counts") {
    auto cfg = epitaxx_at(0.0, 100'000, 1);
    cfg.link.mu = 0.0;
    cfg.profile.dark.p10 = 0.0;
    const auto out = run_simulation_serial(cfg);
    CHECK(out.triggers.total() == 0);
    CHECK(out.accepted.total() == 0);
    CHECK(out.gates_applied == cfg.n_gates);
  }

  TEST_CASE("time window: dark acceptance scales with width, photons follow the erf survival") {
    auto cfg = busy(2'000'000, 21);
    cfg.profile.afterpulse.terms.clear();
    cfg.profile.dark.p10 = 2e-2;
    const double gate = cfg.profile.gate_width;
    for (double window : {0.3e-9, 0.6e-9, 1.2e-9, 2.4e-9}) {
      cfg.window = window;
      const auto out = run_simulation_serial(cfg);
      const auto n_dark = static_cast<double>(out.triggers[Cause::dark]);
      const double f_dark = window / gate;
      CHECK(within(static_cast<double>(out.accepted[Cause::dark]), f_dark * n_dark,
                   std::sqrt(n_dark * f_dark * (1 - f_dark)) + 1e-12));
      const auto n_ph = static_cast<double>(out.triggers[Cause::photon]);
      const double sigma = 450e-12 / 2.355;
      const double surv = oracle::phi(window / 2 / sigma) - oracle::phi(-window / 2 / sigma);
      const double expected = windowed_acceptance(window, gate, 450e-12).photon_survival;
      CHECK(expected == doctest::Approx(surv).epsilon(1e-12));
      CHECK(within(static_cast<double>(out.accepted[Cause::photon]), surv * n_ph,
                   std::sqrt(n_ph * surv * (1 - surv)) + 1e-12));
    }
  }

  TEST_CASE("afterpulse memory pruning at the horizon changes nothing") {
    auto cfg = busy(300'000, 31);
    cfg.record_events = true;
    const auto a = run_simulation_serial(cfg);
    cfg.memory_horizon_scale = 2.0;
    const auto b = run_simulation_serial(cfg);
    CHECK(a.triggers == b.triggers);
    CHECK(a.accepted == b.accepted);
    CHECK(a.gates_skipped == b.gates_skipped);
    CHECK(a.events == b.events);
    CHECK(a.config_key != b.config_key);
  }

  TEST_CASE("merge") {
    auto cfg = busy(100'000, 41);
    std::vector<SimOutcome> runs;
    for (std::uint64_t s = 0; s < 4; ++s) {
      cfg.seed = 100 + s;
      runs.push_back(run_simulation_serial(cfg));
    }
    CHECK(merge(std::span(runs.data(), 1)) == runs[0]);

    const auto all = merge(runs);
    CauseCounts sum;
    std::uint64_t applied = 0;
    for (const auto& r : runs) {
      for (std::size_t c = 0; c < 3; ++c) sum.by_cause[c] += r.accepted.by_cause[c];
      applied += r.gates_applied;
    }
    CHECK(all.accepted == sum);
    CHECK(all.gates_applied == applied);
    CHECK(all.n_gates == 4 * cfg.n_gates);

    const double errors = static_cast<double>(sum[Cause::dark] + sum[Cause::afterpulse]);
    const double correct = static_cast<double>(sum[Cause::photon]);
    CHECK(all.empirical_qber().value == errors / correct);
    CHECK(all.empirical_qber().std_error == doctest::Approx(errors / correct * std::sqrt(1 / errors + 1 / correct)).epsilon(1e-14));

    // Associative and commutative on tallies.
    const std::vector<SimOutcome> ab{runs[0], runs[1]};
    const std::vector<SimOutcome> cd{runs[2], runs[3]};
    const std::vector<SimOutcome> nested{merge(cd), merge(ab)};
    const auto re = merge(nested);
    CHECK(re.accepted == all.accepted);
    CHECK(re.triggers == all.triggers);
    CHECK(re.gates_skipped == all.gates_skipped);

    auto other = cfg;
    other.link.distance_km = 1.0;
    const std::vector<SimOutcome> mixed{runs[0], run_simulation_serial(other)};
    CHECK_THROWS_AS(merge(mixed), InvalidArgument);
    CHECK_THROWS_AS(merge(std::span<const SimOutcome>{}), InvalidArgument);
  }

  TEST_CASE("configuration validation") {
    auto cfg = busy(1000, 1);
    auto bad = cfg;
    bad.n_gates = 0;
    CHECK_THROWS_AS(run_simulation(bad), InvalidArgument);
    bad = cfg;
    bad.streams = 2000;
    CHECK_THROWS_AS(run_simulation(bad), InvalidArgument);
    bad = cfg;
    bad.window = 3e-9;
    CHECK_THROWS_AS(run_simulation(bad), InvalidArgument);
    bad = cfg;
    bad.link.mu = 1.5;
    CHECK_THROWS_AS(run_simulation(bad), InvalidArgument);
    bad = cfg;
    bad.n_skip_holdoff = -1;
    CHECK_THROWS_AS(run_simulation(bad), InvalidArgument);
    bad = cfg;
    bad.memory_horizon_scale = 0.5;
    CHECK_THROWS_AS(run_simulation(bad), InvalidArgument);
    const std::vector<double> off_grid{1.5e-6};
    CHECK_THROWS_AS(empirical_afterpulse_curve(cfg, off_grid), InvalidArgument);
    const std::vector<double> negative{-1e-6};
    CHECK_THROWS_AS(empirical_afterpulse_curve(cfg, negative), InvalidArgument);
  }

  TEST_CASE("two-gate curve without afterpulsing is flat at zero") {
    std::vector<double> dts;
    for (int i = 1; i <= 10; ++i) dts.push_back(i * 1e-6);
    const auto curve = fixture::double_gate_run(AfterpulseModel{}, 1e-3, dts, 1'000'000, 51);
    for (const auto& rec : curve) {
      const auto m = afterpulse_point(rec);
      CHECK(within(m.raw_value, 0.0, m.std_error));
    }
  }

  TEST_CASE("two-gate curve reproduces the afterpulse model") {
    SimConfig cfg;
    cfg.profile = fixture::test_detector(1e-3, epitaxx_afterpulse_model());
    cfg.link.mu = 1.0;
    cfg.link.receiver_transmission = 1.0;
    cfg.link.f_rep = 1e8;
    cfg.n_gates = 1'000'000;
    cfg.seed = 52;
    std::vector<double> dts;
    for (int i = 0; i < 24; ++i) dts.push_back(std::round(2.0 * std::pow(1e4, i / 23.0)) * 1e-8);
    const auto curve = empirical_afterpulse_curve(cfg, dts);
    const auto serial = empirical_afterpulse_curve_serial(cfg, dts);
    REQUIRE(serial.size() == curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
      CHECK(serial[i].n_first == curve[i].n_first);
      CHECK(serial[i].n_coinc == curve[i].n_coinc);
    }
    for (const auto& pt : curve) {
      const double truth = afterpulse_probability(cfg.profile.afterpulse, pt.dt);
      CHECK(within(pt.probability, truth, pt.std_error));
      CHECK(pt.probability == static_cast<double>(pt.n_coinc) / static_cast<double>(pt.n_first) - pt.dark_probability);
    }
    const auto& at100ns = curve[static_cast<std::size_t>(std::find(dts.begin(), dts.end(), 1e-7) - dts.begin())];
    CHECK(at100ns.dt == 1e-7);
    CHECK(at100ns.probability == doctest::Approx(1e-2).epsilon(0.2));
  }

  TEST_CASE("empirical rates agree with the analytic link model across seeds") {
    const auto p = find_profile(builtin_profiles(), "epitaxx-60");
    LinkConfig link;
    link.distance_km = 30.0;
    const double ptn = normalized_raw_rate(link, p);
    const double pdc = p.dark_probability();
    const double q = qber(link, p, QberOptions{0, true, QberForm::with_dark_afterpulsing}).qber;
    int pass = 0;
    const int trials = 100;
    for (int s = 0; s < trials; ++s) {
      const auto out = run_simulation(epitaxx_at(30.0, 1'000'000, 1000 + static_cast<std::uint64_t>(s)));
      const auto ph = out.probability(Cause::photon);
      const auto dk = out.probability(Cause::dark);
      const auto eq = out.empirical_qber();
      if (within(ph.value, ptn, ph.std_error) && within(dk.value, pdc, dk.std_error) && within(eq.value, q, eq.std_error))
        ++pass;
    }
    MESSAGE("analytic agreement in " << pass << " of " << trials << " seeds");
    CHECK(pass >= 99);
  }

  TEST_CASE("event log and summary") {
    auto cfg = busy(20'000, 61);
    cfg.record_events = true;
    const auto out = run_simulation_serial(cfg);
    std::ostringstream os;
    write_event_log_csv(os, out.events);
    const auto text = os.str();
    CHECK(text.substr(0, text.find('\n')) == kEventLogHeader);
    CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == out.events.size() + 1);
    const auto summary = format_summary(out);
    for (const char* key : {"empirical_raw_rate_hz = ", "empirical_qber = ", "empirical_sifted_rate_hz = ",
                            "counts_afterpulse = "})
      CHECK(summary.find(key) != std::string::npos);
  }
}
