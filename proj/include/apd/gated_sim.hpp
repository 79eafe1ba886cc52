#pragma once

// Gate-by-gate Monte Carlo of a gated detector at the end of a link.
//
// Per applied gate, in order of precedence:
//   photon     with probability p_T * eta   (Gaussian-jittered timestamp)
//   dark count with probability p_dc         (uniform timestamp)
//   afterpulse with hazard 1 - prod_i (1 - p_ap(t - t_i)) over remembered avalanches
// Every avalanche enters the afterpulse memory and disables the next
// n_skip_holdoff gates.
//
// A run is split into `streams` contiguous partitions with independent seeds.
// With more than one stream each partition first simulates a discarded
// warm-up of horizon * f_rep gates so no state crosses partition boundaries.
// Results depend on (config, seed, streams) only, never on the thread count.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apd/detector_model.hpp"
#include "apd/link_model.hpp"

namespace apd {

enum class Cause : std::uint8_t { photon = 0, dark = 1, afterpulse = 2 };
const char* to_string(Cause c) noexcept;

struct SimConfig {
  LinkConfig link;
  DetectorProfile profile;
  std::uint64_t n_gates = 1'000'000;
  std::int64_t n_skip_holdoff = 0;
  std::uint64_t seed = 0;
  std::optional<double> window;  // seconds, centred on the expected photon arrival
  std::uint32_t streams = 1;
  // Afterpulse memory is pruned after horizon * memory_horizon_scale.
  double memory_horizon_scale = 1.0;
  bool record_events = false;
};

void validate(const SimConfig& cfg);

struct GateOutcome {
  std::uint64_t gate_index = 0;
  Cause cause = Cause::photon;
  double timestamp_in_gate = 0.0;  // seconds from gate opening
  bool in_window = true;

  bool operator==(const GateOutcome&) const = default;
};

struct CauseCounts {
  std::array<std::uint64_t, 3> by_cause{};

  std::uint64_t& operator[](Cause c) noexcept { return by_cause[static_cast<std::size_t>(c)]; }
  std::uint64_t operator[](Cause c) const noexcept { return by_cause[static_cast<std::size_t>(c)]; }
  std::uint64_t total() const noexcept { return by_cause[0] + by_cause[1] + by_cause[2]; }
  bool operator==(const CauseCounts&) const = default;
};

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct SimOutcome {
  std::string config_key;  // everything but the seed; merge() requires equality
  double f_rep = 0.0;
  std::uint64_t n_gates = 0;
  std::uint64_t gates_applied = 0;
  std::uint64_t gates_skipped = 0;
  CauseCounts triggers;  // every avalanche
  CauseCounts accepted;  // avalanches inside the time window (all, without a window)
  std::vector<GateOutcome> events;

  bool operator==(const SimOutcome&) const = default;

  // Per applied gate, accepted counts, Poisson standard errors.
  Estimate probability(Cause c) const;
  // Accepted counts of any cause per second of link time.
  double empirical_raw_rate_hz() const;
  Estimate photon_rate_hz() const;
  // Erroneous over correct counts, matching the analytic QBER.
  Estimate empirical_qber() const;
  Estimate empirical_dark_term() const;
  Estimate empirical_afterpulse_term() const;
};

// Identical results; run_simulation spreads streams over at most `max_threads`
// OpenMP threads (0 = runtime default).
SimOutcome run_simulation_serial(const SimConfig& cfg);
SimOutcome run_simulation(const SimConfig& cfg, int max_threads = 0);

// Combines tallies of runs with identical configs up to seed. Events are
// concatenated in argument order. InvalidArgument on mismatch or empty input.
SimOutcome merge(std::span<const SimOutcome> outcomes);

// Two-gate afterpulse experiment: a first gate sees the link's light, a
// second dark gate follows after each dt; counts coincidences.
struct AfterpulseCurvePoint {
  double dt = 0.0;
  std::uint64_t n_first = 0;
  std::uint64_t n_coinc = 0;
  double dark_probability = 0.0;
  double probability = 0.0;  // n_coinc / n_first - dark_probability
  double std_error = 0.0;
};

// cfg.n_gates first gates per grid point. dt values must be positive
// multiples of 1 / f_rep.
std::vector<AfterpulseCurvePoint> empirical_afterpulse_curve_serial(const SimConfig& cfg,
                                                                   std::span<const double> dt_grid);
std::vector<AfterpulseCurvePoint> empirical_afterpulse_curve(const SimConfig& cfg, std::span<const double> dt_grid,
                                                            int max_threads = 0);

extern const char* const kEventLogHeader;
void write_event_log_csv(std::ostream& os, std::span<const GateOutcome> events);

// `key = value` lines; names follow the link curve columns with an empirical_ prefix.
std::string format_summary(const SimOutcome& outcome, int sig_figs = 17);

}  // namespace apd
