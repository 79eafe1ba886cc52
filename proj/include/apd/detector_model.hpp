#pragma once

// Parametric models of a gated InGaAs/InP single-photon detector.
//
// All quantities are SI (seconds, hertz) unless a name says otherwise.
// Probabilities are per gate.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace apd {

inline constexpr double kReferenceEfficiency = 0.10;
inline constexpr double kDefaultGateWidth = 2.4e-9;
inline constexpr double kDefaultAfterpulseHorizon = 100e-6;
inline constexpr double kDefaultDarkSlope = 30.0;

// One trapping level: contributes amplitude * exp(-dt / lifetime).
struct AfterpulseTerm {
  double amplitude = 0.0;
  double lifetime = 1e-6;
};

struct AfterpulseModel {
  std::vector<AfterpulseTerm> terms;
  double horizon = kDefaultAfterpulseHorizon;

  // Sum of exponentials without the horizon cutoff. Defined for dt >= 0.
  double raw(double dt) const noexcept;
  double amplitude_sum() const noexcept;
};

struct JitterAnchor {
  double efficiency = 0.0;
  double fwhm = 0.0;  // seconds
};

struct JitterModel {
  std::vector<JitterAnchor> anchors;  // sorted by efficiency

  double fwhm_at_reference() const;
};

// p_dc(eta) = p10 * exp(slope * (eta - 0.10))
struct DarkCountModel {
  double p10 = 1e-5;
  double slope = kDefaultDarkSlope;
};

struct DetectorProfile {
  std::string name;
  std::optional<double> temperature_c;
  double efficiency = kReferenceEfficiency;
  DarkCountModel dark;
  double gate_width = kDefaultGateWidth;
  AfterpulseModel afterpulse;
  JitterModel jitter;
  std::string note;  // provenance, free text

  double dark_probability() const;
  double jitter_fwhm() const;
};

// Throw InvalidArgument / ConfigError on invariant violations.
void validate(const AfterpulseModel& model);
void validate(const JitterModel& model);
void validate(const DarkCountModel& model);
void validate(const DetectorProfile& profile);

// Probability of an afterpulse in a gate opened dt after an avalanche.
double afterpulse_probability(const AfterpulseModel& model, double dt);

// Sum of p_ap(n / f_rep) over n = n_skip+1, n_skip+2, ... up to the horizon.
// Closed-form geometric series per term.
double cumulative_afterpulse(const AfterpulseModel& model, double f_rep, std::int64_t n_skip = 0);

// Same sum evaluated term by term; kept as an independent route for tests.
double cumulative_afterpulse_direct(const AfterpulseModel& model, double f_rep, std::int64_t n_skip = 0);

// Index of the last gate (counted from the avalanche) that still lies inside the horizon.
std::int64_t gates_within_horizon(double horizon, double f_rep);

// Smallest hold-off n with cumulative_afterpulse(model, f_rep, n) < budget.
std::int64_t min_skip_gates(const AfterpulseModel& model, double f_rep, double budget);

double dark_count_at(const DarkCountModel& model, double efficiency);

// Piecewise-linear in efficiency, clamped to the end anchors.
double jitter_at(const JitterModel& model, double efficiency);

// Default models shared by the registry.
AfterpulseModel epitaxx_afterpulse_model();
JitterModel epitaxx_jitter_model();

std::vector<DetectorProfile> builtin_profiles();

}  // namespace apd
