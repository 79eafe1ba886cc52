#pragma once

// Analytic QKD link budget: transmission, raw/sifted/distilled key rates and
// the detector-limited QBER versus fibre distance.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "apd/detector_model.hpp"

namespace apd {

struct LinkConfig {
  double mu = 0.1;                     // probability a pulse holds at least one photon
  double attenuation_db_per_km = 0.25;
  double receiver_transmission = 0.5;  // T_R
  double f_rep = 1e6;                  // Hz
  double distance_km = 0.0;
};

void validate(const LinkConfig& cfg);

enum class QberForm {
  // Erroneous counts from dark counts and photon-induced afterpulses only.
  low_dark_limit,
  // Also counts afterpulses that follow dark counts: (p_dc + (p_T eta + p_dc) S) / (p_T eta).
  with_dark_afterpulsing,
};

struct QberOptions {
  std::int64_t n_skip = 0;
  bool include_afterpulse = true;
  QberForm form = QberForm::low_dark_limit;
};

struct QberTerms {
  double qber = 0.0;
  double dark_term = 0.0;
  double afterpulse_term = 0.0;

  // Distillation cannot produce key above this.
  bool usable() const noexcept { return qber <= 0.5; }
};

struct LinkPoint {
  double distance_km = 0.0;
  double t_link = 0.0;
  double p_t = 0.0;
  double raw_rate_hz = 0.0;
  double normalized_raw = 0.0;
  double sifted_rate_hz = 0.0;
  double distilled_rate_hz = 0.0;
  double qber = 0.0;
  double dark_term = 0.0;
  double afterpulse_term = 0.0;
};

double fiber_transmission(double attenuation_db_per_km, double distance_km);
double photon_arrival_probability(const LinkConfig& cfg);

double raw_rate(const LinkConfig& cfg, const DetectorProfile& profile);
// Raw rate divided by f_rep.
double normalized_raw_rate(const LinkConfig& cfg, const DetectorProfile& profile);

QberTerms qber(const LinkConfig& cfg, const DetectorProfile& profile, const QberOptions& options);
QberTerms qber(const LinkConfig& cfg, const DetectorProfile& profile, std::int64_t n_skip);

// Distance (km) at which qber reaches target; bisection on [0, 500] km to 0.01 km.
double distance_for_qber(const LinkConfig& cfg, const DetectorProfile& profile, double target,
                         const QberOptions& options);
double distance_for_qber(const LinkConfig& cfg, const DetectorProfile& profile, double target, std::int64_t n_skip);

inline constexpr double kMaxSolveDistanceKm = 500.0;
inline constexpr double kSolveResolutionKm = 1e-2;

// Fraction of the sifted key left after error correction and privacy
// amplification: linear through (0, 1), (0.05, 0.5), (0.10, 0.15); zero above 0.10.
double distillation_surviving_fraction(double qber);

struct WindowAcceptance {
  double dark_fraction = 0.0;
  double photon_survival = 0.0;
};

// Time window of width `window` centred on the expected photon arrival.
// Photon survival assumes Gaussian jitter with sigma = FWHM / 2.355.
WindowAcceptance windowed_acceptance(double window, double gate_width, double jitter_fwhm);
double windowed_dark_fraction(double window, double gate_width);

enum class SeparationCriterion {
  midpoint_misclassification,
  // Tabulated value from the source measurement; no closed form reproduces it.
  reported_value,
};

struct PathSeparation {
  double separation = 0.0;  // seconds
  bool externally_sourced = false;
  std::string remark;
};

PathSeparation min_path_separation(double fwhm, double overlap_limit, SeparationCriterion criterion);
SeparationCriterion parse_separation_criterion(const std::string& name);

LinkPoint link_point(const LinkConfig& cfg, const DetectorProfile& profile, const QberOptions& options);

// Distances 0, step, 2 step, ... up to and including dmax (within step/1e6).
std::vector<double> distance_grid(double dmax_km, double step_km);

// Curve sweeps: the serial version is the reference, the default one splits the
// grid across OpenMP threads. Both produce identical points.
std::vector<LinkPoint> link_curve_serial(LinkConfig cfg, const DetectorProfile& profile, const QberOptions& options,
                                         std::span<const double> distances_km);
std::vector<LinkPoint> link_curve(LinkConfig cfg, const DetectorProfile& profile, const QberOptions& options,
                                  std::span<const double> distances_km);

extern const char* const kLinkCurveHeader;
void write_link_curve_csv(std::ostream& os, std::span<const LinkPoint> points);

}  // namespace apd
