#pragma once

// Reduction of raw counting data to detector parameters: dark probability,
// Poisson-corrected detection efficiency, double-gate afterpulse probability
// and timing jitter from a TDC histogram.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace apd {

struct MeasurementRecord {
  std::uint64_t counts = 0;
  double integration_time = 0.0;  // s
  double f_rep = 0.0;             // Hz
  bool shutter_open = false;
  std::optional<double> mean_photons_per_pulse;
};

struct DoubleGateRecord {
  std::uint64_t n_first_gate_counts = 0;
  std::uint64_t n_coincidences = 0;
  double dt = 0.0;  // s
  double dark_probability = 0.0;
};

struct TimingHistogram {
  double bin_width = 0.0;  // s
  double first_bin_start = 0.0;
  std::vector<double> bins;
  double laser_fwhm = 350e-12;
};

void validate(const MeasurementRecord& rec);
void validate(const DoubleGateRecord& rec);
void validate(const TimingHistogram& hist);

namespace flags {
inline constexpr const char* zero_counts = "zero_counts";
inline constexpr const char* no_signal = "no_signal";
inline constexpr const char* below_dark_floor = "below_dark_floor";
}  // namespace flags

struct Measurement {
  double value = 0.0;
  double std_error = 0.0;
  // Raw estimate before clamping; equals value when nothing was clamped.
  double raw_value = 0.0;
  // One-sided 95% upper bound, reported when no counts were seen.
  std::optional<double> upper_bound;
  std::vector<std::string> flags;

  bool has_flag(const std::string& f) const;
};

// counts / (f_rep * t), Poisson error. InvalidArgument with the shutter open.
Measurement dark_probability(const MeasurementRecord& rec);

// eta = -ln[(1 - p_light) / (1 - p_dark)] / mu_bar, errors propagated from both
// Poisson counts. p_light <= p_dark yields 0 flagged no_signal.
Measurement detection_efficiency(const MeasurementRecord& light, const MeasurementRecord& dark);

// n_coinc / n_first - p_dc, binomial error; negatives clamp to 0 with a flag.
Measurement afterpulse_point(const DoubleGateRecord& rec);

struct JitterResult {
  Measurement jitter;         // detector jitter after removing the laser width
  double measured_fwhm = 0.0;
  double pedestal = 0.0;      // counts per bin
  double peak_height = 0.0;   // above the pedestal
  double peak_position = 0.0; // s from the histogram start
};

// Detector jitter = sqrt(FWHM_meas^2 - FWHM_laser^2). The pedestal is the
// median of bins more than 3 FWHM from the peak. NoPeak when the peak stands
// less than 5 pedestal standard deviations above the pedestal; InvalidData
// when FWHM_meas < FWHM_laser.
JitterResult jitter_fwhm(const TimingHistogram& hist);

// Counts needed for a relative Poisson uncertainty rel_err: (1 / rel_err)^2.
double counts_needed(double relative_error);
// Integration time reaching that many counts at probability p per gate.
double integration_time_needed(double relative_error, double probability, double f_rep);

// CSV inputs.
// measurements: shutter, counts, integration_time_s, f_rep_hz, mu_bar
std::vector<MeasurementRecord> load_measurements(const std::filesystem::path& path);
// double gate: dt_us, n_first, n_coinc, dark_prob
std::vector<DoubleGateRecord> load_double_gate(const std::filesystem::path& path);
// histogram: bin_start_ps, counts (uniform bins)
TimingHistogram load_histogram(const std::filesystem::path& path, double laser_fwhm = 350e-12);

extern const char* const kReportHeader;
struct ReportRow {
  std::string quantity;
  double x = 0.0;  // dt for afterpulse rows, 0 otherwise
  Measurement m;
};
void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows);

}  // namespace apd
