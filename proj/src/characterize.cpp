#include "apd/characterize.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>

#include "apd/csv.hpp"
#include "apd/errors.hpp"

namespace apd {

bool Measurement::has_flag(const std::string& f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

void validate(const MeasurementRecord& rec) {
  if (!(rec.integration_time > 0.0)) throw InvalidArgument("measurement: integration time must be > 0");
  if (!(rec.f_rep > 0.0)) throw InvalidArgument("measurement: repetition frequency must be > 0");
  if (rec.shutter_open && !(rec.mean_photons_per_pulse && *rec.mean_photons_per_pulse > 0.0))
    throw InvalidArgument("measurement: an open-shutter record needs mean photons per pulse > 0");
}

void validate(const DoubleGateRecord& rec) {
  if (rec.n_coincidences > rec.n_first_gate_counts)
    throw InvalidArgument("double gate: more coincidences than first-gate counts");
  if (!(rec.dt > 0.0)) throw InvalidArgument("double gate: dt must be > 0");
  if (!(rec.dark_probability >= 0.0 && rec.dark_probability < 1.0))
    throw InvalidArgument("double gate: dark probability must lie in [0, 1)");
}

void validate(const TimingHistogram& hist) {
  if (!(hist.bin_width > 0.0)) throw InvalidArgument("histogram: bin width must be > 0");
  if (!(hist.laser_fwhm >= 0.0)) throw InvalidArgument("histogram: laser FWHM must be >= 0");
  if (std::none_of(hist.bins.begin(), hist.bins.end(), [](double b) { return b > 0.0; }))
    throw InvalidArgument("histogram: no nonzero bin");
}

namespace {

double per_gate(const MeasurementRecord& rec) { return rec.f_rep * rec.integration_time; }

}  // namespace

Measurement dark_probability(const MeasurementRecord& rec) {
  validate(rec);
  if (rec.shutter_open) throw InvalidArgument("dark_probability: record taken with the shutter open");
  const double gates = per_gate(rec);
  const auto n = static_cast<double>(rec.counts);
  Measurement m;
  m.value = n / gates;
  m.raw_value = m.value;
  m.std_error = std::sqrt(n) / gates;
  if (rec.counts == 0) {
    // Poisson: P(0 | 3) ~ 5%.
    m.upper_bound = 3.0 / gates;
    m.flags.emplace_back(flags::zero_counts);
  }
  return m;
}

Measurement detection_efficiency(const MeasurementRecord& light, const MeasurementRecord& dark) {
  validate(light);
  validate(dark);
  if (!light.shutter_open) throw InvalidArgument("detection_efficiency: light record has the shutter closed");
  if (dark.shutter_open) throw InvalidArgument("detection_efficiency: dark record has the shutter open");
  if (light.f_rep != dark.f_rep)
    throw InvalidArgument("detection_efficiency: light and dark records use different repetition frequencies");

  const double gl = per_gate(light);
  const double gd = per_gate(dark);
  const double p_light = static_cast<double>(light.counts) / gl;
  const double p_dark = static_cast<double>(dark.counts) / gd;
  const double s_light = std::sqrt(static_cast<double>(light.counts)) / gl;
  const double s_dark = std::sqrt(static_cast<double>(dark.counts)) / gd;
  if (p_light >= 1.0) throw InvalidArgument("detection_efficiency: light count probability >= 1");
  const double mu = *light.mean_photons_per_pulse;

  Measurement m;
  m.raw_value = (std::log1p(-p_dark) - std::log1p(-p_light)) / mu;
  m.std_error = std::hypot(s_light / (1.0 - p_light), s_dark / (1.0 - p_dark)) / mu;
  if (p_light <= p_dark) {
    m.value = 0.0;
    m.flags.emplace_back(flags::no_signal);
  } else {
    m.value = m.raw_value;
  }
  return m;
}

Measurement afterpulse_point(const DoubleGateRecord& rec) {
  validate(rec);
  if (rec.n_first_gate_counts == 0) throw InvalidArgument("afterpulse_point: no first-gate counts");
  const auto n = static_cast<double>(rec.n_first_gate_counts);
  const double q = static_cast<double>(rec.n_coincidences) / n;
  Measurement m;
  m.raw_value = q - rec.dark_probability;
  m.std_error = std::sqrt(q * (1.0 - q) / n);
  if (m.raw_value < 0.0) {
    m.value = 0.0;
    m.flags.emplace_back(flags::below_dark_floor);
  } else {
    m.value = m.raw_value;
  }
  return m;
}

namespace {

double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

// Peak height above the pedestal from a parabola through log(counts - pedestal)
// over the bins within the top fifth of the peak. Exact for Gaussian peaks.
struct PeakTop {
  double height = 0.0;
  double position = 0.0;  // fractional bin index
  std::size_t bins_used = 1;
};

PeakTop peak_top(const std::vector<double>& b, std::size_t m, double ped) {
  PeakTop top{b[m] - ped, static_cast<double>(m), 1};
  const double level = ped + 0.8 * (b[m] - ped);
  std::size_t lo = m;
  std::size_t hi = m;
  while (lo > 0 && b[lo - 1] >= level) --lo;
  while (hi + 1 < b.size() && b[hi + 1] >= level) ++hi;
  if (hi - lo < 2) {
    if (lo > 0) --lo;
    if (hi + 1 < b.size()) ++hi;
  }
  if (hi - lo < 2) return top;
  const auto n = static_cast<Eigen::Index>(hi - lo + 1);
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd y(n);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = b[lo + static_cast<std::size_t>(i)] - ped;
    if (v <= 0.0) return top;
    const double x = static_cast<double>(lo + static_cast<std::size_t>(i)) - static_cast<double>(m);
    a(i, 0) = 1.0;
    a(i, 1) = x;
    a(i, 2) = x * x;
    y(i) = std::log(v);
    w(i) = std::sqrt(v);  // var(log v) ~ 1 / v
  }
  const Eigen::Vector3d c = (w.asDiagonal() * a).colPivHouseholderQr().solve(w.asDiagonal() * y);
  if (!(c(2) < 0.0)) return top;
  const double x0 = -c(1) / (2.0 * c(2));
  if (std::abs(x0) > static_cast<double>(hi - lo)) return top;
  top.height = std::exp(c(0) - c(1) * c(1) / (4.0 * c(2)));
  top.position = static_cast<double>(m) + x0;
  top.bins_used = static_cast<std::size_t>(n);
  return top;
}

struct Crossing {
  double x = 0.0;      // fractional bin index
  double slope = 0.0;  // counts per bin, absolute
};

// Walk outward from the maximum until the histogram drops to `level`.
std::optional<Crossing> crossing(const std::vector<double>& b, std::size_t m, double level, int dir) {
  auto i = static_cast<std::ptrdiff_t>(m);
  const auto n = static_cast<std::ptrdiff_t>(b.size());
  while (true) {
    const auto j = i + dir;
    if (j < 0 || j >= n) return std::nullopt;
    if (b[static_cast<std::size_t>(j)] <= level) {
      const double hi_v = b[static_cast<std::size_t>(i)];
      const double lo_v = b[static_cast<std::size_t>(j)];
      const double frac = hi_v == lo_v ? 0.0 : (hi_v - level) / (hi_v - lo_v);
      return Crossing{static_cast<double>(i) + dir * frac, std::abs(hi_v - lo_v)};
    }
    i = j;
  }
}

}  // namespace

JitterResult jitter_fwhm(const TimingHistogram& hist) {
  validate(hist);
  const auto& b = hist.bins;
  const std::size_t m = static_cast<std::size_t>(std::max_element(b.begin(), b.end()) - b.begin());

  double ped = b.size() >= 3 ? median(b) : 0.0;
  double ped_sd = 0.0;
  std::size_t n_off = 0;
  PeakTop top;
  Crossing left, right;
  for (int iter = 0; iter < 5; ++iter) {
    top = peak_top(b, m, ped);
    if (!(top.height > 0.0)) throw NoPeak("jitter_fwhm: no peak above the pedestal");
    const double half = ped + top.height / 2.0;
    auto l = crossing(b, m, half, -1);
    auto r = crossing(b, m, half, +1);
    if (!l || !r) throw NoPeak("jitter_fwhm: peak does not fall to half maximum inside the histogram");
    left = *l;
    right = *r;
    const double width = right.x - left.x;

    std::vector<double> off;
    for (std::size_t i = 0; i < b.size(); ++i)
      if (std::abs(static_cast<double>(i) - top.position) > 3.0 * width) off.push_back(b[i]);
    double new_ped = 0.0;
    ped_sd = 0.0;
    n_off = off.size();
    if (off.size() >= 3) {
      new_ped = median(off);
      const double mean = std::accumulate(off.begin(), off.end(), 0.0) / static_cast<double>(off.size());
      double ss = 0.0;
      for (double v : off) ss += (v - mean) * (v - mean);
      ped_sd = std::sqrt(ss / static_cast<double>(off.size() - 1));
    }
    if (new_ped == ped && iter > 0) break;
    ped = new_ped;
  }
  if (!(top.height > 5.0 * ped_sd))
    throw NoPeak("jitter_fwhm: peak less than 5 pedestal standard deviations above the pedestal");

  JitterResult out;
  out.pedestal = ped;
  out.peak_height = top.height;
  out.peak_position = (top.position + 0.5) * hist.bin_width;
  const double width_bins = right.x - left.x;
  out.measured_fwhm = width_bins * hist.bin_width;

  // Counting noise at each half-maximum crossing, on the height and on the
  // pedestal.
  const double half_counts = ped + top.height / 2.0;
  const double sy = std::sqrt(std::max(half_counts, 1.0));
  const double sl = std::max(left.slope, 1e-300);
  const double sr = std::max(right.slope, 1e-300);
  const double s_height = std::sqrt(std::max(top.height + ped, 1.0) / static_cast<double>(top.bins_used));
  const double s_ped = n_off > 0 ? ped_sd / std::sqrt(static_cast<double>(n_off)) : 0.0;
  const double level_shift = std::hypot(s_height / 2.0, s_ped / 2.0) * (1.0 / sl + 1.0 / sr);
  const double var_bins = (sy / sl) * (sy / sl) + (sy / sr) * (sy / sr) + level_shift * level_shift;
  const double s_meas = std::sqrt(var_bins) * hist.bin_width;

  const double laser = hist.laser_fwhm;
  if (out.measured_fwhm < laser)
    throw InvalidData("jitter_fwhm: measured FWHM below the laser pulse FWHM");
  Measurement& j = out.jitter;
  j.value = std::sqrt(out.measured_fwhm * out.measured_fwhm - laser * laser);
  j.raw_value = j.value;
  j.std_error = j.value > 0.0 ? s_meas * out.measured_fwhm / j.value : s_meas;
  return out;
}

double counts_needed(double relative_error) {
  if (!(relative_error > 0.0)) throw InvalidArgument("counts_needed: relative error must be > 0");
  return 1.0 / (relative_error * relative_error);
}

double integration_time_needed(double relative_error, double probability, double f_rep) {
  if (!(probability > 0.0) || !(f_rep > 0.0))
    throw InvalidArgument("integration_time_needed: probability and f_rep must be > 0");
  return counts_needed(relative_error) / (probability * f_rep);
}

namespace {

bool parse_shutter(const std::string& s) {
  std::string v;
  for (char c : s) v += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (v == "open" || v == "1" || v == "true") return true;
  if (v == "closed" || v == "0" || v == "false") return false;
  throw InvalidData("measurements: shutter must be open or closed, got '" + s + "'");
}

std::uint64_t parse_count(const csv::Table& t, std::size_t row, std::size_t col) {
  const double v = t.number(row, col);
  if (!(v >= 0.0) || v != std::floor(v)) throw InvalidData("csv: counts must be non-negative integers");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

std::vector<MeasurementRecord> load_measurements(const std::filesystem::path& path) {
  const auto t = csv::Table::load(path);
  const auto c_shutter = t.column("shutter");
  const auto c_counts = t.column("counts");
  const auto c_time = t.column("integration_time_s");
  const auto c_frep = t.column("f_rep_hz");
  const auto c_mu = t.column("mu_bar");
  std::vector<MeasurementRecord> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    MeasurementRecord rec;
    rec.shutter_open = parse_shutter(t.cell(r, c_shutter));
    rec.counts = parse_count(t, r, c_counts);
    rec.integration_time = t.number(r, c_time);
    rec.f_rep = t.number(r, c_frep);
    if (!t.cell(r, c_mu).empty()) rec.mean_photons_per_pulse = t.number(r, c_mu);
    validate(rec);
    out.push_back(rec);
  }
  return out;
}

std::vector<DoubleGateRecord> load_double_gate(const std::filesystem::path& path) {
  const auto t = csv::Table::load(path);
  const auto c_dt = t.column("dt_us");
  const auto c_first = t.column("n_first");
  const auto c_coinc = t.column("n_coinc");
  const auto c_dark = t.column("dark_prob");
  std::vector<DoubleGateRecord> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    DoubleGateRecord rec;
    rec.dt = t.number_scaled(r, c_dt, 6);
    rec.n_first_gate_counts = parse_count(t, r, c_first);
    rec.n_coincidences = parse_count(t, r, c_coinc);
    rec.dark_probability = t.number(r, c_dark);
    validate(rec);
    out.push_back(rec);
  }
  return out;
}

TimingHistogram load_histogram(const std::filesystem::path& path, double laser_fwhm) {
  const auto t = csv::Table::load(path);
  const auto c_start = t.column("bin_start_ps");
  const auto c_counts = t.column("counts");
  if (t.rows() < 2) throw InvalidData("histogram: need at least two bins");
  TimingHistogram h;
  h.laser_fwhm = laser_fwhm;
  h.first_bin_start = t.number(0, c_start) * 1e-12;
  h.bin_width = (t.number(1, c_start) - t.number(0, c_start)) * 1e-12;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    if (r > 0) {
      const double w = (t.number(r, c_start) - t.number(r - 1, c_start)) * 1e-12;
      if (std::abs(w - h.bin_width) > 1e-6 * h.bin_width) throw InvalidData("histogram: bins must be uniform");
    }
    const double c = t.number(r, c_counts);
    if (!(c >= 0.0)) throw InvalidData("histogram: negative count");
    h.bins.push_back(c);
  }
  validate(h);
  return h;
}

const char* const kReportHeader = "quantity,dt_us,value,std_error,raw_value,upper_bound,flags";

void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << kReportHeader << '\n';
  for (const auto& r : rows) {
    std::string fl;
    for (const auto& f : r.m.flags) fl += (fl.empty() ? "" : ";") + f;
    csv::write_row(os, {r.quantity, csv::format_scaled(r.x, 6), csv::format_number(r.m.value),
                        csv::format_number(r.m.std_error), csv::format_number(r.m.raw_value),
                        r.m.upper_bound ? csv::format_number(*r.m.upper_bound) : "", fl});
  }
}

}  // namespace apd
