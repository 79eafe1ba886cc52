#include "apd/detector_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "apd/errors.hpp"

namespace apd {

double AfterpulseModel::raw(double dt) const noexcept {
  double sum = 0.0;
  for (const auto& t : terms) sum += t.amplitude * std::exp(-dt / t.lifetime);
  return sum;
}

double AfterpulseModel::amplitude_sum() const noexcept {
  double sum = 0.0;
  for (const auto& t : terms) sum += t.amplitude;
  return sum;
}

double JitterModel::fwhm_at_reference() const { return jitter_at(*this, kReferenceEfficiency); }

double DetectorProfile::dark_probability() const { return dark_count_at(dark, efficiency); }

double DetectorProfile::jitter_fwhm() const { return jitter_at(jitter, efficiency); }

void validate(const AfterpulseModel& model) {
  for (const auto& t : model.terms) {
    if (!(t.amplitude >= 0.0)) throw InvalidArgument("afterpulse amplitude must be >= 0");
    if (!(t.lifetime > 0.0)) throw InvalidArgument("afterpulse lifetime must be > 0");
  }
  if (model.amplitude_sum() > 1.0) throw InvalidArgument("afterpulse amplitudes sum above 1");
  if (!(model.horizon > 0.0)) throw InvalidArgument("afterpulse horizon must be > 0");
}

void validate(const JitterModel& model) {
  if (model.anchors.empty()) throw ConfigError("jitter model has no anchors");
  for (std::size_t i = 0; i < model.anchors.size(); ++i) {
    const auto& a = model.anchors[i];
    if (!(a.fwhm >= 0.0 && a.fwhm <= 2e-9)) throw InvalidArgument("jitter FWHM outside [0, 2 ns]");
    if (i > 0) {
      const auto& prev = model.anchors[i - 1];
      if (!(a.efficiency > prev.efficiency))
        throw InvalidArgument("jitter anchors must have strictly increasing efficiency");
      if (a.fwhm > prev.fwhm) throw InvalidArgument("jitter FWHM must not increase with efficiency");
    }
  }
}

void validate(const DarkCountModel& model) {
  if (!(model.p10 > 0.0 && model.p10 < 1.0)) throw InvalidArgument("dark p10 must lie in (0, 1)");
  if (!(model.slope > 0.0)) throw InvalidArgument("dark slope must be > 0");
}

void validate(const DetectorProfile& profile) {
  if (profile.name.empty()) throw InvalidArgument("profile needs a name");
  if (!(profile.efficiency >= 0.0 && profile.efficiency <= 1.0))
    throw InvalidArgument("profile efficiency outside [0, 1]");
  if (!(profile.gate_width > 0.0)) throw InvalidArgument("gate width must be > 0");
  validate(profile.dark);
  validate(profile.afterpulse);
  validate(profile.jitter);
  const double pdc = profile.dark.p10 * std::exp(profile.dark.slope * (profile.efficiency - kReferenceEfficiency));
  if (!(pdc > 0.0 && pdc < 1.0)) throw InvalidArgument("dark probability at profile efficiency outside (0, 1)");
}

double afterpulse_probability(const AfterpulseModel& model, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("afterpulse_probability: dt must be > 0");
  if (dt >= model.horizon) return 0.0;
  return std::clamp(model.raw(dt), 0.0, 1.0);
}

std::int64_t gates_within_horizon(double horizon, double f_rep) {
  if (!(f_rep > 0.0)) throw InvalidArgument("repetition frequency must be > 0");
  auto n = static_cast<std::int64_t>(std::floor(horizon * f_rep));
  while (n > 0 && static_cast<double>(n) / f_rep >= horizon) --n;
  while (static_cast<double>(n + 1) / f_rep < horizon) ++n;
  return n;
}

double cumulative_afterpulse(const AfterpulseModel& model, double f_rep, std::int64_t n_skip) {
  if (!(f_rep > 0.0)) throw InvalidArgument("cumulative_afterpulse: f_rep must be > 0");
  if (n_skip < 0) throw InvalidArgument("cumulative_afterpulse: n_skip must be >= 0");
  const std::int64_t last = gates_within_horizon(model.horizon, f_rep);
  const std::int64_t first = n_skip + 1;
  if (first > last) return 0.0;
  double sum = 0.0;
  for (const auto& t : model.terms) {
    if (t.amplitude == 0.0) continue;
    const double step = 1.0 / (f_rep * t.lifetime);
    // a * (r^first - r^(last+1)) / (1 - r), r = exp(-step)
    const double head = std::exp(-step * static_cast<double>(first));
    const double tail = std::exp(-step * static_cast<double>(last + 1));
    sum += t.amplitude * (head - tail) / -std::expm1(-step);
  }
  return std::max(sum, 0.0);
}

double cumulative_afterpulse_direct(const AfterpulseModel& model, double f_rep, std::int64_t n_skip) {
  if (!(f_rep > 0.0)) throw InvalidArgument("cumulative_afterpulse: f_rep must be > 0");
  if (n_skip < 0) throw InvalidArgument("cumulative_afterpulse: n_skip must be >= 0");
  double sum = 0.0;
  for (std::int64_t n = n_skip + 1;; ++n) {
    const double dt = static_cast<double>(n) / f_rep;
    if (dt >= model.horizon) break;
    sum += afterpulse_probability(model, dt);
  }
  return sum;
}

std::int64_t min_skip_gates(const AfterpulseModel& model, double f_rep, double budget) {
  if (!(f_rep > 0.0)) throw InvalidArgument("min_skip_gates: f_rep must be > 0");
  if (!(budget > 0.0 && budget < 1.0)) throw InvalidArgument("min_skip_gates: budget must lie in (0, 1)");
  const std::int64_t last = gates_within_horizon(model.horizon, f_rep);
  for (std::int64_t n = 0; n < last; ++n)
    if (cumulative_afterpulse(model, f_rep, n) < budget) return n;
  return last;
}

double dark_count_at(const DarkCountModel& model, double efficiency) {
  if (!(efficiency > 0.0 && efficiency < 1.0))
    throw InvalidArgument("dark_count_at: efficiency must lie in (0, 1)");
  return std::min(1.0, model.p10 * std::exp(model.slope * (efficiency - kReferenceEfficiency)));
}

double jitter_at(const JitterModel& model, double efficiency) {
  if (model.anchors.empty()) throw ConfigError("jitter_at: jitter model has no anchors");
  if (!(efficiency > 0.0 && efficiency < 1.0))
    throw InvalidArgument("jitter_at: efficiency must lie in (0, 1)");
  const auto& a = model.anchors;
  if (efficiency <= a.front().efficiency) return a.front().fwhm;
  if (efficiency >= a.back().efficiency) return a.back().fwhm;
  auto hi = std::upper_bound(a.begin(), a.end(), efficiency,
                             [](double e, const JitterAnchor& x) { return e < x.efficiency; });
  auto lo = hi - 1;
  if (efficiency == lo->efficiency) return lo->fwhm;
  const double w = (efficiency - lo->efficiency) / (hi->efficiency - lo->efficiency);
  return lo->fwhm + w * (hi->fwhm - lo->fwhm);
}

// Output of fit_to_constraints(reference_constraint_targets(), 3) with default
// options; `apdtool calibrate constraints` regenerates them.
AfterpulseModel epitaxx_afterpulse_model() {
  AfterpulseModel m;
  m.terms = {
      {0.012172030372885811, 7.0336619290002929e-08},
      {0.007204815382596836, 1.4567495168037371e-06},
      {0.00033776586168726697, 2.0484950905477226e-05},
  };
  m.horizon = kDefaultAfterpulseHorizon;
  return m;
}

JitterModel epitaxx_jitter_model() {
  return JitterModel{{{0.05, 500e-12}, {0.10, 450e-12}, {0.25, 300e-12}}};
}

namespace {

DetectorProfile make_profile(std::string name, std::optional<double> temperature, double p10, double gate_width,
                             AfterpulseModel afterpulse, std::string note) {
  DetectorProfile p;
  p.name = std::move(name);
  p.temperature_c = temperature;
  p.efficiency = kReferenceEfficiency;
  p.dark = DarkCountModel{p10, kDefaultDarkSlope};
  p.gate_width = gate_width;
  p.afterpulse = std::move(afterpulse);
  p.jitter = epitaxx_jitter_model();
  p.note = std::move(note);
  return p;
}

AfterpulseModel scaled(AfterpulseModel m, double amplitude_scale, double lifetime_scale) {
  for (auto& t : m.terms) {
    t.amplitude *= amplitude_scale;
    t.lifetime *= lifetime_scale;
  }
  return m;
}

}  // namespace

std::vector<DetectorProfile> builtin_profiles() {
  const auto epitaxx = epitaxx_afterpulse_model();
  return {
      make_profile("epitaxx-60", -60.0, 2.8e-5, kDefaultGateWidth, epitaxx,
                   "Epitaxx EPM 239 AA, short gates; afterpulse terms fitted to hold-off targets"),
      make_profile("epitaxx-40", -40.0, 6e-5, kDefaultGateWidth, epitaxx,
                   "Epitaxx EPM 239 AA, short gates; afterpulse shared with -60 C"),
      make_profile("egg-nec-60", -60.0, 3.5e-4, kDefaultGateWidth, scaled(epitaxx, 0.5, 0.5),
                   "EG&G 30733 / NEC NDL 5551; afterpulse approximate (half amplitude, half lifetime)"),
      make_profile("fujitsu-196", -196.0, 1e-4, 2.5e-9, epitaxx,
                   "Fujitsu 30FPD13U81SR at 77 K, 2.5 ns window; afterpulse not measured, placeholder"),
      make_profile("passive-quench", std::nullopt, 2.5e-3, kDefaultGateWidth, epitaxx,
                   "EG&G/NEC under passive quenching, per 2.4 ns; afterpulse not comparable, placeholder"),
      make_profile("improved-hypothetical", -60.0, 2.8e-6, kDefaultGateWidth, epitaxx,
                   "hypothetical detector with ten times lower dark counts than epitaxx-60"),
  };
}

}  // namespace apd
