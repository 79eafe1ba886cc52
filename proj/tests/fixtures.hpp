#pragma once

// Synthetic raw data with known ground truth for the characterization and
// calibration round trips.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "apd/calibration.hpp"
#include "apd/characterize.hpp"
#include "apd/gated_sim.hpp"

namespace fixture {

// Poisson light: a pulse of mean mu_bar photons fires the detector with
// probability 1 - (1 - p_dc) exp(-mu_bar eta). gated_sim only knows single
// photons, so this draws gate counts directly.
struct EfficiencyRun {
  apd::MeasurementRecord light;
  apd::MeasurementRecord dark;
};

inline EfficiencyRun efficiency_run(double eta, double p_dc, double mu_bar, double f_rep, double t_light,
                                    double t_dark, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto gates_light = static_cast<std::uint64_t>(std::llround(f_rep * t_light));
  const auto gates_dark = static_cast<std::uint64_t>(std::llround(f_rep * t_dark));
  const double p_light = 1.0 - (1.0 - p_dc) * std::exp(-mu_bar * eta);
  EfficiencyRun run;
  run.light = {std::binomial_distribution<std::uint64_t>(gates_light, p_light)(rng), t_light, f_rep, true, mu_bar};
  run.dark = {std::binomial_distribution<std::uint64_t>(gates_dark, p_dc)(rng), t_dark, f_rep, false, std::nullopt};
  return run;
}

inline apd::MeasurementRecord dark_run(double p_dc, double f_rep, double t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto gates = static_cast<std::uint64_t>(std::llround(f_rep * t));
  return {std::binomial_distribution<std::uint64_t>(gates, p_dc)(rng), t, f_rep, false, std::nullopt};
}

// Detector with a flat 0.10 efficiency, the given dark probability and afterpulse model.
inline apd::DetectorProfile test_detector(double p_dc, apd::AfterpulseModel ap, double jitter_fwhm = 450e-12,
                                          double gate_width = 2.4e-9) {
  apd::DetectorProfile p;
  p.name = "fixture";
  p.efficiency = 0.10;
  p.dark = apd::DarkCountModel{p_dc, 30.0};
  p.gate_width = gate_width;
  p.afterpulse = std::move(ap);
  p.jitter = apd::JitterModel{{{0.10, jitter_fwhm}}};
  return p;
}

// Two-gate afterpulse scans from the simulator, one record per delay.
inline std::vector<apd::DoubleGateRecord> double_gate_run(const apd::AfterpulseModel& model, double p_dc,
                                                          const std::vector<double>& dts, std::uint64_t first_gates,
                                                          std::uint64_t seed) {
  apd::SimConfig cfg;
  cfg.profile = test_detector(p_dc, model);
  cfg.link.mu = 1.0;
  cfg.link.receiver_transmission = 1.0;
  cfg.link.distance_km = 0.0;
  cfg.link.f_rep = 1e8;  // 10 ns delay resolution
  cfg.n_gates = first_gates;
  cfg.seed = seed;
  std::vector<apd::DoubleGateRecord> out;
  for (const auto& pt : apd::empirical_afterpulse_curve(cfg, dts))
    out.push_back({pt.n_first, pt.n_coinc, pt.dt, pt.dark_probability});
  return out;
}

// TDC histogram of simulated avalanches inside a long gate: photon timestamps
// carry the detector jitter from the simulator plus laser pulse width added
// here; dark counts form the flat pedestal.
inline apd::TimingHistogram jitter_run(double detector_fwhm, double laser_fwhm, double p_dc, std::uint64_t gates,
                                       double bin_width, std::uint64_t seed) {
  const double gate = 20e-9;
  apd::SimConfig cfg;
  cfg.profile = test_detector(p_dc, apd::AfterpulseModel{}, detector_fwhm, gate);
  cfg.link.mu = 1.0;
  cfg.link.receiver_transmission = 1.0;
  cfg.n_gates = gates;
  cfg.seed = seed;
  cfg.record_events = true;
  const auto run = apd::run_simulation_serial(cfg);

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> laser(0.0, laser_fwhm / 2.355);
  apd::TimingHistogram h;
  h.bin_width = bin_width;
  h.first_bin_start = 0.0;
  h.laser_fwhm = laser_fwhm;
  h.bins.assign(static_cast<std::size_t>(std::llround(gate / bin_width)), 0.0);
  for (const auto& e : run.events) {
    double t = e.timestamp_in_gate;
    if (e.cause == apd::Cause::photon) t += laser(rng);
    const auto bin = static_cast<std::int64_t>(std::floor(t / bin_width));
    if (bin >= 0 && bin < static_cast<std::int64_t>(h.bins.size())) h.bins[static_cast<std::size_t>(bin)] += 1.0;
  }
  return h;
}

// p_ap samples on log-spaced delays, optionally with Gaussian relative noise.
inline apd::AfterpulseDataset afterpulse_samples(const apd::AfterpulseModel& model, double dt_min, double dt_max,
                                                 int n, double relative_noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  apd::AfterpulseDataset d;
  for (int i = 0; i < n; ++i) {
    const double dt = dt_min * std::pow(dt_max / dt_min, static_cast<double>(i) / (n - 1));
    const double truth = model.raw(dt);
    const double se = relative_noise * truth;
    const double v = relative_noise > 0.0 ? truth + se * z(rng) : truth;
    d.points.push_back({dt, std::max(v, 0.0), se});
  }
  return d;
}

}  // namespace fixture
