#pragma once

// Straightforward re-derivations of the link and detector formulas used as
// reference values. They deliberately avoid the library's closed forms.

#include <cmath>
#include <cstdint>
#include <vector>

#include "apd/detector_model.hpp"

namespace oracle {

inline double p_ap(const apd::AfterpulseModel& m, double dt) {
  if (dt >= m.horizon) return 0.0;
  double s = 0.0;
  for (const auto& t : m.terms) s += t.amplitude * std::exp(-dt / t.lifetime);
  return s;
}

// Term-by-term sum over gates n_skip+1, n_skip+2, ... inside the horizon.
inline double cumulative(const apd::AfterpulseModel& m, double f_rep, std::int64_t n_skip) {
  double s = 0.0;
  for (std::int64_t n = n_skip + 1; static_cast<double>(n) / f_rep < m.horizon; ++n)
    s += p_ap(m, static_cast<double>(n) / f_rep);
  return s;
}

struct Link {
  double mu = 0.1;
  double alpha_db_per_km = 0.25;
  double t_r = 0.5;
  double eta = 0.1;
  double p_dc = 2.8e-5;
  double f_rep = 1e6;
};

inline double photon_probability(const Link& l, double d_km) {
  return l.mu * std::pow(10.0, -l.alpha_db_per_km * d_km / 10.0) * l.t_r * l.eta;
}

// Dark term plus (optionally) the afterpulse sum, with no hold-off.
inline double qber(const Link& l, double d_km, double afterpulse_sum = 0.0) {
  return l.p_dc / photon_probability(l, d_km) + afterpulse_sum;
}

struct Bracket {
  double below = 0.0;  // last grid distance with qber < target
  double at = 0.0;     // first grid distance with qber >= target
};

// Walks the distance axis in fixed steps until the QBER reaches the target.
inline Bracket scan_distance(const Link& l, double target, double step_km = 0.01, double afterpulse_sum = 0.0) {
  Bracket b;
  for (std::int64_t i = 0;; ++i) {
    const double d = static_cast<double>(i) * step_km;
    if (qber(l, d, afterpulse_sum) >= target) {
      b.at = d;
      return b;
    }
    b.below = d;
  }
}

// Smallest n with cumulative(m, f, n) < budget, by exhaustive search.
inline std::int64_t min_skip(const apd::AfterpulseModel& m, double f_rep, double budget) {
  std::int64_t n = 0;
  while (cumulative(m, f_rep, n) >= budget) ++n;
  return n;
}

// Standard normal CDF.
inline double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace oracle
