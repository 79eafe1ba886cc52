#include "apd/gated_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <exception>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include <omp.h>

#include "apd/csv.hpp"
#include "apd/errors.hpp"
#include "apd/profile_io.hpp"

namespace apd {

const char* to_string(Cause c) noexcept {
  switch (c) {
    case Cause::photon:
      return "photon";
    case Cause::dark:
      return "dark";
    case Cause::afterpulse:
      return "afterpulse";
  }
  return "?";
}

void validate(const SimConfig& cfg) {
  const auto& l = cfg.link;
  if (!(l.mu >= 0.0 && l.mu <= 1.0)) throw InvalidArgument("sim: mu must lie in [0, 1]");
  if (!(l.attenuation_db_per_km >= 0.0)) throw InvalidArgument("sim: attenuation must be >= 0");
  if (!(l.receiver_transmission > 0.0 && l.receiver_transmission <= 1.0))
    throw InvalidArgument("sim: receiver transmission must lie in (0, 1]");
  if (!(l.f_rep > 0.0)) throw InvalidArgument("sim: repetition frequency must be > 0");
  if (!(l.distance_km >= 0.0)) throw InvalidArgument("sim: distance must be >= 0");

  const auto& p = cfg.profile;
  if (!(p.efficiency >= 0.0 && p.efficiency <= 1.0)) throw InvalidArgument("sim: efficiency outside [0, 1]");
  if (!(p.gate_width > 0.0)) throw InvalidArgument("sim: gate width must be > 0");
  // A dark-free detector (p10 = 0) is allowed here for controlled experiments.
  if (!(p.dark.p10 >= 0.0 && p.dark.p10 < 1.0)) throw InvalidArgument("sim: dark p10 must lie in [0, 1)");
  validate(p.afterpulse);
  validate(p.jitter);

  if (cfg.n_gates < 1) throw InvalidArgument("sim: n_gates must be >= 1");
  if (cfg.n_skip_holdoff < 0) throw InvalidArgument("sim: hold-off must be >= 0");
  if (cfg.streams < 1) throw InvalidArgument("sim: streams must be >= 1");
  if (cfg.streams > cfg.n_gates) throw InvalidArgument("sim: more streams than gates");
  if (!(cfg.memory_horizon_scale >= 1.0)) throw InvalidArgument("sim: memory horizon scale must be >= 1");
  if (cfg.window && (!(*cfg.window > 0.0) || *cfg.window > p.gate_width))
    throw InvalidArgument("sim: window must satisfy 0 < window <= gate width");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x5851f42d4c957f2dull));
}

std::string config_key(const SimConfig& cfg) {
  std::ostringstream os;
  using csv::format_number;
  os << "mu=" << format_number(cfg.link.mu) << ";att=" << format_number(cfg.link.attenuation_db_per_km)
     << ";tr=" << format_number(cfg.link.receiver_transmission) << ";frep=" << format_number(cfg.link.f_rep)
     << ";d=" << format_number(cfg.link.distance_km) << ";profile=" << profile_fingerprint(cfg.profile)
     << ";holdoff=" << cfg.n_skip_holdoff << ";window=" << (cfg.window ? format_number(*cfg.window) : "none")
     << ";memscale=" << format_number(cfg.memory_horizon_scale);
  return os.str();
}

// Everything a stream needs, computed once per run.
struct Kernel {
  double p_photon = 0.0;
  double p_dark = 0.0;
  double dark_threshold = 0.0;       // u below this: photon or dark
  double afterpulse_weight = 0.0;    // (1 - p_photon)(1 - p_dark)
  std::vector<double> ap_table;      // ap_table[k] = p_ap(k / f_rep), k >= 1
  std::int64_t max_lag = 0;
  std::int64_t holdoff = 0;
  double gate_width = 0.0;
  double centre = 0.0;
  double sigma = 0.0;
  std::optional<double> window;
  bool record_events = false;

  explicit Kernel(const SimConfig& cfg) {
    const auto& l = cfg.link;
    const double t_link = fiber_transmission(l.attenuation_db_per_km, l.distance_km);
    p_photon = l.mu * t_link * l.receiver_transmission * cfg.profile.efficiency;
    p_dark = cfg.profile.dark.p10 == 0.0
                 ? 0.0
                 : std::min(1.0, cfg.profile.dark.p10 * std::exp(cfg.profile.dark.slope *
                                                                 (cfg.profile.efficiency - kReferenceEfficiency)));
    dark_threshold = p_photon + (1.0 - p_photon) * p_dark;
    afterpulse_weight = (1.0 - p_photon) * (1.0 - p_dark);
    max_lag = gates_within_horizon(cfg.profile.afterpulse.horizon * cfg.memory_horizon_scale, l.f_rep);
    ap_table.assign(static_cast<std::size_t>(max_lag + 1), 0.0);
    for (std::int64_t k = 1; k <= max_lag; ++k)
      ap_table[static_cast<std::size_t>(k)] =
          afterpulse_probability(cfg.profile.afterpulse, static_cast<double>(k) / l.f_rep);
    holdoff = cfg.n_skip_holdoff;
    gate_width = cfg.profile.gate_width;
    centre = gate_width / 2.0;
    const double eff = cfg.profile.efficiency;
    const double fwhm = (eff > 0.0 && eff < 1.0) ? jitter_at(cfg.profile.jitter, eff)
                                                 : (eff <= 0.0 ? cfg.profile.jitter.anchors.front().fwhm
                                                               : cfg.profile.jitter.anchors.back().fwhm);
    sigma = fwhm / 2.355;
    window = cfg.window;
    record_events = cfg.record_events;
  }
};

// One contiguous partition: `warmup` discarded gates, then `count` tallied gates
// whose global indices start at `first_gate`.
SimOutcome simulate_stream(const Kernel& k, std::uint64_t seed, std::uint64_t first_gate, std::uint64_t count,
                           std::uint64_t warmup) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SimOutcome out;
  out.n_gates = count;
  std::deque<std::int64_t> memory;
  std::int64_t holdoff_left = 0;
  const auto total = static_cast<std::int64_t>(warmup + count);
  const auto tallied_from = static_cast<std::int64_t>(warmup);

  for (std::int64_t g = 0; g < total; ++g) {
    const bool tallied = g >= tallied_from;
    if (holdoff_left > 0) {
      --holdoff_left;
      if (tallied) ++out.gates_skipped;
      continue;
    }
    if (tallied) ++out.gates_applied;

    while (!memory.empty() && g - memory.front() > k.max_lag) memory.pop_front();

    const double u = uniform(rng);
    Cause cause;
    if (u < k.p_photon) {
      cause = Cause::photon;
    } else if (u < k.dark_threshold) {
      cause = Cause::dark;
    } else if (!memory.empty()) {
      double survive = 1.0;
      for (auto t : memory) survive *= 1.0 - k.ap_table[static_cast<std::size_t>(g - t)];
      if (u < k.dark_threshold + k.afterpulse_weight * (1.0 - survive))
        cause = Cause::afterpulse;
      else
        continue;
    } else {
      continue;
    }

    double ts;
    if (cause == Cause::photon)
      ts = std::clamp(k.centre + k.sigma * normal(rng), -3.0 * k.sigma, k.gate_width + 3.0 * k.sigma);
    else
      ts = uniform(rng) * k.gate_width;
    const bool in_window = !k.window || std::abs(ts - k.centre) <= *k.window / 2.0;

    if (tallied) {
      ++out.triggers[cause];
      if (in_window) ++out.accepted[cause];
      if (k.record_events)
        out.events.push_back({first_gate + static_cast<std::uint64_t>(g - tallied_from), cause, ts, in_window});
    }
    memory.push_back(g);
    holdoff_left = k.holdoff;
  }
  return out;
}

struct Partition {
  std::uint64_t first = 0;
  std::uint64_t count = 0;
};

Partition partition(std::uint64_t n_gates, std::uint32_t streams, std::uint32_t i) {
  const std::uint64_t base = n_gates / streams;
  const std::uint64_t extra = n_gates % streams;
  Partition p;
  p.first = i * base + std::min<std::uint64_t>(i, extra);
  p.count = base + (i < extra ? 1 : 0);
  return p;
}

std::uint64_t warmup_gates(const SimConfig& cfg) {
  if (cfg.streams <= 1) return 0;
  return static_cast<std::uint64_t>(std::ceil(cfg.profile.afterpulse.horizon * cfg.link.f_rep));
}

SimOutcome finish(std::vector<SimOutcome> parts, const SimConfig& cfg) {
  const auto key = config_key(cfg);
  for (auto& p : parts) {
    p.config_key = key;
    p.f_rep = cfg.link.f_rep;
  }
  return merge(parts);
}

}  // namespace

SimOutcome run_simulation_serial(const SimConfig& cfg) {
  validate(cfg);
  const Kernel kernel(cfg);
  const auto warmup = warmup_gates(cfg);
  std::vector<SimOutcome> parts(cfg.streams);
  for (std::uint32_t i = 0; i < cfg.streams; ++i) {
    const auto part = partition(cfg.n_gates, cfg.streams, i);
    parts[i] = simulate_stream(kernel, substream_seed(cfg.seed, i), part.first, part.count, warmup);
  }
  return finish(std::move(parts), cfg);
}

SimOutcome run_simulation(const SimConfig& cfg, int max_threads) {
  validate(cfg);
  const Kernel kernel(cfg);
  const auto warmup = warmup_gates(cfg);
  std::vector<SimOutcome> parts(cfg.streams);
  const int threads = max_threads > 0 ? max_threads : omp_get_max_threads();
  const auto n = static_cast<std::int64_t>(cfg.streams);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const auto idx = static_cast<std::uint32_t>(i);
      const auto part = partition(cfg.n_gates, cfg.streams, idx);
      parts[idx] = simulate_stream(kernel, substream_seed(cfg.seed, idx), part.first, part.count, warmup);
    } catch (...) {
#pragma omp critical(apd_sim_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return finish(std::move(parts), cfg);
}

SimOutcome merge(std::span<const SimOutcome> outcomes) {
  if (outcomes.empty()) throw InvalidArgument("merge: no outcomes");
  SimOutcome out;
  out.config_key = outcomes.front().config_key;
  out.f_rep = outcomes.front().f_rep;
  for (const auto& o : outcomes) {
    if (o.config_key != out.config_key || o.f_rep != out.f_rep)
      throw InvalidArgument("merge: outcomes come from different configurations");
    out.n_gates += o.n_gates;
    out.gates_applied += o.gates_applied;
    out.gates_skipped += o.gates_skipped;
    for (std::size_t c = 0; c < 3; ++c) {
      out.triggers.by_cause[c] += o.triggers.by_cause[c];
      out.accepted.by_cause[c] += o.accepted.by_cause[c];
    }
    out.events.insert(out.events.end(), o.events.begin(), o.events.end());
  }
  return out;
}

namespace {

Estimate ratio(double num, double den) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  if (den <= 0.0) return {nan, nan};
  const double v = num / den;
  // Poisson numerator and denominator; with no numerator counts, quote one count.
  const double se = num > 0.0 ? v * std::sqrt(1.0 / num + 1.0 / den) : 1.0 / den;
  return {v, se};
}

}  // namespace

Estimate SimOutcome::probability(Cause c) const {
  if (gates_applied == 0) return {0.0, 0.0};
  const auto n = static_cast<double>(accepted[c]);
  const auto g = static_cast<double>(gates_applied);
  return {n / g, std::sqrt(n) / g};
}

double SimOutcome::empirical_raw_rate_hz() const {
  if (n_gates == 0) return 0.0;
  return static_cast<double>(accepted.total()) * f_rep / static_cast<double>(n_gates);
}

Estimate SimOutcome::photon_rate_hz() const {
  auto p = probability(Cause::photon);
  return {p.value * f_rep, p.std_error * f_rep};
}

Estimate SimOutcome::empirical_qber() const {
  return ratio(static_cast<double>(accepted[Cause::dark] + accepted[Cause::afterpulse]),
               static_cast<double>(accepted[Cause::photon]));
}

Estimate SimOutcome::empirical_dark_term() const {
  return ratio(static_cast<double>(accepted[Cause::dark]), static_cast<double>(accepted[Cause::photon]));
}

Estimate SimOutcome::empirical_afterpulse_term() const {
  return ratio(static_cast<double>(accepted[Cause::afterpulse]), static_cast<double>(accepted[Cause::photon]));
}

namespace {

void check_grid(const SimConfig& cfg, std::span<const double> dt_grid) {
  validate(cfg);
  for (double dt : dt_grid) {
    const double n = dt * cfg.link.f_rep;
    if (!(dt > 0.0) || std::round(n) < 1.0 || std::abs(n - std::round(n)) > 1e-6 * std::max(1.0, n))
      throw InvalidArgument("afterpulse curve: dt must be a positive multiple of 1/f_rep");
  }
}

AfterpulseCurvePoint two_gate_point(const SimConfig& cfg, double dt, std::uint64_t seed) {
  const Kernel k(cfg);
  std::mt19937_64 rng(seed);
  AfterpulseCurvePoint pt;
  pt.dt = dt;
  pt.dark_probability = k.p_dark;
  // The first gate fires on a photon or a dark count; the dark second gate then
  // fires on a dark count or an afterpulse of that avalanche.
  std::binomial_distribution<std::uint64_t> first(cfg.n_gates, k.dark_threshold);
  pt.n_first = first(rng);
  const double p_ap = afterpulse_probability(cfg.profile.afterpulse, dt);
  const double p_second = 1.0 - (1.0 - k.p_dark) * (1.0 - p_ap);
  if (pt.n_first > 0) {
    std::binomial_distribution<std::uint64_t> second(pt.n_first, p_second);
    pt.n_coinc = second(rng);
    const double q = static_cast<double>(pt.n_coinc) / static_cast<double>(pt.n_first);
    pt.probability = q - k.p_dark;
    pt.std_error = std::sqrt(std::max(q * (1.0 - q), 1.0 / static_cast<double>(pt.n_first)) /
                             static_cast<double>(pt.n_first));
  } else {
    pt.std_error = std::numeric_limits<double>::infinity();
  }
  return pt;
}

}  // namespace

std::vector<AfterpulseCurvePoint> empirical_afterpulse_curve_serial(const SimConfig& cfg,
                                                                   std::span<const double> dt_grid) {
  check_grid(cfg, dt_grid);
  std::vector<AfterpulseCurvePoint> out;
  out.reserve(dt_grid.size());
  for (std::size_t i = 0; i < dt_grid.size(); ++i) out.push_back(two_gate_point(cfg, dt_grid[i], substream_seed(cfg.seed, i)));
  return out;
}

std::vector<AfterpulseCurvePoint> empirical_afterpulse_curve(const SimConfig& cfg, std::span<const double> dt_grid,
                                                            int max_threads) {
  check_grid(cfg, dt_grid);
  std::vector<AfterpulseCurvePoint> out(dt_grid.size());
  const int threads = max_threads > 0 ? max_threads : omp_get_max_threads();
  const auto n = static_cast<std::int64_t>(dt_grid.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const auto idx = static_cast<std::size_t>(i);
      out[idx] = two_gate_point(cfg, dt_grid[idx], substream_seed(cfg.seed, idx));
    } catch (...) {
#pragma omp critical(apd_curve_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

const char* const kEventLogHeader = "gate_index,cause,timestamp_in_gate_ps,in_window";

void write_event_log_csv(std::ostream& os, std::span<const GateOutcome> events) {
  os << kEventLogHeader << '\n';
  for (const auto& e : events)
    csv::write_row(os, {std::to_string(e.gate_index), to_string(e.cause), csv::format_scaled(e.timestamp_in_gate, 12),
                        e.in_window ? "1" : "0"});
}

std::string format_summary(const SimOutcome& o, int sig_figs) {
  auto fmt = [&](double v) {
    if (sig_figs >= 17) return csv::format_number(v);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", sig_figs, v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "gates = " << o.n_gates << '\n';
  os << "gates_applied = " << o.gates_applied << '\n';
  os << "gates_skipped = " << o.gates_skipped << '\n';
  for (Cause c : {Cause::photon, Cause::dark, Cause::afterpulse}) os << "counts_" << to_string(c) << " = " << o.triggers[c] << '\n';
  for (Cause c : {Cause::photon, Cause::dark, Cause::afterpulse}) os << "accepted_" << to_string(c) << " = " << o.accepted[c] << '\n';
  const double norm = o.n_gates ? static_cast<double>(o.accepted.total()) / static_cast<double>(o.n_gates) : 0.0;
  const auto photon = o.photon_rate_hz();
  const auto q = o.empirical_qber();
  const auto dark = o.empirical_dark_term();
  const auto ap = o.empirical_afterpulse_term();
  os << "empirical_raw_rate_hz = " << fmt(o.empirical_raw_rate_hz()) << '\n';
  os << "empirical_normalized_raw = " << fmt(norm) << '\n';
  os << "empirical_photon_rate_hz = " << fmt(photon.value) << '\n';
  os << "empirical_photon_rate_hz_std_error = " << fmt(photon.std_error) << '\n';
  os << "empirical_sifted_rate_hz = " << fmt(photon.value / 2.0) << '\n';
  os << "empirical_qber = " << fmt(q.value) << '\n';
  os << "empirical_qber_std_error = " << fmt(q.std_error) << '\n';
  os << "empirical_dark_term = " << fmt(dark.value) << '\n';
  os << "empirical_dark_term_std_error = " << fmt(dark.std_error) << '\n';
  os << "empirical_afterpulse_term = " << fmt(ap.value) << '\n';
  os << "empirical_afterpulse_term_std_error = " << fmt(ap.std_error) << '\n';
  return os.str();
}

}  // namespace apd
