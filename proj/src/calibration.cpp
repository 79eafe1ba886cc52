#include "apd/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include <Eigen/Dense>

#include "apd/csv.hpp"
#include "apd/errors.hpp"
#include "nelder_mead.hpp"

namespace apd {

void validate(const AfterpulseDataset& data) {
  for (std::size_t i = 0; i < data.points.size(); ++i) {
    const auto& p = data.points[i];
    if (!(p.dt > 0.0)) throw InvalidArgument("afterpulse data: dt must be > 0");
    if (i > 0 && !(p.dt > data.points[i - 1].dt)) throw InvalidArgument("afterpulse data: dt must be strictly increasing");
    if (!(p.p_ap >= 0.0 && p.p_ap <= 1.0)) throw InvalidArgument("afterpulse data: p_ap outside [0, 1]");
    if (!(p.std_error >= 0.0)) throw InvalidArgument("afterpulse data: negative standard error");
  }
}

namespace {

// ---- sum-of-exponentials least squares ------------------------------------

struct Problem {
  Eigen::VectorXd t;
  Eigen::VectorXd y;
  Eigen::VectorXd w;  // 1 / sigma
  double scale = 0.0; // sum (w y)^2
  bool weighted = false;
};

Problem make_problem(const AfterpulseDataset& data) {
  Problem pr;
  const auto n = static_cast<Eigen::Index>(data.points.size());
  pr.t.resize(n);
  pr.y.resize(n);
  pr.w.resize(n);
  pr.weighted = std::all_of(data.points.begin(), data.points.end(), [](const auto& p) { return p.std_error > 0.0; });
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = data.points[static_cast<std::size_t>(i)];
    pr.t(i) = p.dt;
    pr.y(i) = p.p_ap;
    pr.w(i) = pr.weighted ? 1.0 / p.std_error : 1.0;
  }
  pr.scale = (pr.w.array() * pr.y.array()).square().sum();
  return pr;
}

// Basis matrix B(i, k) = w_i exp(-t_i / tau_k).
Eigen::MatrixXd basis(const Problem& pr, const Eigen::VectorXd& log_tau) {
  Eigen::MatrixXd b(pr.t.size(), log_tau.size());
  for (Eigen::Index k = 0; k < log_tau.size(); ++k)
    b.col(k) = pr.w.array() * (-pr.t.array() / std::exp(log_tau(k))).exp();
  return b;
}

// Non-negative least squares by active-set elimination; small problems only.
Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const auto n = a.cols();
  std::vector<bool> active(static_cast<std::size_t>(n), true);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (int round = 0; round <= n; ++round) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index k = 0; k < n; ++k)
      if (active[static_cast<std::size_t>(k)]) idx.push_back(k);
    x.setZero();
    if (idx.empty()) break;
    Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = a.col(idx[j]);
    const Eigen::VectorXd s = sub.colPivHouseholderQr().solve(b);
    bool ok = true;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (!(s(static_cast<Eigen::Index>(j)) > 0.0)) {
        active[static_cast<std::size_t>(idx[j])] = false;
        ok = false;
      }
    }
    if (ok) {
      for (std::size_t j = 0; j < idx.size(); ++j) x(idx[j]) = s(static_cast<Eigen::Index>(j));
      break;
    }
  }
  return x;
}

struct LmState {
  Eigen::VectorXd amp;
  Eigen::VectorXd log_tau;
  double chi2 = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

double chi2_of(const Problem& pr, const Eigen::VectorXd& amp, const Eigen::VectorXd& log_tau) {
  const Eigen::VectorXd r = basis(pr, log_tau) * amp - (pr.w.array() * pr.y.array()).matrix();
  return r.squaredNorm();
}

// Levenberg-Marquardt on (amplitudes, log lifetimes); amplitudes are projected
// onto [0, 1] after each step, log lifetimes kept inside the start box widened by 10x.
LmState levenberg_marquardt(const Problem& pr, Eigen::VectorXd amp, Eigen::VectorXd log_tau, double log_tau_min,
                            double log_tau_max, int max_iterations) {
  const auto n = amp.size();
  const Eigen::VectorXd wy = pr.w.array() * pr.y.array();
  LmState st;
  st.amp = amp;
  st.log_tau = log_tau;
  st.chi2 = chi2_of(pr, amp, log_tau);
  double lambda = 1e-3;
  // chi2 ten iterations back; a slower decrease than 1e-6 relative counts as converged.
  std::vector<double> history;
  for (int it = 0; it < max_iterations; ++it) {
    st.iterations = it + 1;
    const Eigen::MatrixXd b = basis(pr, st.log_tau);
    const Eigen::VectorXd r = b * st.amp - wy;
    Eigen::MatrixXd j(pr.t.size(), 2 * n);
    j.leftCols(n) = b;
    for (Eigen::Index k = 0; k < n; ++k)
      j.col(n + k) = st.amp(k) * b.col(k).array() * pr.t.array() / std::exp(st.log_tau(k));
    // Variables held at a bound by the gradient drop out of the step.
    for (Eigen::Index k = 0; k < n; ++k) {
      const double ga = j.col(k).dot(r);
      if ((st.amp(k) <= 0.0 && ga > 0.0) || (st.amp(k) >= 1.0 && ga < 0.0)) j.col(k).setZero();
      const double gt = j.col(n + k).dot(r);
      if ((st.log_tau(k) <= log_tau_min && gt > 0.0) || (st.log_tau(k) >= log_tau_max && gt < 0.0))
        j.col(n + k).setZero();
    }
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    const double diag_floor = 1e-12 * std::max(jtj.diagonal().maxCoeff(), 1e-300);

    bool improved = false;
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index k = 0; k < 2 * n; ++k) a(k, k) += lambda * std::max(jtj(k, k), diag_floor);
      const Eigen::VectorXd delta = a.ldlt().solve(-g);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      Eigen::VectorXd amp_new = (st.amp + delta.head(n)).cwiseMax(0.0).cwiseMin(1.0);
      Eigen::VectorXd lt_new = (st.log_tau + delta.tail(n)).cwiseMax(log_tau_min).cwiseMin(log_tau_max);
      const double c = chi2_of(pr, amp_new, lt_new);
      if (c < st.chi2) {
        st.amp = amp_new;
        st.log_tau = lt_new;
        st.chi2 = c;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        break;
      }
      lambda *= 4.0;
      if (lambda > 1e16) break;
    }
    history.push_back(st.chi2);
    const bool stalled = history.size() > 10 && history[history.size() - 11] - st.chi2 < 1e-6 * st.chi2;
    if (!improved || stalled || st.chi2 <= 1e-30 * std::max(pr.scale, 1e-300)) {
      st.converged = true;
      break;
    }
  }
  return st;
}

AfterpulseModel to_model(const Eigen::VectorXd& amp, const Eigen::VectorXd& log_tau, double horizon) {
  std::vector<AfterpulseTerm> terms;
  for (Eigen::Index k = 0; k < amp.size(); ++k) terms.push_back({amp(k), std::exp(log_tau(k))});
  std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return a.lifetime < b.lifetime; });
  AfterpulseModel m;
  m.horizon = horizon;
  for (const auto& t : terms) {
    if (!m.terms.empty() && std::abs(std::log(t.lifetime / m.terms.back().lifetime)) < 1e-9) {
      m.terms.back().amplitude += t.amplitude;
      continue;
    }
    m.terms.push_back(t);
  }
  return m;
}

}  // namespace

AfterpulseFit fit_afterpulse(const AfterpulseDataset& data, int n_terms, const AfterpulseFitOptions& options) {
  if (n_terms < 1) throw InvalidArgument("fit_afterpulse: n_terms must be >= 1");
  validate(data);
  if (data.points.size() < static_cast<std::size_t>(2 * n_terms))
    throw InvalidArgument("fit_afterpulse: need at least 2 * n_terms points");
  if (!(options.min_lifetime > 0.0 && options.max_lifetime > options.min_lifetime))
    throw InvalidArgument("fit_afterpulse: bad lifetime range");

  const Problem pr = make_problem(data);
  const auto n = static_cast<Eigen::Index>(n_terms);
  const double lo = std::log(options.min_lifetime);
  const double hi = std::log(options.max_lifetime);

  AfterpulseFit fit;
  fit.diagnostics.dof = static_cast<int>(data.points.size()) - 2 * n_terms;
  fit.diagnostics.weighted = pr.weighted;

  Eigen::VectorXd grid(n);
  for (Eigen::Index k = 0; k < n; ++k)
    grid(k) = n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);

  if (pr.scale == 0.0) {
    fit.model = to_model(Eigen::VectorXd::Zero(n), grid, options.horizon);
    fit.diagnostics.converged = true;
    fit.diagnostics.starts = 0;
    return fit;
  }

  std::vector<Eigen::VectorXd> starts{grid};
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (int s = 0; s < options.starts_per_term * n_terms; ++s) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = u(rng);
    std::sort(v.begin(), v.end());
    starts.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), n));
  }

  const Eigen::VectorXd wy = pr.w.array() * pr.y.array();
  const double widen = std::log(10.0);
  LmState best;
  for (const auto& lt : starts) {
    const Eigen::VectorXd amp0 = nnls(basis(pr, lt), wy);
    auto st = levenberg_marquardt(pr, amp0, lt, lo - widen, hi + widen, options.max_iterations);
    if (std::isfinite(st.chi2) && st.chi2 < best.chi2) best = st;
  }
  fit.diagnostics.starts = static_cast<int>(starts.size());
  if (!std::isfinite(best.chi2)) throw FitFailure("fit_afterpulse: no start produced a finite chi-square", fit);

  fit.model = to_model(best.amp, best.log_tau, options.horizon);
  fit.diagnostics.chi2 = best.chi2;
  fit.diagnostics.relative_chi2 = best.chi2 / pr.scale;
  fit.diagnostics.chi2_per_dof = fit.diagnostics.dof > 0 ? best.chi2 / fit.diagnostics.dof : 0.0;
  fit.diagnostics.iterations = best.iterations;
  fit.diagnostics.converged = best.converged;
  if (!best.converged) throw FitFailure("fit_afterpulse: best start did not converge", fit);
  return fit;
}

// ---- constraint fit ---------------------------------------------------------

void validate(const ConstraintTargets& t) {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument(std::string("constraint targets: ") + what + " outside [0, 1)");
  };
  if (t.short_dt) {
    if (!(t.short_dt->dt > 0.0)) throw InvalidArgument("constraint targets: short delay must be > 0");
    if (!(t.short_dt->p > 0.0 && t.short_dt->p < 1.0)) throw InvalidArgument("constraint targets: short-delay value outside (0, 1)");
  }
  for (const auto& c : t.cumulative_at) {
    if (!(c.f_rep > 0.0)) throw InvalidArgument("constraint targets: f_rep must be > 0");
    prob(c.sum, "cumulative target");
  }
  for (const auto& c : t.cumulative_below) {
    if (!(c.f_rep > 0.0)) throw InvalidArgument("constraint targets: f_rep must be > 0");
    prob(c.max_sum, "cumulative bound");
    if (c.skip < 0) throw InvalidArgument("constraint targets: skip must be >= 0");
  }
  for (const auto& s : t.skip_targets) {
    if (!(s.f_rep > 0.0)) throw InvalidArgument("constraint targets: f_rep must be > 0");
    if (!(s.budget > 0.0 && s.budget < 1.0)) throw InvalidArgument("constraint targets: budget outside (0, 1)");
    if (s.expected < 0) throw InvalidArgument("constraint targets: expected skip must be >= 0");
  }
  if (t.horizon_bound) {
    if (!(t.horizon_bound->t > 0.0)) throw InvalidArgument("constraint targets: horizon bound time must be > 0");
    prob(t.horizon_bound->max_p, "horizon bound");
  }
}

ConstraintTargets reference_constraint_targets() {
  ConstraintTargets t;
  t.short_dt = ShortDelayTarget{100e-9, 1e-2, 0.20};
  t.cumulative_at = {CumulativeTarget{1e6, 0.014, 1e-3}};
  t.cumulative_below = {CumulativeBound{10e3, 1e-4, 0}, CumulativeBound{1e6, 0.0088, 2}};
  t.skip_targets = {SkipTarget{1e6, 1e-2, 2}, SkipTarget{2e6, 1e-2, 14}};
  t.horizon_bound = HorizonBound{100e-6, 1e-5};
  return t;
}

std::vector<TargetCheck> check_targets(const AfterpulseModel& model, const ConstraintTargets& t) {
  std::vector<TargetCheck> out;
  auto fmt = [](double v) { return csv::format_number(v); };
  if (t.short_dt) {
    const double p = afterpulse_probability(model, t.short_dt->dt);
    out.push_back({"p_ap(" + fmt(t.short_dt->dt) + " s) within " + fmt(t.short_dt->relative_tolerance * 100) +
                       "% of " + fmt(t.short_dt->p),
                   p, std::abs(p / t.short_dt->p - 1.0) <= t.short_dt->relative_tolerance});
  }
  for (const auto& c : t.cumulative_at) {
    const double s = cumulative_afterpulse(model, c.f_rep, 0);
    out.push_back({"cumulative at " + fmt(c.f_rep) + " Hz = " + fmt(c.sum) + " +- " + fmt(c.tolerance), s,
                   std::abs(s - c.sum) <= c.tolerance});
  }
  for (const auto& c : t.cumulative_below) {
    const double s = cumulative_afterpulse(model, c.f_rep, c.skip);
    out.push_back({"cumulative at " + fmt(c.f_rep) + " Hz after " + std::to_string(c.skip) + " gates < " + fmt(c.max_sum),
                   s, s < c.max_sum});
  }
  for (const auto& s : t.skip_targets) {
    const auto n = min_skip_gates(model, s.f_rep, s.budget);
    out.push_back({"skip at " + fmt(s.f_rep) + " Hz for budget " + fmt(s.budget) + " = " + std::to_string(s.expected),
                   static_cast<double>(n), n == s.expected});
  }
  if (t.horizon_bound) {
    const double p = model.raw(t.horizon_bound->t);
    out.push_back({"p_ap(" + fmt(t.horizon_bound->t) + " s) <= " + fmt(t.horizon_bound->max_p), p,
                   p <= t.horizon_bound->max_p});
  }
  const double asum = model.amplitude_sum();
  out.push_back({"amplitude sum <= 1", asum, asum <= 1.0});
  return out;
}

namespace {

constexpr double kMinLogAmplitude = -60.0;

AfterpulseModel decode(const std::vector<double>& x, double horizon) {
  AfterpulseModel m;
  m.horizon = horizon;
  for (std::size_t i = 0; i + 1 < x.size(); i += 2) {
    const double a = x[i] <= kMinLogAmplitude ? 0.0 : std::exp(x[i]);
    m.terms.push_back({a, std::exp(x[i + 1])});
  }
  return m;
}

double hinge(double v) { return v > 0.0 ? v * v : 0.0; }

double penalty(const AfterpulseModel& m, const std::vector<double>& x, const ConstraintTargets& t,
               const ConstraintFitOptions& o) {
  double pen = 0.0;
  if (t.short_dt) {
    const double p = m.raw(t.short_dt->dt);
    pen += p > 0.0 ? std::pow(std::log(p / t.short_dt->p) / 0.1, 2) : 1e6;
  }
  for (const auto& c : t.cumulative_at) {
    const double s = cumulative_afterpulse(m, c.f_rep, 0);
    pen += std::pow((s - c.sum) / (c.tolerance / 10.0), 2);
  }
  for (const auto& c : t.cumulative_below) {
    const double s = cumulative_afterpulse(m, c.f_rep, c.skip);
    pen += hinge((s - 0.9 * c.max_sum) / (0.01 * c.max_sum));
  }
  for (const auto& s : t.skip_targets) {
    const double scale = 1e-3 * s.budget;
    pen += hinge((cumulative_afterpulse(m, s.f_rep, s.expected) - s.budget * (1.0 - o.skip_margin)) / scale);
    if (s.expected > 0)
      pen += hinge((s.budget * (1.0 + o.skip_margin) - cumulative_afterpulse(m, s.f_rep, s.expected - 1)) / scale);
  }
  if (t.horizon_bound) {
    const double p = m.raw(t.horizon_bound->t);
    if (p > t.horizon_bound->max_p) pen += std::pow(std::log(p / t.horizon_bound->max_p), 2) * 100.0;
  }
  pen += hinge((m.amplitude_sum() - 1.0) / 1e-3);
  const double lo = std::log(o.min_lifetime) - std::log(10.0);
  const double hi = std::log(o.max_lifetime) + std::log(10.0);
  for (std::size_t i = 0; i + 1 < x.size(); i += 2) {
    pen += hinge(x[i + 1] - hi) * 100.0 + hinge(lo - x[i + 1]) * 100.0;
    pen += hinge(x[i]) * 100.0;
  }
  return pen;
}

}  // namespace

AfterpulseModel fit_to_constraints(const ConstraintTargets& targets, int n_terms, const ConstraintFitOptions& options) {
  if (n_terms < 1) throw InvalidArgument("fit_to_constraints: n_terms must be >= 1");
  validate(targets);

  auto objective = [&](const std::vector<double>& x) { return penalty(decode(x, options.horizon), x, targets, options); };

  const double lo = std::log(options.min_lifetime);
  const double hi = std::log(options.max_lifetime);
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> best_x;
  double best_val = std::numeric_limits<double>::infinity();
  const int starts = std::max(1, options.starts_per_term * n_terms);
  for (int s = 0; s < starts; ++s) {
    std::vector<double> taus(static_cast<std::size_t>(n_terms));
    for (auto& v : taus) v = u(rng);
    std::sort(taus.begin(), taus.end());
    std::vector<double> x;
    for (double lt : taus) {
      x.push_back(std::log(3e-3));
      x.push_back(lt);
    }
    auto r = detail::nelder_mead(objective, x, 1.0, 4000, 1e-12);
    for (int restart = 0; restart < 6; ++restart) {
      auto again = detail::nelder_mead(objective, r.x, 0.2, 4000, 1e-14);
      const bool stalled = again.value >= r.value * (1.0 - 1e-9);
      if (again.value < r.value) r = again;
      if (stalled) break;
    }
    if (r.value < best_val) {
      best_val = r.value;
      best_x = r.x;
    }
  }

  // Drop terms whose removal does not hurt: drives vanishing targets to exact zeros.
  for (std::size_t i = 0; i < best_x.size(); i += 2) {
    auto trial = best_x;
    trial[i] = kMinLogAmplitude - 1.0;
    const double v = objective(trial);
    if (v <= best_val) {
      best_x = trial;
      best_val = v;
    }
  }

  AfterpulseModel model = decode(best_x, options.horizon);
  std::sort(model.terms.begin(), model.terms.end(),
            [](const AfterpulseTerm& a, const AfterpulseTerm& b) { return a.lifetime < b.lifetime; });

  std::vector<TargetCheck> violated;
  for (auto& c : check_targets(model, targets))
    if (!c.satisfied) violated.push_back(std::move(c));
  if (!violated.empty()) {
    std::string what = "fit_to_constraints: no model satisfies every target; violated:";
    for (const auto& v : violated) what += " [" + v.description + ", got " + csv::format_number(v.achieved) + "]";
    throw InfeasibleTargets(what, std::move(violated), std::move(model));
  }
  return model;
}

// ---- dark counts ---------------------------------------------------------------

namespace {

void check_dark(std::span<const DarkPoint> pts) {
  if (pts.size() < 2) throw InvalidArgument("fit_dark_exponential: need at least 2 points");
  for (const auto& p : pts) {
    if (!(p.p_dc > 0.0)) throw InvalidData("fit_dark_exponential: dark probabilities must be > 0");
    if (!(p.efficiency > 0.0 && p.efficiency < 1.0))
      throw InvalidArgument("fit_dark_exponential: efficiency must lie in (0, 1)");
  }
  bool distinct = false;
  for (const auto& p : pts)
    if (p.efficiency != pts.front().efficiency) distinct = true;
  if (!distinct) throw InvalidArgument("fit_dark_exponential: efficiencies must not all coincide");
}

}  // namespace

DarkCountModel fit_dark_exponential(std::span<const DarkPoint> points) {
  const std::vector<DarkPoint> v(points.begin(), points.end());
  const std::vector<std::vector<DarkPoint>> one{v};
  return fit_dark_exponential_shared(one).models.front();
}

SharedSlopeFit fit_dark_exponential_shared(std::span<const std::vector<DarkPoint>> series) {
  if (series.empty()) throw InvalidArgument("fit_dark_exponential: no series");
  Eigen::Index rows = 0;
  for (const auto& s : series) {
    check_dark(s);
    rows += static_cast<Eigen::Index>(s.size());
  }
  const auto ns = static_cast<Eigen::Index>(series.size());
  // ln p = c_s + k (eta - 0.10)
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, ns + 1);
  Eigen::VectorXd y(rows);
  Eigen::Index r = 0;
  for (Eigen::Index s = 0; s < ns; ++s) {
    for (const auto& p : series[static_cast<std::size_t>(s)]) {
      a(r, s) = 1.0;
      a(r, ns) = p.efficiency - kReferenceEfficiency;
      y(r) = std::log(p.p_dc);
      ++r;
    }
  }
  const Eigen::VectorXd c = a.colPivHouseholderQr().solve(y);
  SharedSlopeFit out;
  out.slope = c(ns);
  for (Eigen::Index s = 0; s < ns; ++s) out.models.push_back(DarkCountModel{std::exp(c(s)), c(ns)});
  return out;
}

double dark_fit_residual(const DarkCountModel& model, std::span<const DarkPoint> points) {
  double ss = 0.0;
  for (const auto& p : points) {
    const double r = std::log(p.p_dc) - std::log(model.p10) - model.slope * (p.efficiency - kReferenceEfficiency);
    ss += r * r;
  }
  return ss;
}

AfterpulseDataset load_afterpulse_dataset(const std::string& path) {
  const auto t = csv::Table::load(path);
  const auto c_dt = t.column("dt_us");
  const auto c_v = t.column("value");
  const bool has_se = t.has_column("std_error");
  const auto c_se = has_se ? t.column("std_error") : 0;
  const bool has_q = t.has_column("quantity");
  const auto c_q = has_q ? t.column("quantity") : 0;
  AfterpulseDataset d;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    if (has_q && t.cell(r, c_q) != "afterpulse") continue;
    d.points.push_back({t.number_scaled(r, c_dt, 6), t.number(r, c_v), has_se ? t.number(r, c_se) : 0.0});
  }
  std::sort(d.points.begin(), d.points.end(), [](const auto& a, const auto& b) { return a.dt < b.dt; });
  validate(d);
  return d;
}

std::vector<std::vector<DarkPoint>> load_dark_series(const std::string& path, std::vector<std::string>* names) {
  const auto t = csv::Table::load(path);
  const auto c_eff = t.column("efficiency");
  const auto c_p = t.column("p_dc");
  const bool has_series = t.has_column("series");
  const auto c_s = has_series ? t.column("series") : 0;
  std::vector<std::string> order;
  std::map<std::string, std::vector<DarkPoint>> by;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const std::string key = has_series ? t.cell(r, c_s) : "all";
    if (!by.count(key)) order.push_back(key);
    by[key].push_back({t.number(r, c_eff), t.number(r, c_p)});
  }
  std::vector<std::vector<DarkPoint>> out;
  for (const auto& k : order) out.push_back(by[k]);
  if (names) *names = order;
  return out;
}

}  // namespace apd
