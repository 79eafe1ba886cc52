#pragma once

// Fits of the two model families used by the detector registry:
// sums of exponentials for p_ap(dt) and log-linear dark counts versus
// efficiency.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "apd/detector_model.hpp"

namespace apd {

struct AfterpulseSample {
  double dt = 0.0;  // s
  double p_ap = 0.0;
  double std_error = 0.0;  // 0 when unknown
};

struct AfterpulseDataset {
  std::vector<AfterpulseSample> points;
};

void validate(const AfterpulseDataset& data);

struct FitDiagnostics {
  double chi2 = 0.0;
  // chi2 divided by the weighted sum of squared data; 0 for all-zero data.
  double relative_chi2 = 0.0;
  int dof = 0;
  double chi2_per_dof = 0.0;
  int starts = 0;
  int iterations = 0;  // of the winning start
  bool converged = false;
  bool weighted = false;
};

struct AfterpulseFit {
  AfterpulseModel model;
  FitDiagnostics diagnostics;
};

struct AfterpulseFitOptions {
  int starts_per_term = 8;
  std::uint64_t seed = 0x5eed;
  double min_lifetime = 10e-9;
  double max_lifetime = 100e-6;
  int max_iterations = 2000;
  double horizon = kDefaultAfterpulseHorizon;
};

class FitFailure : public std::runtime_error {
 public:
  FitFailure(const std::string& what, AfterpulseFit best) : std::runtime_error(what), best_(std::move(best)) {}
  const AfterpulseFit& best() const noexcept { return best_; }

 private:
  AfterpulseFit best_;
};

// Weighted least squares with non-negative amplitudes; multistart over
// lifetimes drawn log-uniformly in [min_lifetime, max_lifetime]. Lifetimes of
// the result are strictly ascending; coincident lifetimes are merged, so
// degenerate data may return fewer than n_terms terms.
AfterpulseFit fit_afterpulse(const AfterpulseDataset& data, int n_terms, const AfterpulseFitOptions& options = {});

struct ShortDelayTarget {
  double dt = 100e-9;
  double p = 1e-2;
  double relative_tolerance = 0.20;
};

struct CumulativeTarget {
  double f_rep = 1e6;
  double sum = 0.014;
  double tolerance = 1e-3;  // absolute
};

// Sum over gates after skipping `skip` of them stays below max_sum.
struct CumulativeBound {
  double f_rep = 10e3;
  double max_sum = 1e-4;
  std::int64_t skip = 0;
};

// min_skip_gates(model, f_rep, budget) must equal expected.
struct SkipTarget {
  double f_rep = 1e6;
  double budget = 1e-2;
  std::int64_t expected = 2;
};

// Un-truncated p_ap(t) <= max_p; p_ap is non-increasing so this bounds every later delay.
struct HorizonBound {
  double t = 100e-6;
  double max_p = 1e-5;
};

struct ConstraintTargets {
  std::optional<ShortDelayTarget> short_dt;
  std::vector<CumulativeTarget> cumulative_at;
  std::vector<CumulativeBound> cumulative_below;
  std::vector<SkipTarget> skip_targets;
  std::optional<HorizonBound> horizon_bound;
};

void validate(const ConstraintTargets& targets);

// Targets behind the shipped Epitaxx afterpulse coefficients:
// p_ap(100 ns) ~ 1e-2, sum at 1 MHz = 1.4%, skip 2 gates at 1 MHz and 14 at
// 2 MHz for a 1% budget, sum at 10 kHz < 1e-4, negligible p_ap at 100 us,
// and a residual after the 2-gate skip at 1 MHz low enough that dark-seeded
// afterpulses still keep the afterpulse error term under 1%.
ConstraintTargets reference_constraint_targets();

struct TargetCheck {
  std::string description;
  double achieved = 0.0;
  bool satisfied = false;
};

std::vector<TargetCheck> check_targets(const AfterpulseModel& model, const ConstraintTargets& targets);

struct ConstraintFitOptions {
  int starts_per_term = 8;
  std::uint64_t seed = 0x5eed;
  double min_lifetime = 10e-9;
  double max_lifetime = 100e-6;
  // Skip targets are fitted with this relative margin on both sides of the budget.
  double skip_margin = 0.005;
  double horizon = kDefaultAfterpulseHorizon;
};

class InfeasibleTargets : public std::runtime_error {
 public:
  InfeasibleTargets(const std::string& what, std::vector<TargetCheck> violated, AfterpulseModel best)
      : std::runtime_error(what), violated_(std::move(violated)), best_(std::move(best)) {}
  const std::vector<TargetCheck>& violated() const noexcept { return violated_; }
  const AfterpulseModel& best() const noexcept { return best_; }

 private:
  std::vector<TargetCheck> violated_;
  AfterpulseModel best_;
};

// Penalized Nelder-Mead search; every target is re-checked on the result and
// InfeasibleTargets lists those still violated.
AfterpulseModel fit_to_constraints(const ConstraintTargets& targets, int n_terms,
                                   const ConstraintFitOptions& options = {});

struct DarkPoint {
  double efficiency = 0.0;
  double p_dc = 0.0;
};

// Least squares of ln p_dc against efficiency.
DarkCountModel fit_dark_exponential(std::span<const DarkPoint> points);

struct SharedSlopeFit {
  std::vector<DarkCountModel> models;  // one per series, common slope
  double slope = 0.0;
};

SharedSlopeFit fit_dark_exponential_shared(std::span<const std::vector<DarkPoint>> series);

// Sum of squared log residuals of a dark model over the points.
double dark_fit_residual(const DarkCountModel& model, std::span<const DarkPoint> points);

// CSV inputs: afterpulse report (dt_us, value, std_error) and dark points
// (efficiency, p_dc[, series]).
AfterpulseDataset load_afterpulse_dataset(const std::string& path);
std::vector<std::vector<DarkPoint>> load_dark_series(const std::string& path, std::vector<std::string>* names = nullptr);

}  // namespace apd
