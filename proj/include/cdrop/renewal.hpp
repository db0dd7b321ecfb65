#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cdrop/rng.hpp"

namespace cdrop {

/// Intensities of the active (lambda1) and inactive (lambda2) exponential
/// period lengths of an alternating renewal process.
struct RenewalRates {
  double lambda1 = 1.0;
  double lambda2 = 1.0;

  /// Throws InvalidArgument unless both rates are positive and finite.
  void validate() const;
  double total() const noexcept { return lambda1 + lambda2; }
};

/// User-facing dropout hyperparameters: terminal inactivity probability p,
/// expected renewal count m over [0, horizon].
struct DropoutSpec {
  double p = 0.1;
  double m = 10.0;
  double horizon = 1.0;

  void validate() const;
};

inline constexpr std::size_t kDefaultEventCap = 1'000'000;
inline constexpr double kGridDedupTolerance = 1e-12;

/// Per-dimension switch times of the dropout indicator on [0, horizon].
/// Every dimension starts active; the state flips at each listed time.
class IndicatorPath {
public:
  IndicatorPath(double horizon, std::vector<std::vector<double>> switch_times);

  /// A path with no switches: every dimension active on all of [0, horizon].
  static IndicatorPath always_active(std::size_t dims, double horizon);

  std::size_t dims() const noexcept { return switches_.size(); }
  double horizon() const noexcept { return horizon_; }
  std::span<const double> switch_times(std::size_t dim) const { return switches_.at(dim); }
  std::size_t total_switches() const noexcept;

  /// 1 for active, 0 for inactive, per dimension. OutOfHorizon outside [0, T].
  std::vector<double> indicator_at(double t) const;

  /// Same as indicator_at but writes into `out` without range checking `t`.
  void indicator_into(double t, std::span<double> out) const;

private:
  double horizon_;
  std::vector<std::vector<double>> switches_;
};

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
};

/// Probability of being active at time t when starting active.
double availability(const RenewalRates& rates, double t);

/// Probability of being inactive at the horizon.
double dropout_rate(const RenewalRates& rates, double horizon);

/// Renewal function m(t): expected number of completed active+inactive cycles.
double expected_renewals(const RenewalRates& rates, double t);

/// Exact (lambda1, lambda2) for the requested (p, m, horizon).
///
/// Substituting f = lambda1/u with u = lambda1 + lambda2 reduces the pair of
/// equations to one root problem in x = u * horizon on (x_min, x_max], with
/// x_min = -ln(1 - p) (the constraint f < 1) and x_max = kMaxScaledRate. The
/// root is bracketed starting from the asymptotic guess, expanded
/// geometrically, and refined by a bisection-safeguarded secant iteration.
/// Throws NoSolution when no sign change exists on the admissible domain and
/// NonConvergence past the iteration cap; both messages carry residuals.
RenewalRates solve_rates(const DropoutSpec& spec);

/// Large-horizon asymptotic pair: lambda1 = m/((1-p)T), lambda2 = m/(pT).
RenewalRates approx_rates(const DropoutSpec& spec);

/// Upper limit on (lambda1 + lambda2) * horizon accepted by solve_rates.
/// Beyond it a single dimension's expected switch count reaches the default
/// event cap and the process cannot be simulated.
inline constexpr double kMaxScaledRate = 1e6;

struct RateResiduals {
  double p_residual = 0.0;  // dropout_rate(rates, T) - p
  double m_residual = 0.0;  // expected_renewals(rates, T) - m
};
RateResiduals forward_residuals(const RenewalRates& rates, const DropoutSpec& spec);

/// Draws an indicator path: alternating Exp(lambda1) / Exp(lambda2) periods
/// per dimension, starting active, truncated to (0, horizon).
IndicatorPath sample_indicator_path(const RenewalRates& rates, double horizon,
                                    std::size_t dims, RandomStream& rng,
                                    std::size_t event_cap = kDefaultEventCap);

/// Union of `base_grid` and all switch times, sorted. Switch times closer than
/// kGridDedupTolerance to an already kept point are merged into it.
std::vector<double> merged_event_grid(const IndicatorPath& path,
                                      std::span<const double> base_grid);

/// Mask for each interval [grid[k], grid[k+1]] of an event-aligned grid. A
/// switch merged into a grid point takes effect from that point onward.
std::vector<std::vector<double>> interval_masks(const IndicatorPath& path,
                                                std::span<const double> grid);

/// Brute-force oracles. Samples are split into 64 fixed chunks; chunk c draws
/// its trajectories in order from RandomStream(seed, c).
McEstimate mc_estimate_availability(const RenewalRates& rates, double horizon,
                                    std::size_t n_samples, std::uint64_t seed);
McEstimate mc_estimate_renewals(const RenewalRates& rates, double horizon,
                                std::size_t n_samples, std::uint64_t seed);

}  // namespace cdrop
