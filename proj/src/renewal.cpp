#include "cdrop/renewal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cdrop/error.hpp"
#include "cdrop/parallel.hpp"

namespace cdrop {

namespace {

// x - 1 + e^{-x}, accurate for small x where the direct form cancels.
double shifted_decay(double x) {
  if (x < 0.1) {
    double term = x * x / 2.0;
    double sum = 0.0;
    for (int k = 2; k < 20 && std::abs(term) > 1e-18 * std::abs(sum); ++k) {
      sum += term;
      term *= -x / (k + 1);
    }
    return sum;
  }
  return x + std::expm1(-x);
}

std::string describe(const DropoutSpec& s) {
  std::ostringstream os;
  os.precision(17);
  os << "p=" << s.p << " m=" << s.m << " T=" << s.horizon;
  return os.str();
}

// Walks one dimension's alternating process, invoking on_switch(t) for every
// state change strictly inside (0, horizon). Returns the number of switches.
template <class OnSwitch>
std::size_t walk_dimension(const RenewalRates& rates, double horizon, RandomStream& rng,
                           std::size_t event_cap, OnSwitch&& on_switch) {
  double t = 0.0;
  bool active = true;
  std::size_t count = 0;
  double first = rng.exponential(rates.lambda1);
  while (first == 0.0) first = rng.exponential(rates.lambda1);
  double next = first;
  while (next < horizon) {
    if (++count > event_cap) {
      std::ostringstream os;
      os << "more than " << event_cap << " switch events in one dimension (lambda1="
         << rates.lambda1 << ", lambda2=" << rates.lambda2 << ", T=" << horizon << ")";
      fail(ErrorCode::EventCapExceeded, os.str());
    }
    on_switch(next);
    t = next;
    active = !active;
    next = t + rng.exponential(active ? rates.lambda1 : rates.lambda2);
  }
  return count;
}

}  // namespace

void RenewalRates::validate() const {
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0) || !std::isfinite(lambda1) ||
      !std::isfinite(lambda2)) {
    std::ostringstream os;
    os << "renewal rates must be positive and finite (lambda1=" << lambda1
       << ", lambda2=" << lambda2 << ")";
    fail(ErrorCode::InvalidArgument, os.str());
  }
}

void DropoutSpec::validate() const {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::InvalidArgument, "p must lie in (0, 1): " + describe(*this));
  if (!(m > 0.0) || !std::isfinite(m)) fail(ErrorCode::InvalidArgument, "m must be positive: " + describe(*this));
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    fail(ErrorCode::InvalidArgument, "T must be positive: " + describe(*this));
  }
}

IndicatorPath IndicatorPath::always_active(std::size_t dims, double horizon) {
  return IndicatorPath(horizon, std::vector<std::vector<double>>(dims));
}

IndicatorPath::IndicatorPath(double horizon, std::vector<std::vector<double>> switch_times)
    : horizon_(horizon), switches_(std::move(switch_times)) {
  if (switches_.empty()) fail(ErrorCode::InvalidArgument, "indicator path needs at least one dimension");
  if (!(horizon > 0.0)) fail(ErrorCode::InvalidArgument, "indicator path horizon must be positive");
  for (const auto& times : switches_) {
    double prev = 0.0;
    for (double s : times) {
      if (!(s > prev) || !(s < horizon)) {
        fail(ErrorCode::InvalidArgument,
             "switch times must be strictly increasing inside (0, T)");
      }
      prev = s;
    }
  }
}

std::size_t IndicatorPath::total_switches() const noexcept {
  std::size_t n = 0;
  for (const auto& s : switches_) n += s.size();
  return n;
}

void IndicatorPath::indicator_into(double t, std::span<double> out) const {
  for (std::size_t i = 0; i < switches_.size(); ++i) {
    const auto& s = switches_[i];
    const auto flips = std::upper_bound(s.begin(), s.end(), t) - s.begin();
    out[i] = (flips % 2 == 0) ? 1.0 : 0.0;
  }
}

std::vector<double> IndicatorPath::indicator_at(double t) const {
  if (!(t >= 0.0 && t <= horizon_)) {
    std::ostringstream os;
    os << "t=" << t << " outside [0, " << horizon_ << "]";
    fail(ErrorCode::OutOfHorizon, os.str());
  }
  std::vector<double> out(dims());
  indicator_into(t, out);
  return out;
}

double availability(const RenewalRates& rates, double t) {
  const double u = rates.total();
  return rates.lambda2 / u + rates.lambda1 / u * std::exp(-u * t);
}

double dropout_rate(const RenewalRates& rates, double horizon) {
  const double u = rates.total();
  return rates.lambda1 / u * -std::expm1(-u * horizon);
}

double expected_renewals(const RenewalRates& rates, double t) {
  const double u = rates.total();
  return rates.lambda1 * rates.lambda2 / (u * u) * shifted_decay(u * t);
}

RenewalRates approx_rates(const DropoutSpec& spec) {
  spec.validate();
  return {spec.m / ((1.0 - spec.p) * spec.horizon), spec.m / (spec.p * spec.horizon)};
}

RateResiduals forward_residuals(const RenewalRates& rates, const DropoutSpec& spec) {
  return {dropout_rate(rates, spec.horizon) - spec.p,
          expected_renewals(rates, spec.horizon) - spec.m};
}

RenewalRates solve_rates(const DropoutSpec& spec) {
  spec.validate();
  const double p = spec.p;
  const double target = spec.m;
  const double tol = 1e-12 * std::max(1.0, target);

  // Active share f and its complement as functions of x = (lambda1+lambda2)T.
  struct Point {
    double x, f, g, residual;
  };
  auto eval = [&](double x) {
    const double e = -std::expm1(-x);
    const double f = p / e;
    const double g = std::max(0.0, (e - p) / e);
    return Point{x, f, g, f * g * shifted_decay(x) - target};
  };

  const double x_min = -std::log1p(-p);
  const double x_guess = target / (p * (1.0 - p));
  Point lo{x_min, 1.0, 0.0, -target};
  Point hi = eval(std::max(x_guess, 2.0 * x_min));
  while (hi.residual < 0.0) {
    if (hi.x >= kMaxScaledRate) {
      std::ostringstream os;
      os.precision(6);
      os << "no (lambda1, lambda2) with (lambda1+lambda2)T <= " << kMaxScaledRate
         << " reproduces " << describe(spec) << "; m-residual at the domain edge is "
         << hi.residual;
      fail(ErrorCode::NoSolution, os.str());
    }
    lo = hi;
    hi = eval(std::min(2.0 * hi.x, kMaxScaledRate));
  }

  auto finish = [&](const Point& pt) {
    const double u = pt.x / spec.horizon;
    return RenewalRates{pt.f * u, pt.g * u};
  };
  if (std::abs(hi.residual) <= tol) return finish(hi);

  // Secant step inside the bracket, falling back to bisection whenever the
  // secant lands outside the middle of the bracket or stalls.
  constexpr int kMaxIterations = 200;
  Point best = hi;
  double last_width = hi.x - lo.x;
  for (int it = 0; it < kMaxIterations; ++it) {
    const double width = hi.x - lo.x;
    double x = hi.x - hi.residual * width / (hi.residual - lo.residual);
    const double margin = 0.05 * width;
    if (!(x > lo.x + margin && x < hi.x - margin) || width > 0.5 * last_width) {
      x = 0.5 * (lo.x + hi.x);
    }
    last_width = width;
    const Point mid = eval(x);
    if (std::abs(mid.residual) < std::abs(best.residual)) best = mid;
    if (std::abs(mid.residual) <= tol) return finish(mid);
    if (mid.residual < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi.x - lo.x <= 4.0 * std::numeric_limits<double>::epsilon() * hi.x) break;
  }
  std::ostringstream os;
  os.precision(6);
  os << "rate solver did not reach |m-residual| <= " << tol << " for " << describe(spec)
     << "; best residual " << best.residual << " at (lambda1+lambda2)T=" << best.x;
  fail(ErrorCode::NonConvergence, os.str());
}

IndicatorPath sample_indicator_path(const RenewalRates& rates, double horizon,
                                    std::size_t dims, RandomStream& rng,
                                    std::size_t event_cap) {
  rates.validate();
  (void)IndicatorPath::always_active(dims, horizon);  // validates dims and horizon up front
  std::vector<std::vector<double>> switches(dims);
  for (auto& times : switches) {
    walk_dimension(rates, horizon, rng, event_cap, [&](double s) {
      // A zero-length period makes two flips coincide; they cancel.
      if (!times.empty() && s <= times.back()) {
        times.pop_back();
      } else {
        times.push_back(s);
      }
    });
  }
  return IndicatorPath(horizon, std::move(switches));
}

std::vector<double> merged_event_grid(const IndicatorPath& path,
                                      std::span<const double> base_grid) {
  std::vector<double> events;
  events.reserve(path.total_switches());
  for (std::size_t i = 0; i < path.dims(); ++i) {
    const auto s = path.switch_times(i);
    events.insert(events.end(), s.begin(), s.end());
  }
  std::sort(events.begin(), events.end());

  std::vector<double> out;
  out.reserve(base_grid.size() + events.size());
  bool last_is_base = false;
  auto e = events.begin();
  auto b = base_grid.begin();
  while (e != events.end() || b != base_grid.end()) {
    const bool take_base = b != base_grid.end() && (e == events.end() || *b <= *e);
    if (take_base) {
      if (!out.empty() && !last_is_base && *b - out.back() <= kGridDedupTolerance) {
        out.back() = *b;
      } else {
        out.push_back(*b);
      }
      last_is_base = true;
      ++b;
    } else {
      if (out.empty() || *e - out.back() > kGridDedupTolerance) {
        out.push_back(*e);
        last_is_base = false;
      }
      ++e;
    }
  }
  return out;
}

std::vector<std::vector<double>> interval_masks(const IndicatorPath& path,
                                                std::span<const double> grid) {
  const std::size_t points = grid.size();
  std::vector<std::vector<std::size_t>> flips_at(points);
  for (std::size_t i = 0; i < path.dims(); ++i) {
    for (double s : path.switch_times(i)) {
      auto it = std::lower_bound(grid.begin(), grid.end(), s);
      std::size_t j = static_cast<std::size_t>(it - grid.begin());
      if (j == points || (j > 0 && s - grid[j - 1] < grid[j] - s)) --j;
      flips_at[j].push_back(i);
    }
  }
  std::vector<double> state(path.dims(), 1.0);
  std::vector<std::vector<double>> masks;
  masks.reserve(points > 0 ? points - 1 : 0);
  for (std::size_t k = 0; k + 1 < points; ++k) {
    for (std::size_t i : flips_at[k]) state[i] = 1.0 - state[i];
    masks.push_back(state);
  }
  return masks;
}

namespace {

constexpr std::size_t kMcChunks = 64;

struct CountSums {
  std::uint64_t n = 0;
  std::uint64_t sum = 0;
  std::uint64_t sum_sq = 0;
};

template <class PerPath>
CountSums mc_counts(const RenewalRates& rates, double horizon, std::size_t n_samples,
                    std::uint64_t seed, PerPath&& per_path) {
  rates.validate();
  if (n_samples < 2) fail(ErrorCode::InvalidArgument, "Monte-Carlo estimate needs at least two samples");
  std::vector<CountSums> partial(kMcChunks);
  parallel_chunks(n_samples, kMcChunks, [&](std::size_t c, std::size_t begin, std::size_t end) {
    CountSums acc;
    RandomStream rng(seed, c);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t switches =
          walk_dimension(rates, horizon, rng, kDefaultEventCap, [](double) {});
      const std::uint64_t v = per_path(switches);
      ++acc.n;
      acc.sum += v;
      acc.sum_sq += v * v;
    }
    partial[c] = acc;
  });
  CountSums total;
  for (const auto& p : partial) {
    total.n += p.n;
    total.sum += p.sum;
    total.sum_sq += p.sum_sq;
  }
  return total;
}

McEstimate summarize(const CountSums& s) {
  const double n = static_cast<double>(s.n);
  const double mean = static_cast<double>(s.sum) / n;
  const double var =
      std::max(0.0, (static_cast<double>(s.sum_sq) - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), s.n};
}

}  // namespace

McEstimate mc_estimate_availability(const RenewalRates& rates, double horizon,
                                    std::size_t n_samples, std::uint64_t seed) {
  const auto sums = mc_counts(rates, horizon, n_samples, seed,
                              [](std::size_t switches) -> std::uint64_t { return switches % 2 == 0; });
  const double n = static_cast<double>(sums.n);
  const double a = static_cast<double>(sums.sum) / n;
  return {a, std::sqrt(a * (1.0 - a) / n), sums.n};
}

McEstimate mc_estimate_renewals(const RenewalRates& rates, double horizon,
                                std::size_t n_samples, std::uint64_t seed) {
  // A completed renewal is an active+inactive pair, i.e. every second switch.
  return summarize(mc_counts(rates, horizon, n_samples, seed,
                             [](std::size_t switches) -> std::uint64_t { return switches / 2; }));
}

}  // namespace cdrop
