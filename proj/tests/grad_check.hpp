#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>
#include <span>

namespace cdrop::testing {

/// Relative agreement with an absolute floor for entries whose true value is
/// at the round-off level of the finite-difference quotient.
inline bool close_rel(double analytic, double numeric, double rel, double abs_floor = 1e-9) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return std::abs(analytic - numeric) <= rel * scale + abs_floor;
}

/// Central difference of `loss` with respect to every entry of `values`,
/// compared against `analytic`. Returns the number of mismatching entries.
inline int check_gradient(std::span<double> values, std::span<const double> analytic,
                          const std::function<double()>& loss, double h, double rel,
                          double abs_floor = 1e-9) {
  REQUIRE(values.size() == analytic.size());
  int bad = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss();
    values[i] = saved - h;
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (2 * h);
    if (!close_rel(analytic[i], numeric, rel, abs_floor)) {
      ++bad;
      MESSAGE("entry " << i << ": analytic " << analytic[i] << " numeric " << numeric);
    }
  }
  return bad;
}

}  // namespace cdrop::testing
