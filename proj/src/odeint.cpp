#include "cdrop/odeint.hpp"

#include <bit>
#include <cmath>
#include <sstream>

#include "cdrop/error.hpp"

namespace cdrop {

namespace {

// Masked right-hand side evaluated at (t, z).
Vec masked_rhs(const Mlp& drift, double t, std::span<const double> z, std::span<const double> mask,
               const HiddenMasks* hidden) {
  Vec k = drift_forward(drift, t, z, nullptr, hidden);
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = mask[i] * k[i];
  return k;
}

Vec offset(std::span<const double> z, double scale, const Vec& k) {
  Vec out(z.begin(), z.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z[i] + scale * k[i];
  return out;
}

Vec step_forward(const Mlp& drift, StepMethod method, double t, double h,
                 std::span<const double> z, std::span<const double> mask,
                 const HiddenMasks* hidden) {
  if (method == StepMethod::Euler) {
    const Vec k = masked_rhs(drift, t, z, mask, hidden);
    return offset(z, h, k);
  }
  const Vec k1 = masked_rhs(drift, t, z, mask, hidden);
  const Vec k2 = masked_rhs(drift, t + 0.5 * h, offset(z, 0.5 * h, k1), mask, hidden);
  const Vec k3 = masked_rhs(drift, t + 0.5 * h, offset(z, 0.5 * h, k2), mask, hidden);
  const Vec k4 = masked_rhs(drift, t + h, offset(z, h, k3), mask, hidden);
  Vec out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

// Adds the VJP of mask * gamma(t, z) with cotangent `ct` to `grads` and
// returns the gradient with respect to z.
Vec rhs_vjp(const Mlp& drift, double t, std::span<const double> z, std::span<const double> mask,
            const Vec& ct, const HiddenMasks* hidden, MlpGrads& grads) {
  Vec masked(ct.size());
  bool any = false;
  for (std::size_t i = 0; i < ct.size(); ++i) {
    masked[i] = mask[i] * ct[i];
    any = any || masked[i] != 0.0;
  }
  if (!any) return Vec(z.size(), 0.0);
  MlpCache cache;
  Vec input(z.size() + 1);
  input[0] = t;
  std::copy(z.begin(), z.end(), input.begin() + 1);
  mlp_forward(drift, input, &cache, hidden);
  Vec d_input = mlp_backward(drift, cache, masked, grads, hidden);
  return Vec(d_input.begin() + 1, d_input.end());
}

}  // namespace

StepMethod parse_step_method(const std::string& name) {
  if (name == "euler") return StepMethod::Euler;
  if (name == "rk4") return StepMethod::Rk4;
  fail(ErrorCode::ConfigError, "unknown step scheme '" + name + "' (expected euler or rk4)");
}

const char* to_string(StepMethod m) noexcept { return m == StepMethod::Euler ? "euler" : "rk4"; }

void StepScheme::validate() const {
  if (steps < 1) fail(ErrorCode::ConfigError, "step count must be at least 1");
}

std::vector<double> uniform_grid(double horizon, std::size_t steps) {
  if (steps == 0) fail(ErrorCode::InvalidArgument, "uniform_grid: steps must be >= 1");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    fail(ErrorCode::InvalidArgument, "uniform_grid: horizon must be positive and finite");
  }
  std::vector<double> grid(steps + 1);
  for (std::size_t k = 0; k < steps; ++k) {
    grid[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
  }
  grid[steps] = horizon;
  return grid;
}

std::uint64_t fingerprint(const Mlp& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](double v) {
    h ^= std::bit_cast<std::uint64_t>(v);
    h *= 0x100000001b3ULL;
  };
  for (const auto& layer : net.layers) {
    feed(static_cast<double>(layer.weight.rows));
    feed(static_cast<double>(layer.weight.cols));
    for (double w : layer.weight.data) feed(w);
    for (double b : layer.bias) feed(b);
  }
  return h;
}

IntegrationResult integrate(const Mlp& drift, std::span<const double> z0,
                            const StepScheme& scheme, double horizon, const IndicatorPath* path,
                            const HiddenMasks* drift_masks) {
  scheme.validate();
  const std::size_t dims = z0.size();
  if (drift.input_dim() != dims + 1 || drift.output_dim() != dims) {
    std::ostringstream os;
    os << "drift shape (" << drift.input_dim() << " -> " << drift.output_dim()
       << ") does not match state dimension " << dims;
    fail(ErrorCode::ShapeMismatch, os.str());
  }
  if (path && (path->dims() != dims || path->horizon() != horizon)) {
    fail(ErrorCode::ShapeMismatch, "indicator path does not match state dimension or horizon");
  }

  const std::vector<double> base = uniform_grid(horizon, scheme.steps);
  std::vector<double> grid;
  std::vector<Vec> masks;
  if (path && scheme.event_aligned) {
    grid = merged_event_grid(*path, base);
    masks = interval_masks(*path, grid);
  } else {
    grid = base;
    masks.assign(grid.size() - 1, Vec(dims, 1.0));
    if (path) {
      for (std::size_t k = 0; k + 1 < grid.size(); ++k) path->indicator_into(grid[k], masks[k]);
    }
  }

  IntegrationResult result;
  TrajectoryTape& tape = result.tape;
  tape.method = scheme.method;
  tape.dims = dims;
  tape.drift_fingerprint = fingerprint(drift);
  if (drift_masks) tape.drift_masks = *drift_masks;
  const HiddenMasks* hidden = tape.drift_masks.empty() ? nullptr : &tape.drift_masks;
  tape.steps.reserve(grid.size() - 1);

  Vec z(z0.begin(), z0.end());
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double t = grid[k];
    const double h = grid[k + 1] - grid[k];
    Vec next = step_forward(drift, scheme.method, t, h, z, masks[k], hidden);
    for (double v : next) {
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "state became non-finite at t=" << grid[k + 1];
        fail(ErrorCode::NonFiniteState, os.str());
      }
    }
    tape.steps.push_back({t, h, std::move(masks[k]), std::move(z)});
    z = std::move(next);
  }
  result.z_final = std::move(z);
  return result;
}

IntegrationGrads integrate_backward(const Mlp& drift, const TrajectoryTape& tape,
                                    std::span<const double> dl_dz_final) {
  if (dl_dz_final.size() != tape.dims) {
    fail(ErrorCode::TapeMismatch, "cotangent length does not match the recorded state dimension");
  }
  if (fingerprint(drift) != tape.drift_fingerprint) {
    fail(ErrorCode::TapeMismatch, "drift parameters differ from those used to record the tape");
  }
  const HiddenMasks* hidden = tape.drift_masks.empty() ? nullptr : &tape.drift_masks;
  IntegrationGrads out{MlpGrads::zeros_like(drift), Vec(dl_dz_final.begin(), dl_dz_final.end())};
  Vec& a = out.z0;  // running adjoint of the state

  for (auto it = tape.steps.rbegin(); it != tape.steps.rend(); ++it) {
    const TapeStep& s = *it;
    const std::span<const double> mask = s.mask;
    if (tape.method == StepMethod::Euler) {
      Vec ct(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) ct[i] = s.h * a[i];
      const Vec dz = rhs_vjp(drift, s.t, s.z, mask, ct, hidden, out.drift);
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += dz[i];
      continue;
    }
    // Recompute RK4 stage inputs.
    const double h = s.h;
    const Vec k1 = masked_rhs(drift, s.t, s.z, mask, hidden);
    const Vec s2 = offset(s.z, 0.5 * h, k1);
    const Vec k2 = masked_rhs(drift, s.t + 0.5 * h, s2, mask, hidden);
    const Vec s3 = offset(s.z, 0.5 * h, k2);
    const Vec k3 = masked_rhs(drift, s.t + 0.5 * h, s3, mask, hidden);
    const Vec s4 = offset(s.z, h, k3);

    const std::size_t n = a.size();
    Vec dk1(n), dk2(n), dk3(n), dk4(n), dz = a;
    for (std::size_t i = 0; i < n; ++i) {
      dk1[i] = h / 6.0 * a[i];
      dk2[i] = h / 6.0 * 2.0 * a[i];
      dk3[i] = h / 6.0 * 2.0 * a[i];
      dk4[i] = h / 6.0 * a[i];
    }
    const Vec ds4 = rhs_vjp(drift, s.t + h, s4, mask, dk4, hidden, out.drift);
    for (std::size_t i = 0; i < n; ++i) {
      dz[i] += ds4[i];
      dk3[i] += h * ds4[i];
    }
    const Vec ds3 = rhs_vjp(drift, s.t + 0.5 * h, s3, mask, dk3, hidden, out.drift);
    for (std::size_t i = 0; i < n; ++i) {
      dz[i] += ds3[i];
      dk2[i] += 0.5 * h * ds3[i];
    }
    const Vec ds2 = rhs_vjp(drift, s.t + 0.5 * h, s2, mask, dk2, hidden, out.drift);
    for (std::size_t i = 0; i < n; ++i) {
      dz[i] += ds2[i];
      dk1[i] += 0.5 * h * ds2[i];
    }
    const Vec ds1 = rhs_vjp(drift, s.t, s.z, mask, dk1, hidden, out.drift);
    for (std::size_t i = 0; i < n; ++i) dz[i] += ds1[i];
    a = std::move(dz);
  }
  return out;
}

Vec discrete_equivalence_step(const Mlp& drift, std::span<const double> z,
                              std::span<const double> mask, double h, double t) {
  if (mask.size() != z.size()) fail(ErrorCode::ShapeMismatch, "mask length must equal state length");
  const Vec g = drift_forward(drift, t, z);
  Vec out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] + h * (mask[i] * g[i]);
  return out;
}

}  // namespace cdrop
