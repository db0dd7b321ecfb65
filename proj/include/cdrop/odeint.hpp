#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdrop/netcore.hpp"
#include "cdrop/renewal.hpp"

namespace cdrop {

enum class StepMethod { Euler, Rk4 };

StepMethod parse_step_method(const std::string& name);
const char* to_string(StepMethod m) noexcept;

struct StepScheme {
  StepMethod method = StepMethod::Euler;
  std::size_t steps = 10;  // base steps over [0, T]
  // Insert indicator switch times into the grid so every step sees a constant
  // mask. When false the mask is sampled at each base step's left endpoint.
  bool event_aligned = true;

  void validate() const;
};

struct TapeStep {
  double t = 0.0;
  double h = 0.0;
  Vec mask;  // constant over the step
  Vec z;     // state at the start of the step
};

/// Everything the reverse pass needs to differentiate a recorded solve.
struct TrajectoryTape {
  StepMethod method = StepMethod::Euler;
  std::size_t dims = 0;
  std::uint64_t drift_fingerprint = 0;
  HiddenMasks drift_masks;
  std::vector<TapeStep> steps;
};

struct IntegrationResult {
  Vec z_final;
  TrajectoryTape tape;
};

struct IntegrationGrads {
  MlpGrads drift;
  Vec z0;
};

/// Uniform grid of `steps` intervals on [0, horizon] with exact endpoints.
std::vector<double> uniform_grid(double horizon, std::size_t steps);

/// Content hash of the drift parameters, used to tie a tape to its network.
std::uint64_t fingerprint(const Mlp& net);

/// Solves dz/dt = I(t) * gamma(t, z) on [0, horizon]. Without a path the mask
/// is identically one (plain Neural ODE). `drift_masks` fixes inverted-dropout
/// factors on the drift's hidden units for the whole solve.
IntegrationResult integrate(const Mlp& drift, std::span<const double> z0,
                            const StepScheme& scheme, double horizon,
                            const IndicatorPath* path = nullptr,
                            const HiddenMasks* drift_masks = nullptr);

/// Exact reverse pass through the discrete solve recorded in `tape`.
IntegrationGrads integrate_backward(const Mlp& drift, const TrajectoryTape& tape,
                                    std::span<const double> dl_dz_final);

/// One Euler step of the masked dynamics: z + h * (mask * gamma(t, z)).
/// With h = 1 this is a residual block with dropout mask `mask`.
Vec discrete_equivalence_step(const Mlp& drift, std::span<const double> z,
                              std::span<const double> mask, double h, double t = 0.0);

}  // namespace cdrop
