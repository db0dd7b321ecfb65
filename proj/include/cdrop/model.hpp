#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cdrop/netcore.hpp"
#include "cdrop/odeint.hpp"
#include "cdrop/renewal.hpp"

namespace cdrop {

enum class DropoutKind { None, Continuum, NaiveDrift };

const char* to_string(DropoutKind k) noexcept;

struct DropoutMode {
  DropoutKind kind = DropoutKind::None;
  DropoutSpec spec;         // Continuum only; spec.horizon is overwritten by the model horizon
  double naive_rate = 0.0;  // NaiveDrift only, in [0, 1)
  bool approximate_rates = false;  // Continuum: use the asymptotic rate formulas

  static DropoutMode none() { return {}; }
  static DropoutMode continuum(double p, double m) {
    DropoutMode d;
    d.kind = DropoutKind::Continuum;
    d.spec.p = p;
    d.spec.m = m;
    return d;
  }
  static DropoutMode naive_drift(double p) {
    DropoutMode d;
    d.kind = DropoutKind::NaiveDrift;
    d.naive_rate = p;
    return d;
  }
};

struct ModelConfig {
  std::size_t d_x = 2;
  std::size_t d_z = 4;
  std::size_t n_classes = 2;
  double horizon = 1.0;
  StepScheme scheme;
  DropoutMode dropout;
  std::vector<std::size_t> drift_hidden{64, 64};
  Activation drift_activation = Activation::Tanh;
  std::vector<std::size_t> classifier_hidden{64};
  Activation classifier_activation = Activation::Tanh;
  std::size_t event_cap = kDefaultEventCap;

  void validate() const;
};

/// theta = [zeta, gamma, classifier]. Gradients use the same type.
struct ModelParams {
  AffineParams zeta;
  Mlp drift;
  Mlp classifier;

  /// Every tensor in declaration order: zeta.W, zeta.b, then (W, b) of each
  /// drift layer, then of each classifier layer.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::size_t size() const;
  ModelParams zeros_like() const;
  void add(const ModelParams& other);
  void scale(double s);
};

ModelParams init_params(const ModelConfig& config, RandomStream& rng);

/// Record of one stochastic (or deterministic) forward pass.
struct ForwardPass {
  Vec input;
  Vec z0;
  IntegrationResult solve;
  MlpCache classifier_cache;
  Vec logits;
  std::optional<IndicatorPath> path;
  HiddenMasks drift_masks;
};

/// Pipeline zeta -> masked ODE solve -> classifier for one configuration.
/// Continuum rates are resolved once at construction.
class Model {
public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  /// Resolved (lambda1, lambda2); set only in Continuum mode.
  const std::optional<RenewalRates>& rates() const noexcept { return rates_; }

  /// Training-mode pass: draws a fresh indicator path (Continuum) or fresh
  /// hidden-unit masks (NaiveDrift) from `rng`.
  ForwardPass forward_train(const ModelParams& params, std::span<const double> x,
                            RandomStream& rng) const;

  /// Pass with explicitly frozen stochastic elements.
  ForwardPass forward_frozen(const ModelParams& params, std::span<const double> x,
                             const IndicatorPath* path, const HiddenMasks* drift_masks) const;

  /// Deterministic inference for None / NaiveDrift; WrongMode for Continuum.
  Vec forward_eval(const ModelParams& params, std::span<const double> x) const;

  /// Accumulates d(loss)/d(theta) for cotangent d(loss)/d(logits) into `grads`.
  void backward(const ModelParams& params, const ForwardPass& pass,
                std::span<const double> dl_dlogits, ModelParams& grads) const;

  IndicatorPath sample_path(RandomStream& rng) const;
  HiddenMasks sample_drift_masks(RandomStream& rng) const;

private:
  ModelConfig config_;
  std::optional<RenewalRates> rates_;
};

struct Batch {
  std::vector<std::span<const double>> inputs;
  std::vector<std::size_t> labels;
};

struct LossAndGrads {
  double loss = 0.0;
  ModelParams grads;
};

/// Mean cross-entropy over the batch and its exact gradient. Sample i draws
/// its masks from RandomStream(sample_seeds[i]); identical seeds give
/// identical masks.
LossAndGrads loss_and_grads(const Model& model, const ModelParams& params, const Batch& batch,
                            std::span<const std::uint64_t> sample_seeds);

}  // namespace cdrop
