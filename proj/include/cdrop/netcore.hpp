#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cdrop/rng.hpp"

namespace cdrop {

using Vec = std::vector<double>;

/// Row-major dense matrix.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

enum class Activation { Identity, Tanh, Relu };

Activation parse_activation(const std::string& name);
const char* to_string(Activation a) noexcept;

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
  Activation activation = Activation::Identity;

  std::size_t in() const noexcept { return weight.cols; }
  std::size_t out() const noexcept { return weight.rows; }
};

/// Affine embedding z0 = W x + b.
using AffineParams = DenseLayer;

/// Feed-forward stack. The last layer is linear.
struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().in(); }
  std::size_t output_dim() const { return layers.back().out(); }
  std::size_t hidden_count() const { return layers.size() - 1; }
};

/// Multiplicative factors applied to hidden activations (inverted dropout).
/// One vector per hidden layer; an empty object means no masking.
struct HiddenMasks {
  std::vector<Vec> scale;
  bool empty() const noexcept { return scale.empty(); }
};

struct MlpCache {
  std::vector<Vec> inputs;  // input seen by each layer
  std::vector<Vec> pre;     // pre-activation of each layer
};

/// Gradient buffers shaped like an Mlp.
struct MlpGrads {
  std::vector<Mat> weight;
  std::vector<Vec> bias;

  static MlpGrads zeros_like(const Mlp& net);
  void add(const MlpGrads& other);
};

/// Gradients of a network plus the gradient with respect to its input.
struct GradBundle {
  MlpGrads params;
  Vec input;
};

Vec affine_forward(const AffineParams& params, std::span<const double> x);

/// Accumulates dW += g x^T, db += g.
void affine_backward(const AffineParams& params, std::span<const double> x,
                     std::span<const double> cotangent, Mat& d_weight, Vec& d_bias);

Vec mlp_forward(const Mlp& net, std::span<const double> x, MlpCache* cache = nullptr,
                const HiddenMasks* masks = nullptr);

/// Reverse pass from a cache produced by mlp_forward with the same masks.
/// Parameter gradients accumulate into `grads`; returns d(loss)/d(input).
Vec mlp_backward(const Mlp& net, const MlpCache& cache, std::span<const double> cotangent,
                 MlpGrads& grads, const HiddenMasks* masks = nullptr);

/// Drift gamma(t, z): the MLP evaluated on [t, z].
Vec drift_forward(const Mlp& drift, double t, std::span<const double> z,
                  MlpCache* cache = nullptr, const HiddenMasks* masks = nullptr);

/// Vector-Jacobian product of the drift; the gradient for the time slot is
/// dropped, so `input` has length d_z.
GradBundle drift_backward(const Mlp& drift, double t, std::span<const double> z,
                          std::span<const double> cotangent,
                          const HiddenMasks* masks = nullptr);

Vec softmax(std::span<const double> logits);

/// -log(probs[label]).
double cross_entropy(std::span<const double> probs, std::size_t label);

/// Log-sum-exp stabilized cross-entropy evaluated directly on logits.
double cross_entropy_from_logits(std::span<const double> logits, std::size_t label);

/// d(cross_entropy_from_logits)/d(logits) = softmax(logits) - onehot(label).
Vec cross_entropy_backward(std::span<const double> logits, std::size_t label);

/// Builds a network of the given widths. Layers feeding a nonlinear
/// activation get He-uniform weights, the linear output layer gets
/// Glorot-uniform weights; biases start at zero.
Mlp init_mlp(std::span<const std::size_t> widths, Activation hidden, RandomStream& rng);

AffineParams init_affine(std::size_t in, std::size_t out, RandomStream& rng);

void check_finite(std::span<const double> v, const char* what);

}  // namespace cdrop
