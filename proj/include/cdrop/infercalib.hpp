#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cdrop/model.hpp"

namespace cdrop {

/// Mean and unbiased sample covariance of Monte-Carlo terminal latents.
class PredictiveDistribution {
public:
  /// Requires at least one sample; covariance is formed when there are two or more.
  static PredictiveDistribution from_samples(std::span<const Vec> samples);

  const Vec& mean() const noexcept { return mean_; }
  std::size_t n_mc() const noexcept { return n_mc_; }
  bool has_covariance() const noexcept { return covariance_.has_value(); }
  /// InsufficientSamples when n_mc < 2.
  const Mat& covariance() const;

private:
  Vec mean_;
  std::optional<Mat> covariance_;
  std::size_t n_mc_ = 0;
};

struct McPrediction {
  PredictiveDistribution distribution;
  Vec logits;
  Vec probs;
};

/// Draws n_mc indicator paths, averages the terminal latents and classifies
/// the mean once. Replica j uses RandomStream(seed_j) with seed_j taken from
/// `rng` in order.
McPrediction mc_predict(const Model& model, const ModelParams& params, std::span<const double> x,
                        std::size_t n_mc, RandomStream& rng);

/// Class probabilities under the mode's test-time rule: Monte-Carlo for
/// Continuum, deterministic evaluation otherwise.
Vec predict_probs(const Model& model, const ModelParams& params, std::span<const double> x,
                  std::size_t n_mc, RandomStream& rng);

inline constexpr std::size_t kReliabilityBins = 10;

struct ReliabilityBin {
  double low = 0.0;
  double high = 0.0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct ReliabilityBins {
  std::array<ReliabilityBin, kReliabilityBins> bins;
  std::size_t total() const noexcept;
};

/// Confidence is the maximum probability; prediction is its argmax.
ReliabilityBins reliability_bins(std::span<const Vec> probs, std::span<const std::size_t> labels);

struct EceReport {
  double ece = 0.0;
  std::array<double, kReliabilityBins> gaps{};
  std::size_t total = 0;
};

/// Count-weighted mean |accuracy - confidence|. ZeroCount on empty bins.
EceReport ece(const ReliabilityBins& bins);

struct SweepRow {
  std::size_t n_mc = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double median_accuracy = 0.0;
  std::vector<double> accuracies;  // one per seed
};

/// Test accuracy for each n_mc under every seed.
std::vector<SweepRow> mc_sweep(const Model& model, const ModelParams& params, const Batch& split,
                               std::span<const std::size_t> n_mc_values,
                               std::span<const std::uint64_t> seeds);

double median(std::vector<double> values);

}  // namespace cdrop
