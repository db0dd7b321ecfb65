#include "cdrop/infercalib.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdrop/error.hpp"
#include "cdrop/parallel.hpp"

namespace cdrop {

PredictiveDistribution PredictiveDistribution::from_samples(std::span<const Vec> samples) {
  if (samples.empty()) fail(ErrorCode::InsufficientSamples, "predictive distribution needs samples");
  const std::size_t d = samples.front().size();
  PredictiveDistribution out;
  out.n_mc_ = samples.size();
  out.mean_.assign(d, 0.0);
  for (const Vec& s : samples) {
    if (s.size() != d) fail(ErrorCode::ShapeMismatch, "Monte-Carlo samples differ in length");
    for (std::size_t i = 0; i < d; ++i) out.mean_[i] += s[i];
  }
  const double n = static_cast<double>(samples.size());
  for (double& v : out.mean_) v /= n;
  if (samples.size() < 2) return out;

  Mat cov(d, d);
  for (const Vec& s : samples) {
    for (std::size_t i = 0; i < d; ++i) {
      const double di = s[i] - out.mean_[i];
      for (std::size_t j = i; j < d; ++j) cov(i, j) += di * (s[j] - out.mean_[j]);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      cov(i, j) /= n - 1.0;
      cov(j, i) = cov(i, j);
    }
  }
  out.covariance_ = std::move(cov);
  return out;
}

const Mat& PredictiveDistribution::covariance() const {
  if (!covariance_) {
    fail(ErrorCode::InsufficientSamples, "sample covariance needs at least two Monte-Carlo samples");
  }
  return *covariance_;
}

McPrediction mc_predict(const Model& model, const ModelParams& params, std::span<const double> x,
                        std::size_t n_mc, RandomStream& rng) {
  if (model.config().dropout.kind != DropoutKind::Continuum) {
    fail(ErrorCode::WrongMode, "Monte-Carlo prediction requires a continuum dropout model");
  }
  if (n_mc < 1) fail(ErrorCode::InsufficientSamples, "n_mc must be at least 1");
  const Vec z0 = affine_forward(params.zeta, x);
  std::vector<std::uint64_t> seeds(n_mc);
  for (auto& s : seeds) s = rng.next_u64();

  std::vector<Vec> terminal(n_mc);
  parallel_chunks(n_mc, n_mc, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      RandomStream replica(seeds[j]);
      const IndicatorPath path = model.sample_path(replica);
      terminal[j] = integrate(params.drift, z0, model.config().scheme, model.config().horizon, &path)
                        .z_final;
    }
  });
  McPrediction out{PredictiveDistribution::from_samples(terminal), {}, {}};
  out.logits = mlp_forward(params.classifier, out.distribution.mean());
  out.probs = softmax(out.logits);
  return out;
}

Vec predict_probs(const Model& model, const ModelParams& params, std::span<const double> x,
                  std::size_t n_mc, RandomStream& rng) {
  if (model.config().dropout.kind == DropoutKind::Continuum) {
    return mc_predict(model, params, x, n_mc, rng).probs;
  }
  return softmax(model.forward_eval(params, x));
}

std::size_t ReliabilityBins::total() const noexcept {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  return n;
}

ReliabilityBins reliability_bins(std::span<const Vec> probs, std::span<const std::size_t> labels) {
  if (probs.size() != labels.size()) {
    fail(ErrorCode::LengthMismatch, "probability and label streams differ in length");
  }
  if (probs.empty()) fail(ErrorCode::EmptyInput, "reliability bins need at least one prediction");
  ReliabilityBins out;
  std::array<double, kReliabilityBins> conf_sum{};
  std::array<std::size_t, kReliabilityBins> correct{};
  for (std::size_t b = 0; b < kReliabilityBins; ++b) {
    out.bins[b].low = static_cast<double>(b) / kReliabilityBins;
    out.bins[b].high = static_cast<double>(b + 1) / kReliabilityBins;
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const Vec& p = probs[i];
    if (p.empty()) fail(ErrorCode::LengthMismatch, "empty probability vector");
    const auto top = std::max_element(p.begin(), p.end());
    const double conf = *top;
    const auto predicted = static_cast<std::size_t>(top - p.begin());
    const auto b = std::min<std::size_t>(static_cast<std::size_t>(conf * kReliabilityBins),
                                         kReliabilityBins - 1);
    ++out.bins[b].count;
    conf_sum[b] += conf;
    correct[b] += predicted == labels[i] ? 1 : 0;
  }
  for (std::size_t b = 0; b < kReliabilityBins; ++b) {
    auto& bin = out.bins[b];
    if (bin.count == 0) continue;
    bin.mean_confidence = conf_sum[b] / static_cast<double>(bin.count);
    bin.accuracy = static_cast<double>(correct[b]) / static_cast<double>(bin.count);
  }
  return out;
}

EceReport ece(const ReliabilityBins& bins) {
  EceReport r;
  r.total = bins.total();
  if (r.total == 0) fail(ErrorCode::ZeroCount, "ECE is undefined without predictions");
  for (std::size_t b = 0; b < kReliabilityBins; ++b) {
    const auto& bin = bins.bins[b];
    r.gaps[b] = bin.count ? std::abs(bin.accuracy - bin.mean_confidence) : 0.0;
    r.ece += static_cast<double>(bin.count) / static_cast<double>(r.total) * r.gaps[b];
  }
  return r;
}

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorCode::EmptyInput, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<SweepRow> mc_sweep(const Model& model, const ModelParams& params, const Batch& split,
                               std::span<const std::size_t> n_mc_values,
                               std::span<const std::uint64_t> seeds) {
  if (split.inputs.empty()) fail(ErrorCode::EmptySplit, "sweep split is empty");
  if (seeds.empty()) fail(ErrorCode::InvalidArgument, "sweep needs at least one seed");
  std::vector<SweepRow> rows;
  for (std::size_t n_mc : n_mc_values) {
    SweepRow row;
    row.n_mc = n_mc;
    for (std::uint64_t seed : seeds) {
      RandomStream rng(seed, n_mc);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < split.inputs.size(); ++i) {
        const Vec p = predict_probs(model, params, split.inputs[i], n_mc, rng);
        const auto predicted = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        hits += predicted == split.labels[i] ? 1 : 0;
      }
      row.accuracies.push_back(static_cast<double>(hits) / static_cast<double>(split.inputs.size()));
    }
    const double n = static_cast<double>(row.accuracies.size());
    row.mean_accuracy = std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : row.accuracies) ss += (a - row.mean_accuracy) * (a - row.mean_accuracy);
    row.std_accuracy = row.accuracies.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    row.median_accuracy = median(row.accuracies);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace cdrop
