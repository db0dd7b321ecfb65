#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cdrop/model.hpp"
#include "cdrop/netcore.hpp"

namespace cdrop {

enum class Split : std::uint8_t { Train, Val, Test };

const char* to_string(Split s) noexcept;

struct NormalizationStats {
  Vec mean;
  Vec std;
};

/// Feature-vector classification data with a per-row split assignment.
struct VectorDataset {
  Mat features;  // rows = samples
  std::vector<std::size_t> labels;
  std::vector<Split> split;  // empty until split() is applied
  std::size_t n_classes = 0;
  std::vector<std::string> feature_names;
  NormalizationStats stats;  // filled by normalize()

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dims() const noexcept { return features.cols; }
  std::span<const double> row(std::size_t i) const {
    return {features.data.data() + i * features.cols, features.cols};
  }
  std::size_t count(Split s) const;
};

/// Two interleaved planar spirals (1.75 turns, unit outer radius) with
/// isotropic Gaussian feature noise. d_x = 2, K = 2.
VectorDataset gen_two_spirals(std::size_t n_per_class, double noise_std, std::uint64_t seed);

/// K spherical Gaussian clusters. Centres sit on a circle in the first two
/// coordinates with neighbouring centres `separation` apart (on a line when
/// d_x = 1); for K = 2 the centres are +-separation/2 along the first axis.
VectorDataset gen_gaussian_blobs(std::size_t n_classes, std::size_t d_x, double separation,
                                 double noise_std, std::size_t n_per_class, std::uint64_t seed);

/// Bayes-optimal accuracy of the K = 2 blob problem: Phi(separation / (2 sigma)).
double two_blob_bayes_accuracy(double separation, double noise_std);

/// Header row names the columns; the column called "label" holds class ids.
/// Lines starting with '#' are comments and are skipped.
VectorDataset load_csv(const std::string& path);

/// Writes the header and rows; a nonempty `comment` becomes a leading '#' line.
void write_csv(const VectorDataset& data, const std::string& path, const std::string& comment = {});

/// Stratified split with seeded shuffling. Per label, val and test receive
/// floor(n * fraction) rows and train takes the remainder.
VectorDataset split(VectorDataset data, const std::array<double, 3>& fractions, std::uint64_t seed);

/// Standardizes every feature with train-split statistics (population std).
/// Features with zero train std are left unchanged and reported in `warnings`.
VectorDataset normalize(VectorDataset data, std::vector<std::string>* warnings = nullptr);

Batch view(const VectorDataset& data, Split which);

}  // namespace cdrop
