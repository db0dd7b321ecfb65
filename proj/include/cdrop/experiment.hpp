#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cdrop/data.hpp"
#include "cdrop/infercalib.hpp"
#include "cdrop/model.hpp"
#include "cdrop/train.hpp"

namespace cdrop {

/// Synthetic generator or CSV file plus split/normalization settings.
struct DataSource {
  std::string generator;  // "two_spirals", "gaussian_blobs", or empty for CSV
  std::string csv_path;
  std::size_t n_per_class = 100;
  double noise_std = 0.1;
  std::size_t n_classes = 2;  // gaussian_blobs
  std::size_t d_x = 2;        // gaussian_blobs
  double separation = 4.0;    // gaussian_blobs
  std::uint64_t seed = 0;
  std::array<double, 3> split{0.7, 0.15, 0.15};
  bool normalize = true;
};

struct InferenceConfig {
  std::size_t n_mc = 5;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<std::size_t> sweep_n_mc{1, 3, 5, 10, 20};
};

/// One validated experiment document. d_x and n_classes of the model are
/// taken from the data.
struct ExperimentConfig {
  std::string canonical_json;  // normalized source document
  std::string hash;            // FNV-1a 64 of canonical_json, hex
  ModelConfig model;
  TrainConfig training;
  DataSource data;
  InferenceConfig inference;
  std::filesystem::path output_dir{"cdrop-out"};
};

/// Parses and validates a JSON experiment document; unknown keys are a
/// ConfigError. CDROP_OUTPUT_ROOT, when set, prefixes a relative output_dir.
ExperimentConfig parse_experiment(const std::string& json_text);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Generator-only document: {"generator": ..., parameters...}.
VectorDataset generate_dataset(const std::string& json_text);

VectorDataset materialize(const DataSource& source, std::vector<std::string>* warnings = nullptr);

struct TrainOutcome {
  RunHistory history;
  Metrics test;
  std::filesystem::path checkpoint;
};

struct CalibrationOutcome {
  ReliabilityBins bins;
  EceReport report;
  Metrics test;
};

/// A configured experiment: data, model and (after train/load) parameters.
/// Artifacts go to the configured output directory only.
class Experiment {
public:
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig& config() const noexcept { return config_; }
  const Model& model() const noexcept { return model_; }
  const VectorDataset& data() const noexcept { return data_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  bool has_params() const noexcept { return params_.has_value(); }
  const ModelParams& params() const;

  /// Writes checkpoint.txt/.bin, history.csv and train_summary.json.
  TrainOutcome train(const EpochCallback& on_epoch = {});
  void load_checkpoint(const std::filesystem::path& descriptor);

  /// Test-split metrics; writes metrics.json.
  Metrics evaluate(std::uint64_t seed);
  /// Writes reliability.csv and calibration.json for the test split.
  CalibrationOutcome calibrate(std::uint64_t seed);
  /// Writes mc_sweep.csv.
  std::vector<SweepRow> mc_sweep(const std::vector<std::size_t>& n_mc_values);

  /// Class probabilities for a raw (unnormalized) feature vector.
  Vec predict(std::span<const double> x, std::uint64_t seed) const;

  std::filesystem::path output_path(const std::string& name) const;

private:
  std::string provenance_comment() const;
  void write_text(const std::string& name, const std::string& body) const;

  ExperimentConfig config_;
  std::vector<std::string> warnings_;
  VectorDataset data_;
  Model model_;
  std::optional<ModelParams> params_;
};

/// Comparative study of None / NaiveDrift / Continuum on one data source.
struct ComparisonOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<double> p_grid{0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> m_grid{5, 10, 50, 100};
  std::vector<std::uint64_t> selection_seeds{100};
  std::size_t n_mc = 5;
  bool include_naive = true;
};

struct ComparisonRun {
  std::string mode;
  double p = 0.0;
  double m = 0.0;
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double val_loss = 0.0;
  std::optional<RenewalRates> rates;
  ModelParams params;
};

struct GridPoint {
  double p = 0.0;
  double m = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct ModeSummary {
  std::string mode;
  double p = 0.0;
  double m = 0.0;
  double median_train_accuracy = 0.0;
  double median_test_accuracy = 0.0;
  double median_gap = 0.0;
};

struct ComparisonResult {
  std::vector<GridPoint> continuum_grid;
  std::vector<GridPoint> naive_grid;
  std::vector<ComparisonRun> runs;
  std::vector<ModeSummary> summary;
  std::string summary_csv() const;
  std::string runs_csv() const;
  std::string grid_csv() const;
};

/// Selects the best (p, m) (Continuum) and p (NaiveDrift) by mean validation
/// accuracy over the selection seeds (ties: lower validation loss), then
/// trains every mode on every seed.
ComparisonResult run_comparison(const ExperimentConfig& base, const ComparisonOptions& options);

/// Writes comparison_summary.csv, comparison_runs.csv and comparison_grid.csv
/// to the configured output directory.
void write_comparison(const ExperimentConfig& base, const ComparisonResult& result);

std::string fnv1a_hex(const std::string& text);

}  // namespace cdrop
