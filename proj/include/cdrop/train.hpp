#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdrop/data.hpp"
#include "cdrop/model.hpp"

namespace cdrop {

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t early_stop_patience = 10;  // 0 disables
  std::size_t lr_halving_patience = 2;   // 0 disables
  std::uint64_t seed = 0;
  std::size_t val_n_mc = 5;  // Monte-Carlo samples for continuum validation
  bool record_wall_time = true;
  bool restore_best = true;  // false: return the final-epoch parameters

  void validate() const;
};

/// First and second moment estimates, one buffer per parameter tensor.
struct AdamState {
  std::vector<Vec> first;
  std::vector<Vec> second;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ModelParams& params);
};

/// Bias-corrected Adam update on one tensor at step t >= 1.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> first,
                 std::span<double> second, double lr, double beta1, double beta2, double eps,
                 std::uint64_t t);

/// Advances state.step and applies adam_update to every tensor.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps);

void sgd_step(ModelParams& params, const ModelParams& grads, double lr);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double wall_ms = 0.0;
  double learning_rate = 0.0;
};

struct RunHistory {
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;  // index into epochs
  bool stopped_early = false;

  /// CSV with header epoch,train_loss,val_loss,val_acc,wall_ms.
  std::string to_csv() const;
};

struct TrainResult {
  ModelParams params;  // best validation epoch, or the last one without restore_best
  RunHistory history;
};

struct Metrics {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::size_t count = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeds: parameters from derive_seed(seed, 0); epoch e shuffles with
/// derive_seed(seed, 1, e); training sample at position i of epoch e draws
/// its masks from derive_seed(derive_seed(seed, 2, e), i); validation of
/// epoch e uses RandomStream(derive_seed(seed, 3, e)).
TrainResult train_loop(const Model& model, const TrainConfig& config, const VectorDataset& data,
                       const EpochCallback& on_epoch = {});

TrainResult train_loop(const Model& model, const TrainConfig& config, const VectorDataset& data,
                       ModelParams initial, const EpochCallback& on_epoch = {});

/// Accuracy and mean cross-entropy over a split. Continuum models predict via
/// mc_predict with n_mc samples drawn from `rng`.
Metrics evaluate(const Model& model, const ModelParams& params, const Batch& split, std::size_t n_mc,
                 RandomStream& rng);

}  // namespace cdrop
