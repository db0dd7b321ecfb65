#include "cdrop/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cdrop/error.hpp"
#include "cdrop/infercalib.hpp"

namespace cdrop {

void TrainConfig::validate() const {
  if (batch_size == 0) fail(ErrorCode::ConfigError, "batch_size must be positive");
  if (!(learning_rate > 0.0)) fail(ErrorCode::ConfigError, "learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    fail(ErrorCode::ConfigError, "Adam betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) fail(ErrorCode::ConfigError, "Adam epsilon must be positive");
  if (val_n_mc == 0) fail(ErrorCode::ConfigError, "validation n_mc must be positive");
}

AdamState AdamState::zeros_like(const ModelParams& params) {
  AdamState s;
  for (auto t : params.tensors()) {
    s.first.emplace_back(t.size(), 0.0);
    s.second.emplace_back(t.size(), 0.0);
  }
  return s;
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> first,
                 std::span<double> second, double lr, double beta1, double beta2, double eps,
                 std::uint64_t t) {
  if (grads.size() != params.size() || first.size() != params.size() ||
      second.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch, "Adam buffers must match the parameter tensor");
  }
  if (t < 1) fail(ErrorCode::InvalidArgument, "Adam step index starts at 1");
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    first[i] = beta1 * first[i] + (1.0 - beta1) * g;
    second[i] = beta2 * second[i] + (1.0 - beta2) * g * g;
    const double m_hat = first[i] / c1;
    const double v_hat = second[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  if (g.size() != p.size() || state.first.size() != p.size()) {
    fail(ErrorCode::ShapeMismatch, "gradient and optimizer state do not match the parameters");
  }
  ++state.step;
  for (std::size_t k = 0; k < p.size(); ++k) {
    adam_update(p[k], g[k], state.first[k], state.second[k], lr, beta1, beta2, eps, state.step);
  }
}

void sgd_step(ModelParams& params, const ModelParams& grads, double lr) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  if (g.size() != p.size()) fail(ErrorCode::ShapeMismatch, "gradient does not match the parameters");
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (g[k].size() != p[k].size()) fail(ErrorCode::ShapeMismatch, "gradient tensor shape mismatch");
    for (std::size_t i = 0; i < p[k].size(); ++i) p[k][i] -= lr * g[k][i];
  }
}

std::string RunHistory::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_loss,val_acc,wall_ms\n";
  for (const auto& r : epochs) {
    os << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_accuracy << ','
       << r.wall_ms << '\n';
  }
  return os.str();
}

Metrics evaluate(const Model& model, const ModelParams& params, const Batch& split, std::size_t n_mc,
                 RandomStream& rng) {
  if (split.inputs.empty()) fail(ErrorCode::EmptySplit, "cannot evaluate an empty split");
  Metrics m;
  m.count = split.inputs.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < split.inputs.size(); ++i) {
    const Vec probs = predict_probs(model, params, split.inputs[i], n_mc, rng);
    const auto predicted =
        static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    hits += predicted == split.labels[i] ? 1 : 0;
    m.mean_loss += -std::log(std::max(probs.at(split.labels[i]), std::numeric_limits<double>::min()));
  }
  m.accuracy = static_cast<double>(hits) / static_cast<double>(m.count);
  m.mean_loss /= static_cast<double>(m.count);
  return m;
}

TrainResult train_loop(const Model& model, const TrainConfig& config, const VectorDataset& data,
                       const EpochCallback& on_epoch) {
  RandomStream init_rng(derive_seed(config.seed, 0));
  return train_loop(model, config, data, init_params(model.config(), init_rng), on_epoch);
}

TrainResult train_loop(const Model& model, const TrainConfig& config, const VectorDataset& data,
                       ModelParams initial, const EpochCallback& on_epoch) {
  config.validate();
  const Batch train = view(data, Split::Train);
  const Batch val = view(data, Split::Val);
  if (train.inputs.empty() || val.inputs.empty()) {
    fail(ErrorCode::EmptySplit, "training needs nonempty train and validation splits");
  }

  TrainResult result{initial, {}};
  ModelParams params = std::move(initial);
  AdamState adam = AdamState::zeros_like(params);
  double lr = config.learning_rate;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t since_lr_change = 0;

  std::vector<std::size_t> order(train.inputs.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    RandomStream shuffle_rng(derive_seed(config.seed, 1, epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    const std::uint64_t sample_root = derive_seed(config.seed, 2, epoch);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Batch batch;
      std::vector<std::uint64_t> seeds;
      for (std::size_t k = start; k < end; ++k) {
        batch.inputs.push_back(train.inputs[order[k]]);
        batch.labels.push_back(train.labels[order[k]]);
        seeds.push_back(derive_seed(sample_root, k));
      }
      const LossAndGrads lg = loss_and_grads(model, params, batch, seeds);
      loss_sum += lg.loss * static_cast<double>(end - start);
      if (config.optimizer == OptimizerKind::Adam) {
        adam_step(params, lg.grads, adam, lr, config.beta1, config.beta2, config.epsilon);
      } else {
        sgd_step(params, lg.grads, lr);
      }
    }

    RandomStream val_rng(derive_seed(config.seed, 3, epoch));
    const Metrics vm = evaluate(model, params, val, config.val_n_mc, val_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = vm.mean_loss;
    rec.val_accuracy = vm.accuracy;
    rec.learning_rate = lr;
    if (config.record_wall_time) {
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
                        .count();
    }
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (vm.mean_loss < best_val) {
      best_val = vm.mean_loss;
      result.history.best_epoch = result.history.epochs.size() - 1;
      result.params = params;
      since_best = 0;
      since_lr_change = 0;
    } else {
      ++since_best;
      ++since_lr_change;
      if (config.lr_halving_patience > 0 && since_lr_change >= config.lr_halving_patience) {
        lr *= 0.5;
        since_lr_change = 0;
      }
      if (config.early_stop_patience > 0 && since_best >= config.early_stop_patience) {
        result.history.stopped_early = true;
        break;
      }
    }
  }
  if (!config.restore_best) result.params = std::move(params);
  return result;
}

}  // namespace cdrop
