#include "cdrop/model.hpp"

#include <cmath>
#include <sstream>

#include "cdrop/error.hpp"
#include "cdrop/parallel.hpp"

namespace cdrop {

const char* to_string(DropoutKind k) noexcept {
  switch (k) {
    case DropoutKind::Continuum:
      return "continuum";
    case DropoutKind::NaiveDrift:
      return "naive_drift";
    case DropoutKind::None:
      break;
  }
  return "none";
}

void ModelConfig::validate() const {
  if (d_x == 0 || d_z == 0) fail(ErrorCode::ConfigError, "d_x and d_z must be positive");
  if (n_classes < 2) fail(ErrorCode::ConfigError, "n_classes must be at least 2");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) fail(ErrorCode::ConfigError, "T must be positive");
  scheme.validate();
  for (std::size_t w : drift_hidden) {
    if (w == 0) fail(ErrorCode::ConfigError, "drift hidden widths must be positive");
  }
  for (std::size_t w : classifier_hidden) {
    if (w == 0) fail(ErrorCode::ConfigError, "classifier hidden widths must be positive");
  }
  if (dropout.kind == DropoutKind::Continuum) {
    DropoutSpec s = dropout.spec;
    s.horizon = horizon;
    try {
      s.validate();
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, e.what());
    }
  }
  if (dropout.kind == DropoutKind::NaiveDrift &&
      !(dropout.naive_rate >= 0.0 && dropout.naive_rate < 1.0)) {
    fail(ErrorCode::ConfigError, "naive drift dropout rate must lie in [0, 1)");
  }
}

std::vector<std::span<double>> ModelParams::tensors() {
  std::vector<std::span<double>> out{zeta.weight.data, zeta.bias};
  for (Mlp* net : {&drift, &classifier}) {
    for (auto& layer : net->layers) {
      out.emplace_back(layer.weight.data);
      out.emplace_back(layer.bias);
    }
  }
  return out;
}

std::vector<std::span<const double>> ModelParams::tensors() const {
  std::vector<std::span<const double>> out{zeta.weight.data, zeta.bias};
  for (const Mlp* net : {&drift, &classifier}) {
    for (const auto& layer : net->layers) {
      out.emplace_back(layer.weight.data);
      out.emplace_back(layer.bias);
    }
  }
  return out;
}

std::size_t ModelParams::size() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto t : z.tensors()) std::fill(t.begin(), t.end(), 0.0);
  return z;
}

void ModelParams::add(const ModelParams& other) {
  auto mine = tensors();
  const auto theirs = other.tensors();
  for (std::size_t k = 0; k < mine.size(); ++k) {
    for (std::size_t i = 0; i < mine[k].size(); ++i) mine[k][i] += theirs[k][i];
  }
}

void ModelParams::scale(double s) {
  for (auto t : tensors()) {
    for (double& v : t) v *= s;
  }
}

ModelParams init_params(const ModelConfig& config, RandomStream& rng) {
  config.validate();
  ModelParams p;
  p.zeta = init_affine(config.d_x, config.d_z, rng);

  std::vector<std::size_t> drift_widths{config.d_z + 1};
  drift_widths.insert(drift_widths.end(), config.drift_hidden.begin(), config.drift_hidden.end());
  drift_widths.push_back(config.d_z);
  p.drift = init_mlp(drift_widths, config.drift_activation, rng);

  std::vector<std::size_t> cls_widths{config.d_z};
  cls_widths.insert(cls_widths.end(), config.classifier_hidden.begin(),
                    config.classifier_hidden.end());
  cls_widths.push_back(config.n_classes);
  p.classifier = init_mlp(cls_widths, config.classifier_activation, rng);
  return p;
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.dropout.kind == DropoutKind::Continuum) {
    config_.dropout.spec.horizon = config_.horizon;
    rates_ = config_.dropout.approximate_rates ? approx_rates(config_.dropout.spec)
                                               : solve_rates(config_.dropout.spec);
  }
}

IndicatorPath Model::sample_path(RandomStream& rng) const {
  if (!rates_) fail(ErrorCode::WrongMode, "indicator paths exist only in continuum mode");
  return sample_indicator_path(*rates_, config_.horizon, config_.d_z, rng, config_.event_cap);
}

HiddenMasks Model::sample_drift_masks(RandomStream& rng) const {
  HiddenMasks masks;
  const double p = config_.dropout.naive_rate;
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t width : config_.drift_hidden) {
    Vec s(width);
    for (double& v : s) v = rng.bernoulli(p) ? 0.0 : keep_scale;
    masks.scale.push_back(std::move(s));
  }
  return masks;
}

ForwardPass Model::forward_frozen(const ModelParams& params, std::span<const double> x,
                                  const IndicatorPath* path,
                                  const HiddenMasks* drift_masks) const {
  ForwardPass pass;
  pass.input.assign(x.begin(), x.end());
  pass.z0 = affine_forward(params.zeta, x);
  if (path) pass.path = *path;
  if (drift_masks) pass.drift_masks = *drift_masks;
  pass.solve = integrate(params.drift, pass.z0, config_.scheme, config_.horizon,
                         pass.path ? &*pass.path : nullptr,
                         pass.drift_masks.empty() ? nullptr : &pass.drift_masks);
  pass.logits = mlp_forward(params.classifier, pass.solve.z_final, &pass.classifier_cache);
  return pass;
}

ForwardPass Model::forward_train(const ModelParams& params, std::span<const double> x,
                                 RandomStream& rng) const {
  switch (config_.dropout.kind) {
    case DropoutKind::Continuum: {
      const IndicatorPath path = sample_path(rng);
      return forward_frozen(params, x, &path, nullptr);
    }
    case DropoutKind::NaiveDrift: {
      const HiddenMasks masks = sample_drift_masks(rng);
      return forward_frozen(params, x, nullptr, &masks);
    }
    case DropoutKind::None:
      break;
  }
  return forward_frozen(params, x, nullptr, nullptr);
}

Vec Model::forward_eval(const ModelParams& params, std::span<const double> x) const {
  if (config_.dropout.kind == DropoutKind::Continuum) {
    fail(ErrorCode::WrongMode, "continuum models predict through Monte-Carlo inference");
  }
  return forward_frozen(params, x, nullptr, nullptr).logits;
}

void Model::backward(const ModelParams& params, const ForwardPass& pass,
                     std::span<const double> dl_dlogits, ModelParams& grads) const {
  MlpGrads cls = MlpGrads::zeros_like(params.classifier);
  const Vec dz_final = mlp_backward(params.classifier, pass.classifier_cache, dl_dlogits, cls);
  const IntegrationGrads ode = integrate_backward(params.drift, pass.solve.tape, dz_final);
  affine_backward(params.zeta, pass.input, ode.z0, grads.zeta.weight, grads.zeta.bias);
  for (std::size_t l = 0; l < params.drift.layers.size(); ++l) {
    auto& dst = grads.drift.layers[l];
    for (std::size_t i = 0; i < dst.weight.data.size(); ++i) dst.weight.data[i] += ode.drift.weight[l].data[i];
    for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += ode.drift.bias[l][i];
  }
  for (std::size_t l = 0; l < params.classifier.layers.size(); ++l) {
    auto& dst = grads.classifier.layers[l];
    for (std::size_t i = 0; i < dst.weight.data.size(); ++i) dst.weight.data[i] += cls.weight[l].data[i];
    for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += cls.bias[l][i];
  }
}

LossAndGrads loss_and_grads(const Model& model, const ModelParams& params, const Batch& batch,
                            std::span<const std::uint64_t> sample_seeds) {
  const std::size_t n = batch.inputs.size();
  if (n == 0) fail(ErrorCode::EmptyInput, "loss_and_grads needs a nonempty batch");
  if (batch.labels.size() != n || sample_seeds.size() != n) {
    fail(ErrorCode::LengthMismatch, "batch inputs, labels and seeds must have equal length");
  }
  std::vector<double> losses(n);
  std::vector<ModelParams> per_sample(n);
  parallel_chunks(n, n, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      RandomStream rng(sample_seeds[i]);
      const ForwardPass pass = model.forward_train(params, batch.inputs[i], rng);
      losses[i] = cross_entropy_from_logits(pass.logits, batch.labels[i]);
      per_sample[i] = params.zeros_like();
      model.backward(params, pass, cross_entropy_backward(pass.logits, batch.labels[i]),
                     per_sample[i]);
    }
  });
  LossAndGrads out{0.0, params.zeros_like()};
  for (std::size_t i = 0; i < n; ++i) {
    out.loss += losses[i];
    out.grads.add(per_sample[i]);
  }
  out.loss /= static_cast<double>(n);
  out.grads.scale(1.0 / static_cast<double>(n));
  return out;
}

}  // namespace cdrop
