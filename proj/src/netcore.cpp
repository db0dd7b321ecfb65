#include "cdrop/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cdrop/error.hpp"

namespace cdrop {

namespace {

void expect_len(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    std::ostringstream os;
    os << what << ": expected length " << want << ", got " << got;
    fail(ErrorCode::ShapeMismatch, os.str());
  }
}

double activate(Activation a, double v) {
  switch (a) {
    case Activation::Tanh:
      return std::tanh(v);
    case Activation::Relu:
      return v > 0.0 ? v : 0.0;
    case Activation::Identity:
      break;
  }
  return v;
}

double activation_slope(Activation a, double pre) {
  switch (a) {
    case Activation::Tanh: {
      const double y = std::tanh(pre);
      return 1.0 - y * y;
    }
    case Activation::Relu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Identity:
      break;
  }
  return 1.0;
}

void matvec(const Mat& w, std::span<const double> x, std::span<const double> b, Vec& out) {
  out.assign(b.begin(), b.end());
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = &w.data[r * w.cols];
    // Four independent partial sums; the order is fixed, so results are reproducible.
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t c = 0;
    for (; c + 4 <= w.cols; c += 4) {
      a0 += row[c] * x[c];
      a1 += row[c + 1] * x[c + 1];
      a2 += row[c + 2] * x[c + 2];
      a3 += row[c + 3] * x[c + 3];
    }
    for (; c < w.cols; ++c) a0 += row[c] * x[c];
    out[r] += (a0 + a1) + (a2 + a3);
  }
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "identity" || name == "linear") return Activation::Identity;
  fail(ErrorCode::ConfigError, "unknown activation '" + name + "'");
}

const char* to_string(Activation a) noexcept {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Relu:
      return "relu";
    case Activation::Identity:
      break;
  }
  return "identity";
}

MlpGrads MlpGrads::zeros_like(const Mlp& net) {
  MlpGrads g;
  for (const auto& layer : net.layers) {
    g.weight.emplace_back(layer.weight.rows, layer.weight.cols);
    g.bias.emplace_back(layer.bias.size(), 0.0);
  }
  return g;
}

void MlpGrads::add(const MlpGrads& other) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    for (std::size_t i = 0; i < weight[l].data.size(); ++i) weight[l].data[i] += other.weight[l].data[i];
    for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
  }
}

Vec affine_forward(const AffineParams& params, std::span<const double> x) {
  expect_len(x.size(), params.in(), "affine input");
  Vec out;
  matvec(params.weight, x, params.bias, out);
  return out;
}

void affine_backward(const AffineParams& params, std::span<const double> x,
                     std::span<const double> cotangent, Mat& d_weight, Vec& d_bias) {
  expect_len(x.size(), params.in(), "affine input");
  expect_len(cotangent.size(), params.out(), "affine cotangent");
  for (std::size_t r = 0; r < params.out(); ++r) {
    const double g = cotangent[r];
    if (g == 0.0) continue;
    d_bias[r] += g;
    double* row = &d_weight.data[r * d_weight.cols];
    for (std::size_t c = 0; c < params.in(); ++c) row[c] += g * x[c];
  }
}

Vec mlp_forward(const Mlp& net, std::span<const double> x, MlpCache* cache,
                const HiddenMasks* masks) {
  expect_len(x.size(), net.input_dim(), "network input");
  if (cache) {
    cache->inputs.resize(net.layers.size());
    cache->pre.resize(net.layers.size());
  }
  Vec current(x.begin(), x.end());
  Vec pre;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    matvec(layer.weight, current, layer.bias, pre);
    if (cache) {
      cache->inputs[l] = std::move(current);
      cache->pre[l] = pre;
    }
    current.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) current[i] = activate(layer.activation, pre[i]);
    if (masks && !masks->empty() && l + 1 < net.layers.size()) {
      const Vec& s = masks->scale[l];
      for (std::size_t i = 0; i < current.size(); ++i) current[i] *= s[i];
    }
  }
  return current;
}

Vec mlp_backward(const Mlp& net, const MlpCache& cache, std::span<const double> cotangent,
                 MlpGrads& grads, const HiddenMasks* masks) {
  expect_len(cotangent.size(), net.output_dim(), "network cotangent");
  Vec upstream(cotangent.begin(), cotangent.end());
  Vec next;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    if (masks && !masks->empty() && l + 1 < net.layers.size()) {
      const Vec& s = masks->scale[l];
      for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] *= s[i];
    }
    for (std::size_t i = 0; i < upstream.size(); ++i) {
      upstream[i] *= activation_slope(layer.activation, cache.pre[l][i]);
    }
    affine_backward(layer, cache.inputs[l], upstream, grads.weight[l], grads.bias[l]);
    next.assign(layer.in(), 0.0);
    for (std::size_t r = 0; r < layer.out(); ++r) {
      const double g = upstream[r];
      if (g == 0.0) continue;
      const double* row = &layer.weight.data[r * layer.weight.cols];
      for (std::size_t c = 0; c < layer.in(); ++c) next[c] += row[c] * g;
    }
    std::swap(upstream, next);
  }
  return upstream;
}

Vec drift_forward(const Mlp& drift, double t, std::span<const double> z, MlpCache* cache,
                  const HiddenMasks* masks) {
  expect_len(z.size() + 1, drift.input_dim(), "drift input [t, z]");
  Vec input(z.size() + 1);
  input[0] = t;
  std::copy(z.begin(), z.end(), input.begin() + 1);
  return mlp_forward(drift, input, cache, masks);
}

GradBundle drift_backward(const Mlp& drift, double t, std::span<const double> z,
                          std::span<const double> cotangent, const HiddenMasks* masks) {
  MlpCache cache;
  drift_forward(drift, t, z, &cache, masks);
  GradBundle out{MlpGrads::zeros_like(drift), {}};
  Vec d_input = mlp_backward(drift, cache, cotangent, out.params, masks);
  out.input.assign(d_input.begin() + 1, d_input.end());
  return out;
}

Vec softmax(std::span<const double> logits) {
  if (logits.empty()) fail(ErrorCode::ShapeMismatch, "softmax of an empty vector");
  const double top = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) fail(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " out of range");
  return -std::log(probs[label]);
}

double cross_entropy_from_logits(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    fail(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " out of range");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - top);
  return top + std::log(total) - logits[label];
}

Vec cross_entropy_backward(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    fail(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " out of range");
  }
  Vec g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

Mlp init_mlp(std::span<const std::size_t> widths, Activation hidden, RandomStream& rng) {
  if (widths.size() < 2) fail(ErrorCode::ConfigError, "a network needs input and output widths");
  for (std::size_t w : widths) {
    if (w == 0) fail(ErrorCode::ConfigError, "network layer widths must be positive");
  }
  Mlp net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    const bool is_output = l + 2 == widths.size();
    DenseLayer layer{Mat(out, in), Vec(out, 0.0), is_output ? Activation::Identity : hidden};
    const bool nonlinear = layer.activation != Activation::Identity;
    const double bound = nonlinear ? std::sqrt(6.0 / static_cast<double>(in))
                                   : std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : layer.weight.data) w = rng.uniform(-bound, bound);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

AffineParams init_affine(std::size_t in, std::size_t out, RandomStream& rng) {
  const std::size_t widths[] = {in, out};
  return std::move(init_mlp(widths, Activation::Identity, rng).layers.front());
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorCode::InvalidArgument, std::string(what) + " contains non-finite values");
  }
}

}  // namespace cdrop
