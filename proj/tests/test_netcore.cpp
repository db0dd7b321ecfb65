#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "cdrop/error.hpp"
#include "cdrop/netcore.hpp"
#include "grad_check.hpp"

using namespace cdrop;
using cdrop::testing::check_gradient;

namespace {

Mat random_mat(std::size_t r, std::size_t c, RandomStream& rng) {
  Mat m(r, c);
  for (auto& v : m.data) v = rng.uniform(-1, 1);
  return m;
}

Vec random_vec(std::size_t n, RandomStream& rng) {
  Vec v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

double naive_act(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0 ? x : 0.0;
    default: return x;
  }
}

// Second implementation of the layer stack: plain nested loops.
Vec naive_mlp(const Mlp& net, Vec x) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Vec y(layer.out());
    for (std::size_t r = 0; r < layer.out(); ++r) {
      double s = layer.bias[r];
      for (std::size_t c = 0; c < layer.in(); ++c) s += layer.weight(r, c) * x[c];
      y[r] = l + 1 < net.layers.size() ? naive_act(layer.activation, s) : s;
    }
    x = std::move(y);
  }
  return x;
}

Mlp random_mlp(std::vector<std::size_t> widths, Activation act, RandomStream& rng) {
  Mlp net = init_mlp(widths, act, rng);
  for (auto& l : net.layers)
    for (auto& b : l.bias) b = rng.uniform(-0.5, 0.5);
  return net;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST_CASE("affine_forward") {
  RandomStream rng(1);
  AffineParams p{Mat(3, 2), Vec{1, 2, 3}, Activation::Identity};
  CHECK(affine_forward(p, Vec{5, -7}) == Vec{1, 2, 3});

  AffineParams id{Mat(3, 3), Vec(3, 0.0), Activation::Identity};
  for (int i = 0; i < 3; ++i) id.weight(i, i) = 1.0;
  CHECK(affine_forward(id, Vec{0.25, -4, 9}) == Vec{0.25, -4, 9});

  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t in = 1 + rng.below(8), out = 1 + rng.below(8);
    AffineParams a{random_mat(out, in, rng), random_vec(out, rng), Activation::Identity};
    const Vec x = random_vec(in, rng);
    const Vec y = affine_forward(a, x);
    for (std::size_t r = 0; r < out; ++r) {
      double s = a.bias[r];
      for (std::size_t c = 0; c < in; ++c) s += a.weight(r, c) * x[c];
      CHECK(std::abs(y[r] - s) <= 1e-14);
    }
  }
  CHECK_THROWS_AS(affine_forward(p, Vec{1, 2, 3}), Error);
}

TEST_CASE("affine_backward matches finite differences") {
  RandomStream rng(2);
  AffineParams a{random_mat(4, 3, rng), random_vec(4, rng), Activation::Identity};
  const Vec x = random_vec(3, rng), c = random_vec(4, rng);
  Mat dw(4, 3);
  Vec db(4, 0.0);
  affine_backward(a, x, c, dw, db);
  auto loss = [&] { return dot(affine_forward(a, x), c); };
  CHECK(check_gradient(a.weight.data, dw.data, loss, 1e-5, 1e-6) == 0);
  CHECK(check_gradient(a.bias, db, loss, 1e-5, 1e-6) == 0);
}

TEST_CASE("drift_forward examples") {
  RandomStream rng(3);
  Mlp zero = init_mlp(std::vector<std::size_t>{4, 8, 3}, Activation::Tanh, rng);
  for (auto& l : zero.layers) {
    std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  CHECK(drift_forward(zero, 0.7, Vec{1, 2, 3}) == Vec(3, 0.0));

  // Single linear layer with a zero t-column: an affine map of z.
  Mlp lin;
  lin.layers.push_back({random_mat(3, 4, rng), random_vec(3, rng), Activation::Identity});
  for (std::size_t r = 0; r < 3; ++r) lin.layers[0].weight(r, 0) = 0.0;
  const Vec z{0.3, -0.2, 0.9};
  const Vec a = drift_forward(lin, 0.0, z), b = drift_forward(lin, 123.0, z);
  CHECK(a == b);

  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + rng.below(6);
    const Mlp net = random_mlp({d + 1, 1 + rng.below(8), 1 + rng.below(8), d}, Activation::Tanh, rng);
    const Vec zz = random_vec(d, rng);
    const double t = rng.uniform(0, 2);
    Vec in{t};
    in.insert(in.end(), zz.begin(), zz.end());
    const Vec expect = naive_mlp(net, in), got = drift_forward(net, t, zz);
    for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(expect[i] - got[i]) <= 1e-14);
  }
  CHECK_THROWS_AS(drift_forward(lin, 0.0, Vec{1, 2}), Error);
}

TEST_CASE("drift_backward examples") {
  RandomStream rng(4);
  const Mlp net = random_mlp({4, 6, 3}, Activation::Tanh, rng);
  const Vec z{0.1, 0.2, 0.3};
  const auto zero = drift_backward(net, 0.5, z, Vec(3, 0.0));
  CHECK(zero.input == Vec(3, 0.0));
  for (const auto& w : zero.params.weight)
    for (double v : w.data) CHECK(v == 0.0);

  Mlp lin;
  lin.layers.push_back({random_mat(3, 4, rng), random_vec(3, rng), Activation::Identity});
  const Vec c{0.5, -1.5, 2.0};
  const auto g = drift_backward(lin, 0.2, z, c);
  REQUIRE(g.input.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0;
    for (std::size_t r = 0; r < 3; ++r) s += lin.layers[0].weight(r, j + 1) * c[r];
    CHECK(g.input[j] == doctest::Approx(s).epsilon(1e-15));
  }
  CHECK_THROWS_AS(drift_backward(lin, 0.2, z, Vec{1, 2}), Error);
}

TEST_CASE("mlp and drift gradients match finite differences on random shapes") {
  RandomStream rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const Activation act = trial % 3 == 0 ? Activation::Relu : Activation::Tanh;
    const std::size_t d = 1 + rng.below(8);
    std::vector<std::size_t> widths{d + 1};
    const std::size_t depth = 1 + rng.below(3);
    for (std::size_t k = 0; k < depth; ++k) widths.push_back(1 + rng.below(8));
    widths.push_back(d);
    Mlp net = random_mlp(widths, act, rng);
    Vec z = random_vec(d, rng);
    const double t = rng.uniform(0, 1);
    const Vec c = random_vec(d, rng);

    HiddenMasks masks;
    const bool masked = trial % 2 == 1;
    if (masked)
      for (std::size_t k = 0; k + 1 < widths.size() - 1; ++k) {
        Vec s(widths[k + 1]);
        for (auto& v : s) v = rng.bernoulli(0.7) ? 1.0 / 0.7 : 0.0;
        masks.scale.push_back(s);
      }
    const HiddenMasks* mp = masked ? &masks : nullptr;

    const auto g = drift_backward(net, t, z, c, mp);
    auto loss = [&] { return dot(drift_forward(net, t, z, nullptr, mp), c); };
    // ReLU kinks: perturbations crossing zero are astronomically unlikely with
    // continuous random draws at h = 1e-5, so the same tolerance applies.
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      CHECK(check_gradient(net.layers[l].weight.data, g.params.weight[l].data, loss, 1e-5, 1e-6) == 0);
      CHECK(check_gradient(net.layers[l].bias, g.params.bias[l], loss, 1e-5, 1e-6) == 0);
    }
    CHECK(check_gradient(z, g.input, loss, 1e-5, 1e-6) == 0);
  }
}

TEST_CASE("softmax and cross-entropy") {
  const Vec uniform(5, 0.3);
  CHECK(cross_entropy_from_logits(uniform, 2) == doctest::Approx(std::log(5.0)).epsilon(1e-15));
  CHECK(cross_entropy(softmax(uniform), 4) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  CHECK(cross_entropy_from_logits(Vec{50, 0, 0}, 0) < 1e-20);
  CHECK(std::isfinite(cross_entropy_from_logits(Vec{1000, -1000}, 1)));
  CHECK(cross_entropy_from_logits(Vec{1000, -1000}, 1) == doctest::Approx(2000));

  RandomStream rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.below(7);
    Vec v = random_vec(k, rng);
    for (auto& x : v) x *= 20;
    const Vec p = softmax(v);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-12);
    const double c = rng.uniform(-100, 100);
    Vec shifted = v;
    for (auto& x : shifted) x += c;
    const Vec q = softmax(shifted);
    for (std::size_t i = 0; i < k; ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-12);
  }

  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + rng.below(6);
    Vec v = random_vec(k, rng);
    const std::size_t label = rng.below(k);
    const Vec g = cross_entropy_backward(v, label);
    auto loss = [&] { return cross_entropy_from_logits(v, label); };
    CHECK(check_gradient(v, g, loss, 1e-5, 1e-6) == 0);
  }
  CHECK_THROWS_AS(cross_entropy_backward(Vec{1, 2}, 2), Error);
  CHECK_THROWS_AS(cross_entropy_from_logits(Vec{1, 2}, 5), Error);
  try {
    cross_entropy(Vec{0.5, 0.5}, 3);
    FAIL("expected InvalidLabel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidLabel);
  }
}

TEST_CASE("init_mlp determinism and bounds") {
  const std::vector<std::size_t> widths{5, 16, 16, 3};
  RandomStream a(99), b(99);
  const Mlp n1 = init_mlp(widths, Activation::Tanh, a);
  const Mlp n2 = init_mlp(widths, Activation::Tanh, b);
  for (std::size_t l = 0; l < n1.layers.size(); ++l) {
    CHECK(n1.layers[l].weight.data == n2.layers[l].weight.data);
    CHECK(n1.layers[l].bias == n2.layers[l].bias);
  }
  for (std::size_t l = 0; l < n1.layers.size(); ++l) {
    const auto& layer = n1.layers[l];
    const bool linear = l + 1 == n1.layers.size();
    const double bound = linear ? std::sqrt(6.0 / (layer.in() + layer.out())) : std::sqrt(6.0 / layer.in());
    double biggest = 0;
    for (double w : layer.weight.data) biggest = std::max(biggest, std::abs(w));
    CHECK(biggest <= bound);
    CHECK(biggest > 0.5 * bound);
    for (double v : layer.bias) CHECK(v == 0.0);
  }
  RandomStream c(1);
  CHECK_THROWS_AS(init_mlp(std::vector<std::size_t>{3, 0, 2}, Activation::Tanh, c), Error);

  const AffineParams z = init_affine(3, 4, c);
  CHECK(z.weight.rows == 4);
  CHECK(z.weight.cols == 3);
  for (double w : z.weight.data) CHECK(std::abs(w) <= std::sqrt(6.0 / 7.0));
}

TEST_CASE("activation names round trip") {
  for (auto a : {Activation::Identity, Activation::Tanh, Activation::Relu})
    CHECK(parse_activation(to_string(a)) == a);
  CHECK_THROWS_AS(parse_activation("swish"), Error);
}

TEST_CASE("check_finite") {
  CHECK_NOTHROW(check_finite(Vec{1, 2}, "v"));
  CHECK_THROWS_AS(check_finite(Vec{1, NAN}, "v"), Error);
}
