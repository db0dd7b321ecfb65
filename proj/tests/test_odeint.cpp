#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "cdrop/error.hpp"
#include "cdrop/odeint.hpp"
#include "grad_check.hpp"

using namespace cdrop;
using cdrop::testing::check_gradient;

namespace {

Mlp random_drift(std::size_t d, std::size_t hidden, RandomStream& rng) {
  Mlp net = init_mlp(std::vector<std::size_t>{d + 1, hidden, hidden, d}, Activation::Tanh, rng);
  for (auto& l : net.layers)
    for (auto& b : l.bias) b = rng.uniform(-0.3, 0.3);
  return net;
}

// gamma(t, z) = a z for a scalar state.
Mlp linear_drift(double a) {
  Mlp net;
  DenseLayer layer;
  layer.weight = Mat(1, 2);
  layer.weight(0, 1) = a;
  layer.bias = Vec(1, 0.0);
  net.layers.push_back(layer);
  return net;
}

// gamma(t, z) = c, independent of t and z.
Mlp constant_drift(const Vec& c) {
  Mlp net;
  DenseLayer layer;
  layer.weight = Mat(c.size(), c.size() + 1);
  layer.bias = c;
  net.layers.push_back(layer);
  return net;
}

double linear_error(StepMethod method, std::size_t steps) {
  const Mlp drift = linear_drift(-1.0);
  const auto r = integrate(drift, Vec{1.0}, {method, steps, true}, 1.0);
  return std::abs(r.z_final[0] - std::exp(-1.0));
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST_CASE("uniform grid") {
  const auto g = uniform_grid(0.7, 7);
  REQUIRE(g.size() == 8);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == 0.7);
  CHECK_THROWS_AS(uniform_grid(1.0, 0), Error);
}

TEST_CASE("constant drift is integrated exactly") {
  const Vec c{0.5, -2.0, 3.25};
  const Vec z0{1.0, 1.0, -1.0};
  for (auto method : {StepMethod::Euler, StepMethod::Rk4}) {
    const auto r = integrate(constant_drift(c), z0, {method, 7, true}, 2.0);
    for (int i = 0; i < 3; ++i) CHECK(r.z_final[i] == doctest::Approx(z0[i] + 2.0 * c[i]).epsilon(1e-14));
  }
}

TEST_CASE("fully inactive path freezes the state bit-exactly") {
  RandomStream rng(1);
  const Mlp drift = random_drift(3, 8, rng);
  const Vec z0{0.3, -0.7, 1.1};
  // One switch per dimension right after t = 0: inactive for the whole horizon.
  const IndicatorPath path(1.0, {{1e-300}, {1e-300}, {1e-300}});
  for (auto method : {StepMethod::Euler, StepMethod::Rk4}) {
    const auto r = integrate(drift, z0, {method, 5, true}, 1.0, &path);
    CHECK(r.z_final == z0);
    const Vec g{1.5, -2.0, 0.25};
    const auto back = integrate_backward(drift, r.tape, g);
    CHECK(back.z0 == g);
    for (const auto& w : back.drift.weight)
      for (double v : w.data) CHECK(v == 0.0);
    for (const auto& b : back.drift.bias)
      for (double v : b) CHECK(v == 0.0);
  }
}

TEST_CASE("linear decay against the analytic solution") {
  CHECK(linear_error(StepMethod::Rk4, 100) < 1e-8);
  const double rk = linear_error(StepMethod::Rk4, 10) / linear_error(StepMethod::Rk4, 20);
  CHECK(rk >= 12.0);
  CHECK(rk <= 20.0);
  const double eu = linear_error(StepMethod::Euler, 10) / linear_error(StepMethod::Euler, 20);
  CHECK(eu >= 1.7);
  CHECK(eu <= 2.4);
}

TEST_CASE("tape invariants") {
  RandomStream rng(2);
  const Mlp drift = random_drift(4, 6, rng);
  const auto path = sample_indicator_path({3, 3}, 1.3, 4, rng);
  const auto r = integrate(drift, Vec{0.1, 0.2, 0.3, 0.4}, {StepMethod::Rk4, 6, true}, 1.3, &path);
  const auto& steps = r.tape.steps;
  REQUIRE(!steps.empty());
  CHECK(steps.front().t == 0.0);
  double total = 0;
  for (const auto& s : steps) {
    CHECK(s.h > 0.0);
    total += s.h;
    // Mask is the path state anywhere inside the step.
    CHECK(s.mask == path.indicator_at(s.t + 0.5 * s.h));
  }
  CHECK(std::abs(total - 1.3) <= 1e-10);
  CHECK(steps.back().t + steps.back().h == doctest::Approx(1.3).epsilon(1e-15));
  CHECK(steps.size() >= 6 + path.total_switches() - 1);
}

TEST_CASE("no-switch path reproduces the plain solve bit-exactly") {
  RandomStream rng(3);
  const Mlp drift = random_drift(3, 8, rng);
  const Vec z0{0.4, -0.1, 0.8};
  const IndicatorPath quiet(2.0, {{}, {}, {}});
  for (auto method : {StepMethod::Euler, StepMethod::Rk4}) {
    const StepScheme s{method, 9, true};
    CHECK(integrate(drift, z0, s, 2.0, &quiet).z_final == integrate(drift, z0, s, 2.0).z_final);
  }
}

TEST_CASE("Euler integration equals the hand-iterated masked residual recursion") {
  RandomStream rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(6), n = 1 + rng.below(10);
    const double T = rng.uniform(0.2, 3.0);
    const Mlp drift = random_drift(d, 2 + rng.below(8), rng);
    Vec z0(d);
    for (auto& v : z0) v = rng.uniform(-1, 1);
    const auto grid = uniform_grid(T, n);

    // One random mask per uniform step (every path starts active, so the first
    // step is unmasked), realized as a path that switches on grid points.
    std::vector<Vec> masks(n, Vec(d, 1.0));
    std::vector<std::vector<double>> switches(d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 1; k < n; ++k) {
        masks[k][i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        if (masks[k][i] != masks[k - 1][i]) switches[i].push_back(grid[k]);
      }
    const IndicatorPath path(T, switches);

    Vec z = z0;
    for (std::size_t k = 0; k < n; ++k)
      z = discrete_equivalence_step(drift, z, masks[k], grid[k + 1] - grid[k], grid[k]);

    const auto aligned = integrate(drift, z0, {StepMethod::Euler, n, true}, T, &path);
    REQUIRE(aligned.tape.steps.size() == n);
    CHECK(aligned.z_final == z);
    const auto fixed = integrate(drift, z0, {StepMethod::Euler, n, false}, T, &path);
    CHECK(fixed.z_final == z);
  }
}

TEST_CASE("discrete_equivalence_step examples") {
  RandomStream rng(5);
  const Mlp drift = random_drift(3, 5, rng);
  const Vec z{0.2, 0.4, -0.6};
  CHECK(discrete_equivalence_step(drift, z, Vec(3, 0.0), 1.0) == z);
  const Vec g = drift_forward(drift, 0.0, z);
  const Vec res = discrete_equivalence_step(drift, z, Vec(3, 1.0), 1.0);
  for (int i = 0; i < 3; ++i) CHECK(res[i] == z[i] + g[i]);
  CHECK_THROWS_AS(discrete_equivalence_step(drift, z, Vec(2, 1.0), 1.0), Error);
}

TEST_CASE("integrate_backward matches finite differences of the frozen solve") {
  RandomStream rng(6);
  for (int trial = 0; trial < 12; ++trial) {
    const auto method = trial % 2 ? StepMethod::Rk4 : StepMethod::Euler;
    const bool aligned = trial % 4 < 2;
    const std::size_t d = 4;
    Mlp drift = random_drift(d, 6, rng);
    Vec z0(d);
    for (auto& v : z0) v = rng.uniform(-1, 1);
    const double T = 1.0;
    const auto path = sample_indicator_path({2.5, 2.5}, T, d, rng);
    const Vec c{0.7, -1.1, 0.4, 0.9};
    const StepScheme scheme{method, 8, aligned};

    const auto fwd = integrate(drift, z0, scheme, T, &path);
    const auto g = integrate_backward(drift, fwd.tape, c);
    auto loss = [&] { return dot(integrate(drift, z0, scheme, T, &path).z_final, c); };
    for (std::size_t l = 0; l < drift.layers.size(); ++l) {
      CHECK(check_gradient(drift.layers[l].weight.data, g.drift.weight[l].data, loss, 1e-5, 1e-5) == 0);
      CHECK(check_gradient(drift.layers[l].bias, g.drift.bias[l], loss, 1e-5, 1e-5) == 0);
    }
    CHECK(check_gradient(z0, g.z0, loss, 1e-5, 1e-5) == 0);

    const auto zero = integrate_backward(drift, fwd.tape, Vec(d, 0.0));
    CHECK(zero.z0 == Vec(d, 0.0));
  }
}

TEST_CASE("integrate_backward rejects a tape from different parameters") {
  RandomStream rng(7);
  Mlp drift = random_drift(2, 4, rng);
  const auto r = integrate(drift, Vec{0.1, 0.2}, {StepMethod::Rk4, 4, true}, 1.0);
  drift.layers[0].bias[0] += 1e-3;
  try {
    integrate_backward(drift, r.tape, Vec{1, 1});
    FAIL("expected TapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TapeMismatch);
  }
}

TEST_CASE("integrate error paths") {
  RandomStream rng(8);
  const Mlp drift = random_drift(2, 4, rng);
  CHECK_THROWS_AS(integrate(drift, Vec{1, 2, 3}, {}, 1.0), Error);
  const auto wrong_dims = IndicatorPath::always_active(3, 1.0);
  CHECK_THROWS_AS(integrate(drift, Vec{1, 2}, {}, 1.0, &wrong_dims), Error);
  const auto wrong_T = IndicatorPath::always_active(2, 2.0);
  CHECK_THROWS_AS(integrate(drift, Vec{1, 2}, {}, 1.0, &wrong_T), Error);
  try {
    integrate(linear_drift(1e100), Vec{1.0}, {StepMethod::Euler, 4, true}, 10.0);
    FAIL("expected NonFiniteState");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteState);
  }
}

TEST_CASE("step method names") {
  CHECK(parse_step_method("rk4") == StepMethod::Rk4);
  CHECK(parse_step_method("euler") == StepMethod::Euler);
  CHECK_THROWS_AS(parse_step_method("rk45"), Error);
}
