#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdrop/error.hpp"
#include "cdrop/infercalib.hpp"

using namespace cdrop;

namespace {

ModelConfig cont_config(double p = 0.3, double m = 5) {
  ModelConfig c;
  c.d_x = 2;
  c.d_z = 3;
  c.n_classes = 3;
  c.scheme = {StepMethod::Rk4, 4, true};
  c.dropout = DropoutMode::continuum(p, m);
  c.drift_hidden = {6};
  c.classifier_hidden = {5};
  return c;
}

// Independent ECE: bin by floor(10 c) (clamped), accumulate raw sums.
double naive_ece(const std::vector<Vec>& probs, const std::vector<std::size_t>& labels) {
  double conf_sum[10] = {}, hit_sum[10] = {};
  int count[10] = {};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto it = std::max_element(probs[i].begin(), probs[i].end());
    const double c = *it;
    const int b = std::min(9, static_cast<int>(std::floor(c * 10)));
    conf_sum[b] += c;
    hit_sum[b] += static_cast<std::size_t>(it - probs[i].begin()) == labels[i] ? 1 : 0;
    ++count[b];
  }
  double e = 0;
  for (int b = 0; b < 10; ++b)
    if (count[b]) e += std::abs(hit_sum[b] - conf_sum[b]) / probs.size();
  return e;
}

}  // namespace

TEST_CASE("predictive distribution of two hand-picked samples") {
  const std::vector<Vec> s{{0, 0}, {2, 0}};
  const auto d = PredictiveDistribution::from_samples(s);
  CHECK(d.mean() == Vec{1, 0});
  REQUIRE(d.has_covariance());
  const Mat& c = d.covariance();
  CHECK(c(0, 0) == 2.0);
  CHECK(c(0, 1) == 0.0);
  CHECK(c(1, 0) == 0.0);
  CHECK(c(1, 1) == 0.0);
}

TEST_CASE("single-sample distribution has no covariance") {
  const std::vector<Vec> s{{1, 2, 3}};
  const auto d = PredictiveDistribution::from_samples(s);
  CHECK(d.mean() == Vec{1, 2, 3});
  try {
    (void)d.covariance();
    FAIL("expected InsufficientSamples");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientSamples);
  }
  CHECK_THROWS_AS(PredictiveDistribution::from_samples(std::span<const Vec>{}), Error);
}

TEST_CASE("sample covariance is symmetric and positive semidefinite") {
  RandomStream rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(6), d = 2;
    std::vector<Vec> s(n, Vec(d));
    for (auto& v : s)
      for (auto& x : v) x = rng.normal();
    const Mat c = PredictiveDistribution::from_samples(s).covariance();
    CHECK(std::abs(c(0, 1) - c(1, 0)) <= 1e-12);
    CHECK(c(0, 0) >= 0);
    CHECK(c(1, 1) >= 0);
    // Smallest eigenvalue of a symmetric 2x2.
    const double tr = c(0, 0) + c(1, 1), det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    const double lam = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4 * det)));
    CHECK(lam >= -1e-10 * tr);
  }
}

TEST_CASE("mc_predict with a zero drift") {
  const Model model(cont_config());
  RandomStream rng(2);
  ModelParams p = init_params(model.config(), rng);
  for (auto& l : p.drift.layers) {
    std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  const Vec x{0.4, -0.9};
  const auto r = mc_predict(model, p, x, 8, rng);
  const Vec z0 = affine_forward(p.zeta, x);
  for (std::size_t i = 0; i < z0.size(); ++i) CHECK(r.distribution.mean()[i] == doctest::Approx(z0[i]).epsilon(1e-15));
  for (double v : r.distribution.covariance().data) CHECK(std::abs(v) <= 1e-28);
  CHECK(r.logits == mlp_forward(p.classifier, r.distribution.mean()));
}

TEST_CASE("mc_predict averages latents before the classifier") {
  const Model model(cont_config(0.4, 10));
  RandomStream rng(3);
  const ModelParams p = init_params(model.config(), rng);
  const Vec x{1.0, 0.5};
  RandomStream a(11), b(11);
  const auto r = mc_predict(model, p, x, 6, a);
  // Rebuild the replicas from the documented seed order.
  std::vector<Vec> latents;
  for (int j = 0; j < 6; ++j) {
    RandomStream rep(b.next_u64());
    latents.push_back(model.forward_train(p, x, rep).solve.z_final);
  }
  const auto d = PredictiveDistribution::from_samples(latents);
  CHECK(r.distribution.mean() == d.mean());
  CHECK(r.probs == softmax(mlp_forward(p.classifier, d.mean())));

  const Model none([] {
    auto c = cont_config();
    c.dropout = DropoutMode::none();
    return c;
  }());
  CHECK_THROWS_AS(mc_predict(none, p, x, 3, a), Error);
  CHECK_THROWS_AS(mc_predict(model, p, x, 0, a), Error);
}

TEST_CASE("MC latent mean converges at the inverse square-root rate") {
  const Model model(cont_config(0.4, 10));
  RandomStream rng(4);
  const ModelParams p = init_params(model.config(), rng);
  const Vec x{0.8, -0.3};
  // Distance between two independent estimates scales like sigma*sqrt(2/n).
  std::vector<double> logn, logerr;
  for (std::size_t n : {30, 300, 3000}) {
    double sq = 0;
    const int reps = 4;
    for (int r = 0; r < reps; ++r) {
      RandomStream s1(derive_seed(n, r, 1)), s2(derive_seed(n, r, 2));
      const Vec m1 = mc_predict(model, p, x, n, s1).distribution.mean();
      const Vec m2 = mc_predict(model, p, x, n, s2).distribution.mean();
      for (std::size_t i = 0; i < m1.size(); ++i) sq += (m1[i] - m2[i]) * (m1[i] - m2[i]);
    }
    logn.push_back(std::log(double(n)));
    logerr.push_back(0.5 * std::log(sq / reps));
  }
  const double slope = (logerr[2] - logerr[0]) / (logn[2] - logn[0]);
  CHECK(std::abs(slope + 0.5) <= 0.15);
}

TEST_CASE("reliability bins") {
  std::vector<Vec> probs(20, Vec{0.0, 1.0});
  std::vector<std::size_t> labels(20, 1);
  const auto top = reliability_bins(probs, labels);
  CHECK(top.bins[9].count == 20);
  CHECK(top.bins[9].accuracy == 1.0);
  CHECK(top.bins[9].mean_confidence == 1.0);
  CHECK(top.total() == 20);
  for (std::size_t b = 0; b < 9; ++b) CHECK(top.bins[b].count == 0);
  for (std::size_t b = 0; b < kReliabilityBins; ++b) {
    CHECK(top.bins[b].low == doctest::Approx(b / 10.0));
    CHECK(top.bins[b].high == doctest::Approx((b + 1) / 10.0));
  }
  CHECK(ece(top).ece == 0.0);

  CHECK_THROWS_AS(reliability_bins(probs, std::vector<std::size_t>(3, 0)), Error);
  CHECK_THROWS_AS(reliability_bins(std::vector<Vec>{}, std::vector<std::size_t>{}), Error);
}

TEST_CASE("perfectly calibrated stream has vanishing gaps") {
  RandomStream rng(5);
  const std::size_t n = 100000;
  std::vector<Vec> probs(n);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = rng.uniform(0.5, 1.0);
    probs[i] = {c, 1 - c};
    labels[i] = rng.bernoulli(c) ? 0 : 1;
  }
  const auto bins = reliability_bins(probs, labels);
  for (const auto& b : bins.bins)
    if (b.count > 0) CHECK(std::abs(b.accuracy - b.mean_confidence) < 0.02);
  CHECK(ece(bins).ece < 0.02);
}

TEST_CASE("ece examples") {
  ReliabilityBins bins;
  for (std::size_t b = 0; b < kReliabilityBins; ++b) {
    bins.bins[b].low = b / 10.0;
    bins.bins[b].high = (b + 1) / 10.0;
  }
  bins.bins[8] = {0.8, 0.9, 0.9, 0.6, 100};
  const auto r = ece(bins);
  CHECK(r.ece == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(r.total == 100);
  CHECK(r.gaps[8] == doctest::Approx(0.3).epsilon(1e-14));

  ReliabilityBins empty;
  try {
    ece(empty);
    FAIL("expected ZeroCount");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroCount);
  }
}

TEST_CASE("ece agrees with a naive recomputation and ignores order") {
  RandomStream rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 50 + rng.below(500), k = 2 + rng.below(4);
    std::vector<Vec> probs(n);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vec logits(k);
      for (auto& v : logits) v = 3 * rng.normal();
      probs[i] = softmax(logits);
      labels[i] = rng.below(k);
    }
    const double e = ece(reliability_bins(probs, labels)).ece;
    CHECK(e == doctest::Approx(naive_ece(probs, labels)).epsilon(1e-12));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    std::vector<Vec> p2(n);
    std::vector<std::size_t> l2(n);
    for (std::size_t i = 0; i < n; ++i) {
      p2[i] = probs[order[i]];
      l2[i] = labels[order[i]];
    }
    CHECK(ece(reliability_bins(p2, l2)).ece == doctest::Approx(e).epsilon(1e-12));
  }
}

TEST_CASE("mc_sweep table") {
  const Model model(cont_config(0.3, 5));
  RandomStream rng(7);
  const ModelParams p = init_params(model.config(), rng);
  std::vector<Vec> xs(30, Vec(2));
  Batch split;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = {rng.normal(), rng.normal()};
    split.inputs.push_back(xs[i]);
    split.labels.push_back(rng.below(3));
  }
  const std::size_t nmc[] = {1, 3, 5, 10, 20};
  const std::uint64_t seeds[] = {0, 1, 2};
  const auto rows = mc_sweep(model, p, split, nmc, seeds);
  REQUIRE(rows.size() == 5);
  for (std::size_t r = 0; r < 5; ++r) {
    CHECK(rows[r].n_mc == nmc[r]);
    CHECK(rows[r].accuracies.size() == 3);
    CHECK(rows[r].median_accuracy == median(rows[r].accuracies));
  }
  const auto again = mc_sweep(model, p, split, nmc, seeds);
  for (std::size_t r = 0; r < 5; ++r) CHECK(again[r].accuracies == rows[r].accuracies);
}

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK_THROWS_AS(median({}), Error);
}
