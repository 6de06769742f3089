#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "stiffsearch/cem.hpp"

using namespace stiffsearch;
using Catch::Matchers::WithinAbs;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_CASE("configuration validation") {
  CemConfig ok;
  CHECK_NOTHROW(ok.validate());
  CemConfig c = ok;
  c.n_samples = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ok;
  c.n_samples = 10;
  c.elite_frac = 0.1;  // only one elite sample: covariance would be degenerate
  CHECK_THROWS_AS(c.validate(), Error);
  c = ok;
  c.elite_frac = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ok;
  c.elite_frac = 1.2;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ok;
  c.max_iters = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ok;
  c.min_covariance_floor = -1e-9;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ok;
  c.convergence_tol = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("elite refit of the four-corner square") {
  std::vector<Eigen::VectorXd> samples = {vec2(0, 0), vec2(2, 0), vec2(0, 2), vec2(2, 2)};
  std::vector<double> costs = {1.0, 1.0, 1.0, 1.0};
  CemConfig cfg;
  cfg.n_samples = 4;
  cfg.elite_frac = 1.0;
  cfg.min_covariance_floor = 0.25;
  Rng rng(0);
  GmmParams out = elite_update(samples, costs, cfg, 1, rng);
  REQUIRE(out.components.size() == 1);
  const GmmComponent& comp = out.components[0];
  CHECK_THAT(comp.mean[0], WithinAbs(1.0, 1e-12));
  CHECK_THAT(comp.mean[1], WithinAbs(1.0, 1e-12));
  // Population covariance of the corners is the identity; the floor adds on.
  CHECK_THAT(comp.cov(0, 0), WithinAbs(1.25, 1e-12));
  CHECK_THAT(comp.cov(1, 1), WithinAbs(1.25, 1e-12));
  CHECK_THAT(comp.cov(0, 1), WithinAbs(0.0, 1e-12));
  CHECK_THAT(comp.weight, WithinAbs(1.0, 1e-12));
}

TEST_CASE("identical elites collapse to the covariance floor") {
  std::vector<Eigen::VectorXd> samples(6, vec2(0.4, -0.9));
  std::vector<double> costs(6, 2.0);
  CemConfig cfg;
  cfg.n_samples = 6;
  cfg.elite_frac = 1.0;
  cfg.min_covariance_floor = 1e-3;
  Rng rng(0);
  GmmParams out = elite_update(samples, costs, cfg, 1, rng);
  const GmmComponent& comp = out.components[0];
  CHECK_THAT(comp.mean[0], WithinAbs(0.4, 1e-12));
  CHECK_THAT(comp.mean[1], WithinAbs(-0.9, 1e-12));
  CHECK((comp.cov - 1e-3 * Eigen::Matrix2d::Identity()).norm() < 1e-12);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(comp.cov);
  CHECK(es.eigenvalues().minCoeff() >= 1e-3 - 1e-12);
}

TEST_CASE("two components land on two elite clusters") {
  std::vector<Eigen::VectorXd> samples;
  std::vector<double> costs;
  for (int i = 0; i < 10; ++i) {
    samples.push_back(vec2(0.0 + 0.01 * i, 0.0 - 0.01 * i));
    costs.push_back(1.0);
  }
  for (int i = 0; i < 10; ++i) {
    samples.push_back(vec2(10.0 - 0.01 * i, 10.0 + 0.01 * i));
    costs.push_back(1.0);
  }
  CemConfig cfg;
  cfg.n_samples = 20;
  cfg.elite_frac = 1.0;
  cfg.min_covariance_floor = 1e-6;
  Rng rng(7);
  GmmParams out = elite_update(samples, costs, cfg, 2, rng);
  REQUIRE(out.components.size() == 2);
  double wsum = 0.0;
  for (const auto& comp : out.components) wsum += comp.weight;
  CHECK_THAT(wsum, WithinAbs(1.0, 1e-9));

  auto near = [&](const Eigen::VectorXd& target) {
    double best = kInf;
    for (const auto& comp : out.components)
      best = std::min(best, (comp.mean - target).norm());
    return best;
  };
  CHECK(near(vec2(0.0, 0.0)) < 0.1);
  CHECK(near(vec2(10.0, 10.0)) < 0.1);
}

TEST_CASE("sampling is deterministic in the seed and honors weights") {
  GmmParams gmm = GmmParams::single(vec2(1.0, -1.0), vec2(0.5, 0.5));
  Rng r1(44), r2(44), r3(45);
  auto a = sample_gmm(gmm, 50, r1);
  auto b = sample_gmm(gmm, 50, r2);
  auto c = sample_gmm(gmm, 50, r3);
  REQUIRE(a.size() == 50);
  bool identical = true, differs = false;
  for (int i = 0; i < 50; ++i) {
    identical = identical && a[i] == b[i];
    differs = differs || a[i] != c[i];
  }
  CHECK(identical);
  CHECK(differs);

  // Zero-weight components are never drawn from.
  GmmParams two;
  two.components.push_back({vec2(0, 0), Eigen::Matrix2d::Identity(), 1.0});
  two.components.push_back({vec2(100, 100), Eigen::Matrix2d::Identity(), 0.0});
  Rng r4(9);
  for (const Eigen::VectorXd& s : sample_gmm(two, 100, r4)) CHECK(s.norm() < 50.0);

  // A fully collapsed covariance produces the mean exactly.
  GmmParams point = GmmParams::single(vec2(3.0, 4.0), vec2(0.0, 0.0));
  Rng r5(1);
  for (const Eigen::VectorXd& s : sample_gmm(point, 10, r5)) {
    CHECK(s[0] == 3.0);
    CHECK(s[1] == 4.0);
  }

  CHECK_THROWS_AS(sample_gmm(gmm, -1, r1), Error);
}

TEST_CASE("quadratic objective is minimized to 1e-2") {
  Eigen::VectorXd target(4);
  target << 0.3, -0.7, 0.1, 0.5;
  auto cost = [&](const Eigen::VectorXd& z) { return (z - target).squaredNorm(); };
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    CemConfig cfg;
    cfg.n_samples = 200;
    cfg.elite_frac = 0.1;
    cfg.max_iters = 50;
    cfg.min_covariance_floor = 1e-8;
    cfg.convergence_tol = 1e-6;
    cfg.seed = seed;
    GmmParams gmm = GmmParams::single(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Ones(4));
    CemResult res = optimize(cost, gmm, cfg);
    INFO("seed " << seed << " best-cost " << res.best_cost);
    CHECK((res.best - target).norm() <= 1e-2);
  }
}

TEST_CASE("constant cost surfaces do not break the update") {
  CemConfig cfg;
  cfg.n_samples = 30;
  cfg.elite_frac = 0.2;
  cfg.max_iters = 5;
  cfg.seed = 3;
  GmmParams gmm = GmmParams::single(vec2(0, 0), vec2(1, 1));
  CemResult res = optimize([](const Eigen::VectorXd&) { return 42.0; }, gmm, cfg);
  CHECK(res.best_cost == 42.0);
  CHECK(res.best.size() == 2);
  CHECK(int(res.trace.size()) == 5);
}

TEST_CASE("infeasible half-space still converges to the feasible optimum") {
  Eigen::VectorXd target = vec2(0.5, 0.5);
  auto cost = [&](const Eigen::VectorXd& z) {
    if (z[0] < 0.0) return kInf;
    return (z - target).squaredNorm();
  };
  CemConfig cfg;
  cfg.n_samples = 200;
  cfg.elite_frac = 0.1;
  cfg.max_iters = 40;
  cfg.min_covariance_floor = 1e-8;
  cfg.convergence_tol = 1e-6;
  cfg.seed = 11;
  GmmParams gmm = GmmParams::single(vec2(-1.0, -1.0), vec2(1.0, 1.0));
  CemResult res = optimize(cost, gmm, cfg);
  CHECK(std::isfinite(res.best_cost));
  CHECK(res.best[0] >= 0.0);
  CHECK((res.best - target).norm() <= 0.05);
}

TEST_CASE("an all-infeasible population is an explicit error") {
  CemConfig cfg;
  cfg.n_samples = 20;
  cfg.elite_frac = 0.2;
  cfg.max_iters = 3;
  GmmParams gmm = GmmParams::single(vec2(0, 0), vec2(1, 1));
  CHECK_THROWS_WITH(optimize([](const Eigen::VectorXd&) { return kInf; }, gmm, cfg),
                    Catch::Matchers::ContainsSubstring("infinite"));
}

TEST_CASE("a NaN cost is an explicit error") {
  CemConfig cfg;
  cfg.n_samples = 20;
  cfg.elite_frac = 0.2;
  GmmParams gmm = GmmParams::single(vec2(0, 0), vec2(1, 1));
  CHECK_THROWS_WITH(
      optimize([](const Eigen::VectorXd&) { return std::nan(""); }, gmm, cfg),
      Catch::Matchers::ContainsSubstring("NaN"));
}

TEST_CASE("trace bookkeeping: best-ever never worsens") {
  auto cost = [](const Eigen::VectorXd& z) { return std::abs(z[0] - 2.0) + z[1] * z[1]; };
  CemConfig cfg;
  cfg.n_samples = 60;
  cfg.elite_frac = 0.15;
  cfg.max_iters = 25;
  cfg.seed = 8;
  GmmParams gmm = GmmParams::single(vec2(0, 0), vec2(2, 2));
  CemResult res = optimize(cost, gmm, cfg);
  REQUIRE(!res.trace.empty());
  double prev = kInf;
  for (size_t i = 0; i < res.trace.size(); ++i) {
    const CemIteration& it = res.trace[i];
    CHECK(it.iteration == int(i) + 1);
    CHECK(it.best_cost <= prev + 1e-15);
    CHECK(it.elite_mean_cost >= it.best_cost - 1e-12);
    CHECK(it.sample_mean_cost >= it.elite_mean_cost - 1e-12);
    prev = it.best_cost;
  }
  CHECK(res.trace.back().best_cost == res.best_cost);
}

TEST_CASE("identical seeds reproduce the optimization exactly") {
  auto cost = [](const Eigen::VectorXd& z) { return (z.array() - 1.0).square().sum(); };
  CemConfig cfg;
  cfg.n_samples = 80;
  cfg.elite_frac = 0.1;
  cfg.max_iters = 15;
  cfg.seed = 1234;
  GmmParams gmm = GmmParams::single(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3));
  CemResult a = optimize(cost, gmm, cfg);
  CemResult b = optimize(cost, gmm, cfg);
  CHECK(a.best == b.best);
  CHECK(a.best_cost == b.best_cost);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].best_cost == b.trace[i].best_cost);
    CHECK(a.trace[i].sample_mean_cost == b.trace[i].sample_mean_cost);
    CHECK(a.trace[i].elite_mean_cost == b.trace[i].elite_mean_cost);
    CHECK(a.trace[i].max_cov_eigenvalue == b.trace[i].max_cov_eigenvalue);
  }
}

TEST_CASE("anchors keep an otherwise infeasible population alive") {
  const Eigen::VectorXd anchor = vec2(5.0, 5.0);
  auto cost = [&](const Eigen::VectorXd& z) {
    if ((z - anchor).lpNorm<Eigen::Infinity>() > 0.3) return kInf;
    return (z - anchor - vec2(0.1, 0.1)).squaredNorm();
  };
  CemConfig cfg;
  cfg.n_samples = 100;
  cfg.elite_frac = 0.1;
  cfg.max_iters = 25;
  cfg.min_covariance_floor = 1e-8;
  cfg.convergence_tol = 1e-8;
  cfg.seed = 6;
  GmmParams gmm = GmmParams::single(vec2(0, 0), vec2(1, 1));

  // Without the anchor every sample is infeasible.
  CHECK_THROWS_AS(optimize(cost, gmm, cfg), Error);

  cfg.anchors.push_back(anchor);
  CemResult res = optimize(cost, gmm, cfg);
  CHECK(std::isfinite(res.best_cost));
  CHECK((res.best - anchor).lpNorm<Eigen::Infinity>() <= 0.3);

  // Mismatched anchor dimension is rejected up front.
  cfg.anchors = {Eigen::VectorXd::Zero(3)};
  CHECK_THROWS_AS(optimize(cost, gmm, cfg), Error);
}
