#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "stiffsearch/acquisition.hpp"

using namespace stiffsearch;
using Catch::Matchers::WithinAbs;

namespace {

GpModel small_model(const Kernel& k = Kernel{0.3, 1.0, 0.01}) {
  return GpModel::fit(k, {{0.2, 0.3}, {0.7, 0.8}, {0.5, 0.1}}, {1.2, 0.4, 2.0});
}

Region whole_domain_region(const DomainGrid& grid) {
  Region g;
  g.rect = grid.bounds();
  for (int i = 0; i < grid.size(); ++i) g.cells.push_back(i);
  return g;
}

}  // namespace

TEST_CASE("region posterior of the prior model averages prior covariances") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 6, 6);
  Kernel k{0.3, 2.0, 0.01};
  GpModel prior = GpModel::fit(k, {}, {});
  Region g = whole_domain_region(grid);
  RegionPosterior rp = region_posterior(prior, g, grid);
  CHECK(rp.mean == 0.0);

  double sum = 0.0;
  auto centers = grid.centers();
  for (const Point& a : centers)
    for (const Point& b : centers) sum += kernel_eval(k, a, b);
  CHECK_THAT(rp.variance, WithinAbs(sum / double(centers.size() * centers.size()), 1e-12));
}

TEST_CASE("single-cell region equals the point prediction") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 6, 6);
  GpModel m = small_model();
  const int idx = 14;
  Region g;
  g.cells = {idx};
  RegionPosterior rp = region_posterior(m, g, grid);
  Prediction p = m.predict_one(grid.center(idx));
  CHECK_THAT(rp.mean, WithinAbs(p.mean, 1e-12));
  CHECK_THAT(rp.variance, WithinAbs(p.variance, 1e-12));
}

TEST_CASE("region covering no grid cells is rejected") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 6, 6);
  GpModel m = small_model();
  Region empty;
  CHECK_THROWS_AS(region_posterior(m, empty, grid), Error);
}

TEST_CASE("region posterior matches Monte-Carlo posterior draws") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 6, 6);
  RegionGrid regions(grid, 2, 2, 1.0, 0.9);
  Kernel k{0.3, 1.0, 0.01};
  std::vector<Point> xs = {{0.15, 0.2}, {0.4, 0.55}, {0.8, 0.3}, {0.6, 0.85}, {0.25, 0.7}};
  std::vector<double> ys = {1.0, 2.2, 0.5, 1.4, 1.9};
  GpModel m = GpModel::fit(k, xs, ys);
  oracle::GpOracle ref =
      oracle::GpOracle::build(k.lengthscale, k.signal_variance, k.noise_variance, xs, ys);

  const Region& g = regions.regions()[0];  // 3x3 block of cells
  REQUIRE(g.cells.size() == 9);
  std::vector<Point> pts;
  for (int idx : g.cells) pts.push_back(grid.center(idx));

  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  ref.predict_joint(pts, mean, cov);
  Eigen::LLT<Eigen::MatrixXd> llt(cov + 1e-12 * Eigen::MatrixXd::Identity(9, 9));
  REQUIRE(llt.info() == Eigen::Success);
  Eigen::MatrixXd L = llt.matrixL();

  std::mt19937_64 rng(77);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = 100'000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z(9);
    for (int j = 0; j < 9; ++j) z[j] = gauss(rng);
    double fg = (mean + L * z).mean();
    s1 += fg;
    s2 += fg * fg;
  }
  double mc_mean = s1 / n;
  double mc_var = s2 / n - mc_mean * mc_mean;

  RegionPosterior rp = region_posterior(m, g, grid);
  double se_mean = std::sqrt(mc_var / n);
  double se_var = mc_var * std::sqrt(2.0 / (n - 1));
  INFO("mc mean=" << mc_mean << " var=" << mc_var);
  CHECK(std::abs(rp.mean - mc_mean) <= 3.0 * se_mean);
  CHECK(std::abs(rp.variance - mc_var) <= 3.0 * se_var);
}

TEST_CASE("region classification thresholds") {
  CHECK(classify_region({10.0, 1e-12}, 1.0, 0.9));
  CHECK_FALSE(classify_region({0.0, 1.0}, 0.5, 0.5));  // prior mass below a positive tau
  CHECK(classify_region({2.0, 0.0}, 1.0, 0.9));        // degenerate: certain above
  CHECK_FALSE(classify_region({0.5, 0.0}, 1.0, 0.9));  // degenerate: certain below

  DomainGrid grid(Rect{0, 1, 0, 1}, 6, 6);
  RegionGrid regions(grid, 3, 3, 1.0, 0.9);
  GpModel m = small_model();
  auto a = classify_regions(m, regions, grid);
  auto b = classify_regions(m, regions, grid);
  CHECK(a == b);
  CHECK(a.size() == 9);
}

TEST_CASE("region grid validates its thresholds") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 6, 6);
  CHECK_THROWS_AS(RegionGrid(grid, 2, 2, 1.0, 0.0), Error);
  CHECK_THROWS_AS(RegionGrid(grid, 2, 2, 1.0, 1.0), Error);
  CHECK_THROWS_AS(RegionGrid(grid, 0, 2, 1.0, 0.9), Error);
}

TEST_CASE("expected-reward field matches the exhaustive-outcome oracle") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 5, 5);
  const double tau = 1.0, conf = 0.9;
  RegionGrid regions(grid, 2, 2, tau, conf);
  Kernel k{0.3, 1.0, 0.01};
  std::vector<Point> xs = {{0.2, 0.3}, {0.7, 0.8}, {0.5, 0.1}};
  std::vector<double> ys = {1.2, 0.4, 2.0};
  GpModel m = GpModel::fit(k, xs, ys);
  oracle::GpOracle ref =
      oracle::GpOracle::build(k.lengthscale, k.signal_variance, k.noise_variance, xs, ys);

  AcquisitionField field = aas_field(m, regions, grid);
  REQUIRE(field.values.size() == grid.size());

  // Brute force: for every candidate cell, enumerate the predictive outcome y
  // through quantile midpoints, condition the joint Gaussian on each outcome,
  // and count how often the updated region posterior classifies.
  const int Q = 10'000;
  auto centers = grid.centers();
  Eigen::VectorXd expect = Eigen::VectorXd::Zero(grid.size());
  for (const Region& g : regions.regions()) {
    std::vector<Point> pts;
    for (int idx : g.cells) pts.push_back(grid.center(idx));
    const int mcells = int(pts.size());
    for (int j = 0; j < grid.size(); ++j) {
      std::vector<Point> joint_pts = pts;
      joint_pts.push_back(centers[j]);
      Eigen::VectorXd mean;
      Eigen::MatrixXd cov;
      ref.predict_joint(joint_pts, mean, cov);

      double mu_g = mean.head(mcells).mean();
      double var_g = std::max(0.0, cov.topLeftCorner(mcells, mcells).sum() /
                                       double(mcells * mcells));
      double c = cov.col(mcells).head(mcells).mean();
      double mu_x = mean[mcells];
      double s_obs2 = std::max(0.0, cov(mcells, mcells)) +
                      ref.y_scale * ref.y_scale * k.noise_variance;

      // A region that classifies from current data alone has spent its
      // reward; both sides count only new classifications.
      if (classify_region({mu_g, var_g}, tau, conf)) continue;

      double var_post = std::max(0.0, var_g - c * c / s_obs2);
      double sd_post = std::sqrt(var_post);
      int hits = 0;
      for (int q = 0; q < Q; ++q) {
        double y = mu_x + std::sqrt(s_obs2) * normal_quantile((q + 0.5) / Q);
        double mu_post = mu_g + c / s_obs2 * (y - mu_x);
        bool classified = sd_post > 0.0 ? normal_cdf((mu_post - tau) / sd_post) > conf
                                        : mu_post > tau;
        if (classified) ++hits;
      }
      expect[j] += double(hits) / Q;
    }
  }

  for (int j = 0; j < grid.size(); ++j) {
    INFO("cell " << j << " field=" << field.values[j] << " oracle=" << expect[j]);
    CHECK_THAT(field.values[j], WithinAbs(expect[j], 1e-3));
  }
  // The surface is informative on this instance, not degenerate.
  CHECK(field.values.maxCoeff() > 0.01);
}

TEST_CASE("already-classified regions contribute nothing to the reward surface") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 5, 5);
  // tau far below any plausible posterior: every region classifies immediately.
  RegionGrid regions(grid, 2, 2, -10.0, 0.9);
  GpModel m = small_model();
  AcquisitionField field = aas_field(m, regions, grid);
  CHECK(field.values.maxCoeff() == 0.0);
  CHECK(field.values.minCoeff() == 0.0);
}

TEST_CASE("level-set state starts wide and the first update uses the prior spread") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 5, 5);
  LseState st = LseState::init(grid, 9.0, 0.0);
  CHECK(st.lower.size() == grid.size());
  for (int j = 0; j < grid.size(); ++j) {
    CHECK(st.lower[j] == -LseState::kWide);
    CHECK(st.upper[j] == LseState::kWide);
  }

  Kernel k{0.3, 1.0, 0.01};
  GpModel prior = GpModel::fit(k, {}, {});
  AcquisitionField a0 = lse_update_and_field(prior, st, grid);
  for (int j = 0; j < grid.size(); ++j) {
    CHECK_THAT(a0.values[j], WithinAbs(3.0, 1e-12));  // beta^1/2 * sigma_f
    CHECK_THAT(st.lower[j], WithinAbs(-3.0, 1e-12));
    CHECK_THAT(st.upper[j], WithinAbs(3.0, 1e-12));
  }
}

TEST_CASE("level-set intervals follow the scripted intersection oracle") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 5, 5);
  const double beta = 9.0, h = 0.8;
  LseState st = LseState::init(grid, beta, h);

  Kernel k{0.3, 1.0, 0.01};
  std::vector<Point> xs = {{0.2, 0.2}, {0.8, 0.8}};
  std::vector<double> ys = {2.0, 0.5};
  GpModel m1 = GpModel::fit(k, xs, ys);
  xs.push_back({0.5, 0.5});
  ys.push_back(1.5);
  xs.push_back({0.3, 0.7});
  ys.push_back(1.0);
  GpModel m2 = GpModel::fit(k, xs, ys);

  Eigen::VectorXd lo = Eigen::VectorXd::Constant(grid.size(), -LseState::kWide);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(grid.size(), LseState::kWide);
  for (const GpModel* m : {&m1, &m2}) {
    AcquisitionField a = lse_update_and_field(*m, st, grid);
    auto preds = m->predict(grid.centers());
    for (int j = 0; j < grid.size(); ++j) {
      double sd = std::sqrt(preds[j].variance);
      double qlo = preds[j].mean - 3.0 * sd;
      double qhi = preds[j].mean + 3.0 * sd;
      double nlo = std::max(lo[j], qlo);
      double nhi = std::min(hi[j], qhi);
      if (nlo > nhi) {
        nlo = qlo;
        nhi = qhi;
      }
      // Intervals only shrink, and the ambiguity is the cited min-gap form.
      CHECK(nlo >= lo[j] - 1e-12);
      CHECK(nhi <= hi[j] + 1e-12);
      lo[j] = nlo;
      hi[j] = nhi;
      CHECK_THAT(st.lower[j], WithinAbs(lo[j], 1e-12));
      CHECK_THAT(st.upper[j], WithinAbs(hi[j], 1e-12));
      CHECK_THAT(a.values[j], WithinAbs(std::min(hi[j] - h, h - lo[j]), 1e-12));
    }
  }
  CHECK(st.reset_count == 0);
}

TEST_CASE("points classified above the level go ambiguity-negative") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 5, 5);
  const double h = 2.5;
  LseState st = LseState::init(grid, 9.0, h);
  Kernel k{0.15, 1.0, 1e-8};
  GpModel m = GpModel::fit(k, {grid.center(12), grid.center(0)}, {5.0, 0.0});
  AcquisitionField a = lse_update_and_field(m, st, grid);
  // The strongly observed cell's confidence interval sits entirely above h.
  CHECK(st.lower[12] > h);
  CHECK(a.values[12] < 0.0);
  // Unvisited cells revert toward the target mean with a wide interval that
  // straddles h, so they stay ambiguity-positive and win the argmax over both
  // classified cells.
  CHECK(a.values.maxCoeff() > 0.0);
  CHECK(argmax_cell(a) != 12);
  CHECK(argmax_cell(a) != 0);
}

TEST_CASE("disjoint successive intervals reset and are counted") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 5, 5);
  LseState st = LseState::init(grid, 9.0, 0.0);
  Kernel k{0.15, 1.0, 1e-10};
  Point x = grid.center(12);
  GpModel high = GpModel::fit(k, {x}, {10.0});
  GpModel low = GpModel::fit(k, {x}, {0.0});
  lse_update_and_field(high, st, grid);
  CHECK(st.reset_count == 0);
  double prev_lo = st.lower[12];
  CHECK(prev_lo > 5.0);
  lse_update_and_field(low, st, grid);
  CHECK(st.reset_count >= 1);
  // The cell's interval was replaced by the new one around 0, not clamped.
  CHECK(st.upper[12] < 1.0);
  CHECK(st.lower[12] < st.upper[12]);
}

TEST_CASE("level-set update rejects a state sized for a different grid") {
  DomainGrid small(Rect{0, 1, 0, 1}, 5, 5);
  DomainGrid big(Rect{0, 1, 0, 1}, 8, 8);
  LseState st = LseState::init(small, 9.0, 0.0);
  GpModel m = small_model();
  CHECK_THROWS_AS(lse_update_and_field(m, st, big), Error);
}

TEST_CASE("uncertainty field is exactly the posterior variance") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 6, 6);
  GpModel m = small_model();
  AcquisitionField f = unc_field(m, grid);
  auto preds = m.predict(grid.centers());
  for (int j = 0; j < grid.size(); ++j) CHECK(f.values[j] == preds[j].variance);

  Kernel k{0.3, 1.7, 0.01};
  GpModel prior = GpModel::fit(k, {}, {});
  AcquisitionField fp = unc_field(prior, grid);
  for (int j = 0; j < grid.size(); ++j) CHECK_THAT(fp.values[j], WithinAbs(1.7, 1e-15));
}

TEST_CASE("noiseless observation pins the uncertainty field to zero there") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 5, 5);
  Kernel k{0.3, 1.0, 0.0};
  Point x = grid.center(7);
  GpModel m = GpModel::fit(k, {x}, {2.0});
  AcquisitionField f = unc_field(m, grid);
  CHECK(f.values[7] >= 0.0);
  CHECK(f.values[7] <= 1e-9);
}

TEST_CASE("expected improvement closed form") {
  CHECK(expected_improvement(1.0, 0.0, 0.5) == 0.0);
  CHECK(expected_improvement(0.2, 0.0, 0.5) == 0.0);
  CHECK_THAT(expected_improvement(1.0, 1.0, 1.0),
             WithinAbs(1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-9));
}

TEST_CASE("expected improvement matches a Monte-Carlo average") {
  const double mean = 1.0, sd = 0.5, incumbent = 0.0;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(mean, sd);
  const int n = 10'000'000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::max(0.0, g(rng) - incumbent);
  double mc = sum / n;
  CHECK_THAT(expected_improvement(mean, sd, incumbent), WithinAbs(mc, 1e-3));
}

TEST_CASE("expected improvement grows with predictive spread") {
  const double mean = 0.3, incumbent = 1.0;
  double prev = expected_improvement(mean, 0.05, incumbent);
  for (double sd = 0.1; sd <= 2.0; sd += 0.1) {
    double cur = expected_improvement(mean, sd, incumbent);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("improvement field evaluates the closed form at every cell") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 6, 6);
  GpModel m = small_model();
  const double incumbent = 2.0;
  AcquisitionField f = ei_field(m, grid, incumbent);
  auto preds = m.predict(grid.centers());
  for (int j = 0; j < grid.size(); ++j)
    CHECK_THAT(f.values[j],
               WithinAbs(expected_improvement(preds[j].mean, std::sqrt(preds[j].variance),
                                              incumbent),
                         1e-12));
}

TEST_CASE("argmax is invariant to a positive rescaling of the targets") {
  DomainGrid grid(Rect{0, 1, 0, 1}, 6, 6);
  Kernel k{0.3, 1.0, 0.01};
  std::vector<Point> xs = {{0.15, 0.2}, {0.4, 0.55}, {0.8, 0.3}, {0.6, 0.85}, {0.25, 0.7}};
  std::vector<double> ys = {1.0, 2.2, 0.5, 1.4, 1.9};
  const double c = 100.0;
  std::vector<double> ys_scaled;
  for (double y : ys) ys_scaled.push_back(c * y);
  GpModel m1 = GpModel::fit(k, xs, ys);
  GpModel m2 = GpModel::fit(k, xs, ys_scaled);

  CHECK(argmax_cell(unc_field(m1, grid)) == argmax_cell(unc_field(m2, grid)));

  const double tau = 1.1, conf = 0.9;
  RegionGrid r1(grid, 2, 2, tau, conf);
  RegionGrid r2(grid, 2, 2, c * tau, conf);
  AcquisitionField a1 = aas_field(m1, r1, grid);
  AcquisitionField a2 = aas_field(m2, r2, grid);
  CHECK(argmax_cell(a1) == argmax_cell(a2));
  for (int j = 0; j < grid.size(); ++j) CHECK_THAT(a1.values[j], WithinAbs(a2.values[j], 1e-9));

  const double incumbent = 2.2;
  CHECK(argmax_cell(ei_field(m1, grid, incumbent)) ==
        argmax_cell(ei_field(m2, grid, c * incumbent)));

  const double h = 1.3;
  LseState s1 = LseState::init(grid, 9.0, h);
  LseState s2 = LseState::init(grid, 9.0, c * h);
  CHECK(argmax_cell(lse_update_and_field(m1, s1, grid)) ==
        argmax_cell(lse_update_and_field(m2, s2, grid)));
}

TEST_CASE("field normalization and argmax tie-breaking") {
  AcquisitionField f;
  f.values = Eigen::VectorXd(4);
  f.values << -2.0, 0.0, 6.0, 2.0;
  AcquisitionField shifted = f;
  normalize_field(shifted, true);
  CHECK_THAT(shifted.values[0], WithinAbs(0.0, 1e-15));
  CHECK_THAT(shifted.values[2], WithinAbs(1.0, 1e-15));
  CHECK(shifted.normalized);

  AcquisitionField plain;
  plain.values = Eigen::VectorXd(3);
  plain.values << 1.0, 4.0, 2.0;
  normalize_field(plain, false);
  CHECK_THAT(plain.values[1], WithinAbs(1.0, 1e-15));
  CHECK_THAT(plain.values[0], WithinAbs(0.25, 1e-15));

  AcquisitionField zero;
  zero.values = Eigen::VectorXd::Zero(3);
  normalize_field(zero, false);
  CHECK(zero.values.maxCoeff() == 0.0);

  AcquisitionField tie;
  tie.values = Eigen::VectorXd(3);
  tie.values << 5.0, 5.0, 2.0;
  CHECK(argmax_cell(tie) == 0);

  AcquisitionField empty;
  CHECK_THROWS_AS(normalize_field(empty, false), Error);
  CHECK_THROWS_AS(argmax_cell(empty), Error);
}
