#pragma once

#include "stiffsearch/common.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace stiffsearch {

struct GmmComponent {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double weight = 1.0;
};

struct GmmParams {
  std::vector<GmmComponent> components;

  int dim() const { return components.empty() ? 0 : int(components[0].mean.size()); }

  void validate() const {
    if (components.empty()) throw Error("GmmParams: needs at least one component");
    const int d = dim();
    double wsum = 0.0;
    for (const auto& c : components) {
      if (c.mean.size() != d || c.cov.rows() != d || c.cov.cols() != d)
        throw Error("GmmParams: inconsistent component dimensions");
      if (c.weight < 0.0) throw Error("GmmParams: negative component weight");
      wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw Error("GmmParams: weights must sum to 1");
  }

  // Isotropic single-component helper.
  static GmmParams single(const Eigen::VectorXd& mean, const Eigen::VectorXd& diag_var) {
    GmmParams g;
    g.components.push_back({mean, diag_var.asDiagonal().toDenseMatrix(), 1.0});
    return g;
  }
};

struct CemConfig {
  int n_samples = 200;
  double elite_frac = 0.1;
  int max_iters = 30;
  double min_covariance_floor = 1e-6;
  double convergence_tol = 1e-4;
  std::uint64_t seed = 0;
  // Deterministic candidates appended to every iteration's sample set. A
  // caller that knows a feasible point (e.g. a stay-and-turn trajectory) can
  // pin it here so the optimizer never sees an all-infeasible population.
  std::vector<Eigen::VectorXd> anchors;

  void validate() const {
    if (n_samples < 2) throw Error("CemConfig: n_samples must be at least 2");
    if (!(elite_frac > 0.0 && elite_frac <= 1.0))
      throw Error("CemConfig: elite_frac must lie in (0,1]");
    if (n_samples * elite_frac < 2.0 - 1e-12)
      throw Error("CemConfig: n_samples * elite_frac must be at least 2");
    if (max_iters < 1) throw Error("CemConfig: max_iters must be at least 1");
    if (min_covariance_floor < 0.0)
      throw Error("CemConfig: min_covariance_floor must be non-negative");
    if (!(convergence_tol > 0.0)) throw Error("CemConfig: convergence_tol must be positive");
  }
};

namespace detail {

// Symmetric matrix square root with eigenvalue clamping; robust where a plain
// Cholesky would reject a semidefinite covariance.
inline Eigen::MatrixXd cov_sqrt(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

inline double mvn_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& cov) {
  const int d = int(x.size());
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    Eigen::MatrixXd c = cov;
    c.diagonal().array() += 1e-12 * (1.0 + cov.diagonal().maxCoeff());
    llt.compute(c);
    if (llt.info() != Eigen::Success) throw Error("mvn_log_pdf: covariance not PD");
  }
  Eigen::VectorXd w = llt.matrixL().solve(x - mean);
  double logdet = 0.0;
  for (int i = 0; i < d; ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * w.squaredNorm() - logdet - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

}  // namespace detail

inline std::vector<Eigen::VectorXd> sample_gmm(const GmmParams& gmm, int n, Rng& rng) {
  gmm.validate();
  if (n < 0) throw Error("sample_gmm: n must be non-negative");
  std::vector<Eigen::MatrixXd> roots;
  roots.reserve(gmm.components.size());
  for (const auto& c : gmm.components) roots.push_back(detail::cov_sqrt(c.cov));

  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  const int d = gmm.dim();
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    double acc = 0.0;
    size_t pick = gmm.components.size() - 1;
    for (size_t k = 0; k < gmm.components.size(); ++k) {
      acc += gmm.components[k].weight;
      if (u <= acc) {
        pick = k;
        break;
      }
    }
    out.push_back(gmm.components[pick].mean + roots[pick] * rng.normal_vector(d));
  }
  return out;
}

// Refit the sampling distribution to the elite set (lowest-cost fraction among
// finite-cost samples). K=1 is the exact elite mean and maximum-likelihood
// covariance; K>1 runs a short weighted EM seeded by kmeans++. Every
// covariance gets min_covariance_floor added to its diagonal.
inline GmmParams elite_update(const std::vector<Eigen::VectorXd>& samples,
                              const std::vector<double>& costs, const CemConfig& cfg,
                              int n_components, Rng& rng) {
  cfg.validate();
  if (samples.empty() || samples.size() != costs.size())
    throw Error("elite_update: samples and costs must be non-empty and equal length");
  if (n_components < 1) throw Error("elite_update: n_components must be at least 1");

  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (costs[a] != costs[b]) return costs[a] < costs[b];
    return a < b;
  });
  int n_finite = 0;
  for (double c : costs)
    if (std::isfinite(c)) ++n_finite;
  if (n_finite == 0)
    throw Error("elite_update: every sample cost is infinite (no feasible sample)");
  int n_elite = std::min<int>(n_finite, std::max<int>(1, int(std::ceil(cfg.elite_frac * samples.size()))));

  std::vector<Eigen::VectorXd> elite;
  elite.reserve(n_elite);
  for (int i = 0; i < n_elite; ++i) elite.push_back(samples[order[i]]);
  const int d = int(elite[0].size());
  const Eigen::MatrixXd floor_mat =
      cfg.min_covariance_floor * Eigen::MatrixXd::Identity(d, d);

  auto fit_single = [&](const std::vector<Eigen::VectorXd>& pts) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    for (const auto& p : pts) mu += p;
    mu /= double(pts.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& p : pts) cov += (p - mu) * (p - mu).transpose();
    cov /= double(pts.size());
    return GmmComponent{mu, cov + floor_mat, 1.0};
  };

  GmmParams out;
  if (n_components == 1 || n_elite <= n_components) {
    out.components.push_back(fit_single(elite));
    return out;
  }

  // kmeans++ seeding on the elite set.
  std::vector<Eigen::VectorXd> centers;
  centers.push_back(elite[rng.uniform_int(n_elite)]);
  while (int(centers.size()) < n_components) {
    Eigen::VectorXd d2(n_elite);
    for (int i = 0; i < n_elite; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, (elite[i] - c).squaredNorm());
      d2[i] = best;
    }
    double total = d2.sum();
    int pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      double acc = 0.0;
      for (int i = 0; i < n_elite; ++i) {
        acc += d2[i];
        if (u <= acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_int(n_elite);
    }
    centers.push_back(elite[pick]);
  }

  std::vector<GmmComponent> comps(n_components);
  for (int k = 0; k < n_components; ++k)
    comps[k] = {centers[k], Eigen::MatrixXd::Identity(d, d) + floor_mat,
                1.0 / n_components};

  // Short EM; fixed iteration count keeps the update deterministic.
  Eigen::MatrixXd resp(n_elite, n_components);
  for (int it = 0; it < 20; ++it) {
    for (int i = 0; i < n_elite; ++i) {
      Eigen::VectorXd lp(n_components);
      for (int k = 0; k < n_components; ++k)
        lp[k] = std::log(std::max(comps[k].weight, 1e-300)) +
                detail::mvn_log_pdf(elite[i], comps[k].mean, comps[k].cov);
      double mx = lp.maxCoeff();
      Eigen::VectorXd p = (lp.array() - mx).exp();
      resp.row(i) = p / p.sum();
    }
    for (int k = 0; k < n_components; ++k) {
      double nk = resp.col(k).sum();
      if (nk < 1e-9) {  // dead component: reseed on the worst-covered elite
        int far = 0;
        double worst = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n_elite; ++i) {
          double cover = resp.row(i).maxCoeff();
          if (cover < worst) {
            worst = cover;
            far = i;
          }
        }
        comps[k].mean = elite[far];
        comps[k].cov = Eigen::MatrixXd::Identity(d, d) + floor_mat;
        comps[k].weight = 1.0 / n_elite;
        continue;
      }
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
      for (int i = 0; i < n_elite; ++i) mu += resp(i, k) * elite[i];
      mu /= nk;
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
      for (int i = 0; i < n_elite; ++i)
        cov += resp(i, k) * (elite[i] - mu) * (elite[i] - mu).transpose();
      cov /= nk;
      comps[k] = {mu, cov + floor_mat, nk / n_elite};
    }
    double wsum = 0.0;
    for (const auto& c : comps) wsum += c.weight;
    for (auto& c : comps) c.weight /= wsum;
  }
  out.components = comps;
  return out;
}

struct CemIteration {
  int iteration = 0;
  double best_cost = 0.0;        // best-ever after this iteration
  double sample_mean_cost = 0.0; // mean over this iteration's finite-cost samples
  double elite_mean_cost = 0.0;
  double max_cov_eigenvalue = 0.0;
};

struct CemResult {
  Eigen::VectorXd best;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<CemIteration> trace;
};

// Cross-entropy minimization. Tracks the best sample ever evaluated; converges
// when every component covariance has collapsed (largest eigenvalue below
// convergence_tol), i.e. the sampling distribution is effectively a delta.
inline CemResult optimize(const std::function<double(const Eigen::VectorXd&)>& cost,
                          GmmParams gmm, const CemConfig& cfg) {
  cfg.validate();
  gmm.validate();
  const int n_components = int(gmm.components.size());
  Rng rng(cfg.seed);
  CemResult res;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    std::vector<Eigen::VectorXd> samples = sample_gmm(gmm, cfg.n_samples, rng);
    for (const Eigen::VectorXd& a : cfg.anchors) {
      if (a.size() != samples.front().size())
        throw Error("optimize: anchor dimension does not match the sampling distribution");
      samples.push_back(a);
    }
    std::vector<double> costs(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
      costs[i] = cost(samples[i]);
      if (std::isnan(costs[i])) throw Error("optimize: cost function returned NaN");
      if (costs[i] < res.best_cost) {
        res.best_cost = costs[i];
        res.best = samples[i];
      }
    }
    gmm = elite_update(samples, costs, cfg, n_components, rng);

    double sample_sum = 0.0;
    int sample_n = 0;
    for (double c : costs)
      if (std::isfinite(c)) {
        sample_sum += c;
        ++sample_n;
      }
    std::vector<double> finite = costs;
    std::erase_if(finite, [](double c) { return !std::isfinite(c); });
    std::sort(finite.begin(), finite.end());
    int n_elite = std::min<int>(int(finite.size()),
                                std::max<int>(1, int(std::ceil(cfg.elite_frac * costs.size()))));
    double elite_sum = 0.0;
    for (int i = 0; i < n_elite; ++i) elite_sum += finite[i];

    double max_eig = 0.0;
    for (const auto& c : gmm.components) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.cov);
      max_eig = std::max(max_eig, es.eigenvalues().maxCoeff());
    }
    res.trace.push_back({it, res.best_cost, sample_sum / std::max(1, sample_n),
                         elite_sum / n_elite, max_eig});
    if (max_eig < cfg.convergence_tol) break;
  }
  return res;
}

}  // namespace stiffsearch
