#pragma once

#include "stiffsearch/gp.hpp"
#include "stiffsearch/grid.hpp"

#include <vector>

namespace stiffsearch {

struct RegionPosterior {
  double mean = 0.0;
  double variance = 0.0;
};

// Posterior of the region-average stiffness: w = uniform weights over the
// region's cells, mean = w'mu, variance = w'Sigma w.
inline RegionPosterior region_posterior(const GpModel& model, const Region& region,
                                        const DomainGrid& grid) {
  if (region.cells.empty()) throw Error("region_posterior: region covers no grid cells");
  std::vector<Point> pts;
  pts.reserve(region.cells.size());
  for (int idx : region.cells) pts.push_back(grid.center(idx));
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  model.predict_cov(pts, mean, cov);
  double m = double(pts.size());
  return {mean.sum() / m, std::max(0.0, cov.sum() / (m * m))};
}

// A region is marked stiff when P(region average > threshold) exceeds the
// confidence level.
inline bool classify_region(const RegionPosterior& rp, double threshold, double confidence) {
  double sd = std::sqrt(rp.variance);
  if (sd > 0.0) return normal_cdf((rp.mean - threshold) / sd) > confidence;
  return rp.mean > threshold;
}

inline std::vector<bool> classify_regions(const GpModel& model, const RegionGrid& regions,
                                          const DomainGrid& grid) {
  std::vector<bool> labels;
  labels.reserve(regions.regions().size());
  for (const Region& g : regions.regions())
    labels.push_back(classify_region(region_posterior(model, g, grid),
                                     regions.tumor_threshold(), regions.confidence()));
  return labels;
}

// Expected one-step classification reward, evaluated in closed form.
//
// For each candidate cell x and region g, the expected post-observation
// indicator E[r_g | y at x] is a Gaussian orthant probability: observing y
// moves the region-average posterior to mean mu_g + c/s2*(y - m_x) and
// standard deviation sd' with sd'^2 = sd_g^2 - c^2/s2, where c = cov(f_g, f(x))
// and s2 = var(y) = posterior variance at x plus observation noise. The
// post-observation classification succeeds iff the shifted mean clears
// threshold + z_conf*sd', which under the y-predictive gives
//   E[r_g] = Phi( sqrt(s2) * (mu_g - threshold - z_conf*sd') / |c| ).
// A region already classified from current data has spent its reward: it
// contributes 0 everywhere, so the surface carries only the expected NEW
// classifications. (A constant per-region offset would not change the argmax,
// but it would drown the gradient when the surface is integrated along
// candidate trajectories.)
inline AcquisitionField aas_field(const GpModel& model, const RegionGrid& regions,
                                  const DomainGrid& grid) {
  const double conf = regions.confidence();
  const double tau = regions.tumor_threshold();
  const double z_conf = normal_quantile(conf);
  const double s = model.target_scale();
  const double s2r = s * s;
  const Kernel& ker = model.kernel();

  std::vector<Point> centers = grid.centers();
  const int ncells = int(centers.size());
  GpModel::CrossSolve cs = model.cross_solve(centers);

  // Raw-unit per-cell predictive pieces.
  Eigen::VectorXd mean_raw(ncells), obs_sd_raw(ncells);
  for (int j = 0; j < ncells; ++j) {
    double var_std = std::max(0.0, ker.signal_variance - cs.v.col(j).squaredNorm());
    mean_raw[j] = model.target_mean() + s * cs.mean_std[j];
    obs_sd_raw[j] = s * std::sqrt(var_std + ker.noise_variance);
  }

  AcquisitionField field;
  field.values = Eigen::VectorXd::Zero(ncells);

  const int n = model.size();
  Eigen::VectorXd kmean(ncells);
  for (const Region& g : regions.regions()) {
    if (g.cells.empty()) throw Error("aas_field: region covers no grid cells");
    const int m = int(g.cells.size());

    // Region-average cross structure against every cell: kmean[j] is the mean
    // prior kernel between region cells and cell j; vbar the matching
    // whitened column average.
    kmean.setZero();
    for (int idx : g.cells) {
      const Point ci = grid.center(idx);
      for (int j = 0; j < ncells; ++j) kmean[j] += kernel_eval(ker, ci, centers[j]);
    }
    kmean /= m;
    Eigen::VectorXd vbar = Eigen::VectorXd::Zero(n);
    double mstd_g = 0.0;
    for (int idx : g.cells) {
      if (n > 0) vbar += cs.v.col(idx);
      mstd_g += cs.mean_std[idx];
    }
    if (n > 0) vbar /= m;
    mstd_g /= m;

    double kbar = 0.0;
    for (int idx : g.cells) kbar += kmean[idx];
    kbar /= m;

    double mu_g = model.target_mean() + s * mstd_g;
    double var_g = s2r * std::max(0.0, kbar - vbar.squaredNorm());
    double sd_g = std::sqrt(var_g);

    if (classify_region({mu_g, var_g}, tau, conf)) continue;

    Eigen::VectorXd cov_row = kmean;
    if (n > 0) cov_row -= (vbar.transpose() * cs.v).transpose();
    for (int j = 0; j < ncells; ++j) {
      double c = s2r * cov_row[j];
      double s_obs = obs_sd_raw[j];
      if (c == 0.0 || s_obs <= 0.0) continue;  // uninformative: indicator stays 0
      double sd_prime = std::sqrt(std::max(0.0, var_g - c * c / (s_obs * s_obs)));
      field.values[j] += normal_cdf(s_obs * (mu_g - tau - z_conf * sd_prime) / std::abs(c));
    }
  }
  return field;
}

// Level-set estimation state: the running confidence intersection C_t per cell.
struct LseState {
  double level_h = 0.0;
  double beta = 9.0;
  Eigen::VectorXd lower, upper;
  int reset_count = 0;

  static LseState init(const DomainGrid& grid, double beta, double level_h = 0.0) {
    if (!(beta > 0.0)) throw Error("LseState: beta must be positive");
    LseState st;
    st.level_h = level_h;
    st.beta = beta;
    st.lower = Eigen::VectorXd::Constant(grid.size(), -kWide);
    st.upper = Eigen::VectorXd::Constant(grid.size(), kWide);
    return st;
  }

  static constexpr double kWide = 1e12;
};

// Intersect each cell's confidence interval with [mu +- sqrt(beta)*sd] and
// score ambiguity a = min(max C - h, h - min C). An empty intersection resets
// that cell's interval to the fresh one and bumps reset_count.
inline AcquisitionField lse_update_and_field(const GpModel& model, LseState& st,
                                             const DomainGrid& grid) {
  if (st.lower.size() != grid.size() || st.upper.size() != grid.size())
    throw Error("lse_update_and_field: state size does not match grid");
  std::vector<Prediction> preds = model.predict(grid.centers());
  const double sb = std::sqrt(st.beta);
  AcquisitionField field;
  field.values.resize(grid.size());
  for (int j = 0; j < grid.size(); ++j) {
    double sd = std::sqrt(preds[j].variance);
    double qlo = preds[j].mean - sb * sd;
    double qhi = preds[j].mean + sb * sd;
    double lo = std::max(st.lower[j], qlo);
    double hi = std::min(st.upper[j], qhi);
    if (lo > hi) {
      lo = qlo;
      hi = qhi;
      ++st.reset_count;
    }
    st.lower[j] = lo;
    st.upper[j] = hi;
    field.values[j] = std::min(hi - st.level_h, st.level_h - lo);
  }
  return field;
}

inline AcquisitionField unc_field(const GpModel& model, const DomainGrid& grid) {
  std::vector<Prediction> preds = model.predict(grid.centers());
  AcquisitionField field;
  field.values.resize(grid.size());
  for (int j = 0; j < grid.size(); ++j) field.values[j] = preds[j].variance;
  return field;
}

inline double expected_improvement(double mean, double sd, double incumbent) {
  if (sd <= 0.0) return 0.0;
  double z = (mean - incumbent) / sd;
  return std::max(0.0, (mean - incumbent) * normal_cdf(z) + sd * normal_pdf(z));
}

inline AcquisitionField ei_field(const GpModel& model, const DomainGrid& grid,
                                 double incumbent) {
  std::vector<Prediction> preds = model.predict(grid.centers());
  AcquisitionField field;
  field.values.resize(grid.size());
  for (int j = 0; j < grid.size(); ++j)
    field.values[j] =
        expected_improvement(preds[j].mean, std::sqrt(preds[j].variance), incumbent);
  return field;
}

}  // namespace stiffsearch
