#pragma once

#include "stiffsearch/kernel.hpp"

#include <utility>
#include <vector>

namespace stiffsearch {

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

// GP posterior over a scalar field. Targets are standardized internally
// (mean/scale refreshed on every fit); hyperparameters apply in standardized
// units, predictions are returned in raw units. With per-point input
// covariances the Gram matrix uses the uncertainty-corrected kernel
// off-diagonal (the same-point correction cancels on the diagonal, which keeps
// the Gram positive semidefinite).
class GpModel {
 public:
  GpModel() { kernel_.validate(); }

  static GpModel fit(const Kernel& kernel, std::vector<Point> inputs,
                     std::vector<double> targets,
                     std::vector<Eigen::Matrix2d> input_noise = {}) {
    kernel.validate();
    if (inputs.size() != targets.size())
      throw Error("GpModel::fit: inputs and targets differ in length");
    if (!input_noise.empty() && input_noise.size() != inputs.size())
      throw Error("GpModel::fit: input_noise must be empty or match inputs");

    GpModel m;
    m.kernel_ = kernel;
    m.inputs_ = std::move(inputs);
    m.targets_ = std::move(targets);
    m.noise_ = std::move(input_noise);
    const int n = int(m.inputs_.size());

    if (n > 0) {
      double mu = 0.0;
      for (double y : m.targets_) mu += y;
      mu /= n;
      double var = 0.0;
      for (double y : m.targets_) var += (y - mu) * (y - mu);
      double sd = std::sqrt(var / n);
      m.y_mean_ = mu;
      m.y_scale_ = sd > 1e-300 ? sd : 1.0;
    }

    if (n == 0) return m;

    Eigen::VectorXd yt(n);
    for (int i = 0; i < n; ++i) yt[i] = (m.targets_[i] - m.y_mean_) / m.y_scale_;

    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i) {
      gram(i, i) = kernel.signal_variance + kernel.noise_variance;
      for (int j = i + 1; j < n; ++j) {
        double v = m.noise_.empty()
                       ? kernel_eval(kernel, m.inputs_[i], m.inputs_[j])
                       : corrected_kernel_eval(kernel, m.inputs_[i], m.inputs_[j],
                                               m.noise_[i], m.noise_[j]);
        gram(i, j) = v;
        gram(j, i) = v;
      }
    }

    // Cholesky with escalating jitter: 1e-10*sigma_f^2 growing tenfold up to
    // 1e-4*sigma_f^2 before giving up.
    double jitter = 0.0;
    for (;;) {
      Eigen::MatrixXd g = gram;
      if (jitter > 0.0) g.diagonal().array() += jitter;
      m.llt_.compute(g);
      if (m.llt_.info() == Eigen::Success) break;
      jitter = jitter == 0.0 ? 1e-10 * kernel.signal_variance : 10.0 * jitter;
      if (jitter > 1e-4 * kernel.signal_variance * (1.0 + 1e-12))
        throw Error(
            "GpModel::fit: Cholesky failed even with jitter up to 1e-4*signal_variance");
    }
    m.alpha_ = m.llt_.solve(yt);
    return m;
  }

  int size() const { return int(inputs_.size()); }
  const Kernel& kernel() const { return kernel_; }
  const std::vector<Point>& inputs() const { return inputs_; }
  const std::vector<double>& targets() const { return targets_; }
  bool has_input_noise() const { return !noise_.empty(); }
  double target_mean() const { return y_mean_; }
  double target_scale() const { return y_scale_; }

  // Raw-unit variance an unvisited far-away point reverts to.
  double prior_variance() const { return y_scale_ * y_scale_ * kernel_.signal_variance; }
  // Raw-unit observation noise.
  double observation_noise() const { return y_scale_ * y_scale_ * kernel_.noise_variance; }

  // k(q, X) in standardized units; queries are noise-free, so cross terms use
  // the corrected kernel with S_query = 0 when the model carries input noise.
  Eigen::VectorXd cross_kernel(const Point& q) const {
    const int n = size();
    Eigen::VectorXd k(n);
    static const Eigen::Matrix2d kZero = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i)
      k[i] = noise_.empty() ? kernel_eval(kernel_, q, inputs_[i])
                            : corrected_kernel_eval(kernel_, q, inputs_[i], kZero, noise_[i]);
    return k;
  }

  Prediction predict_one(const Point& q) const {
    if (size() == 0)
      return {y_mean_, prior_variance()};
    Eigen::VectorXd k = cross_kernel(q);
    double mean_std = k.dot(alpha_);
    Eigen::VectorXd w = llt_.matrixL().solve(k);
    double var_std = kernel_.signal_variance - w.squaredNorm();
    return {y_mean_ + y_scale_ * mean_std, y_scale_ * y_scale_ * clamp_variance(var_std)};
  }

  std::vector<Prediction> predict(const std::vector<Point>& queries) const {
    std::vector<Prediction> out;
    out.reserve(queries.size());
    if (size() == 0) {
      out.assign(queries.size(), {y_mean_, prior_variance()});
      return out;
    }
    CrossSolve cs = cross_solve(queries);
    for (int j = 0; j < int(queries.size()); ++j) {
      double var_std = kernel_.signal_variance - cs.v.col(j).squaredNorm();
      out.push_back({y_mean_ + y_scale_ * cs.mean_std[j],
                     y_scale_ * y_scale_ * clamp_variance(var_std)});
    }
    return out;
  }

  // Joint posterior over a small query set (raw units).
  void predict_cov(const std::vector<Point>& queries, Eigen::VectorXd& mean_out,
                   Eigen::MatrixXd& cov_out) const {
    const int q = int(queries.size());
    mean_out.resize(q);
    cov_out.resize(q, q);
    Eigen::MatrixXd kqq(q, q);
    for (int i = 0; i < q; ++i) {
      kqq(i, i) = kernel_.signal_variance;
      for (int j = i + 1; j < q; ++j) {
        double v = kernel_eval(kernel_, queries[i], queries[j]);
        kqq(i, j) = v;
        kqq(j, i) = v;
      }
    }
    if (size() == 0) {
      mean_out.setConstant(y_mean_);
      cov_out = y_scale_ * y_scale_ * kqq;
      return;
    }
    CrossSolve cs = cross_solve(queries);
    Eigen::MatrixXd cov = kqq - cs.v.transpose() * cs.v;
    cov = 0.5 * (cov + cov.transpose()).eval();
    for (int i = 0; i < q; ++i) cov(i, i) = clamp_variance(cov(i, i));
    mean_out = (y_mean_ + y_scale_ * cs.mean_std.array()).matrix();
    cov_out = y_scale_ * y_scale_ * cov;
  }

  // Standardized posterior structure for a query set: mean_std[j] and the
  // whitened cross column v.col(j) = L^-1 k(X, q_j), so that
  // cov_std(q_i,q_j) = k(q_i,q_j) - v.col(i)^T v.col(j).
  struct CrossSolve {
    Eigen::VectorXd mean_std;
    Eigen::MatrixXd v;  // n x N
  };

  CrossSolve cross_solve(const std::vector<Point>& queries) const {
    const int n = size();
    const int q = int(queries.size());
    CrossSolve cs;
    cs.mean_std = Eigen::VectorXd::Zero(q);
    cs.v.resize(n, q);
    if (n == 0) return cs;
    Eigen::MatrixXd cross(n, q);
    for (int j = 0; j < q; ++j) cross.col(j) = cross_kernel(queries[j]);
    cs.mean_std = cross.transpose() * alpha_;
    cs.v = llt_.matrixL().solve(cross);
    return cs;
  }

 private:
  // Standardized-space clamp: tiny negatives from rounding go to zero,
  // anything worse means the factorization is broken.
  double clamp_variance(double v) const {
    if (v < -1e-9) throw Error("GpModel: negative predictive variance beyond tolerance");
    return v > 0.0 ? v : 0.0;
  }

  Kernel kernel_;
  std::vector<Point> inputs_;
  std::vector<double> targets_;
  std::vector<Eigen::Matrix2d> noise_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

}  // namespace stiffsearch
