#pragma once

#include "stiffsearch/common.hpp"

namespace stiffsearch {

// Isotropic squared-exponential kernel hyperparameters plus observation noise.
struct Kernel {
  double lengthscale = 0.1;
  double signal_variance = 1.0;
  double noise_variance = 0.01;

  void validate() const {
    if (!(lengthscale > 0.0)) throw Error("Kernel: lengthscale must be positive");
    if (!(signal_variance > 0.0)) throw Error("Kernel: signal_variance must be positive");
    if (noise_variance < 0.0) throw Error("Kernel: noise_variance must be non-negative");
  }
};

inline double kernel_eval(const Kernel& k, const Point& a, const Point& b) {
  double d2 = (a - b).squaredNorm();
  return k.signal_variance * std::exp(-d2 / (2.0 * k.lengthscale * k.lengthscale));
}

namespace detail {
inline void check_psd2(const Eigen::Matrix2d& s) {
  double scale = 1.0 + s.cwiseAbs().maxCoeff();
  if (std::abs(s(0, 1) - s(1, 0)) > 1e-12 * scale)
    throw Error("corrected_kernel_eval: input covariance is not symmetric");
  double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
  if (s(0, 0) < -1e-12 * scale || s(1, 1) < -1e-12 * scale || det < -1e-12 * scale * scale)
    throw Error("corrected_kernel_eval: input covariance is not positive semidefinite");
}
}  // namespace detail

// Expected SE kernel under Gaussian input uncertainty (moment matching):
//   sigma_f^2 |I + L^-1 (S1+S2)|^{-1/2} exp(-1/2 d^T (L + S1 + S2)^-1 d),  L = l^2 I.
// Reduces exactly to kernel_eval when S1 = S2 = 0.
inline double corrected_kernel_eval(const Kernel& k, const Point& a, const Point& b,
                                    const Eigen::Matrix2d& s1, const Eigen::Matrix2d& s2) {
  detail::check_psd2(s1);
  detail::check_psd2(s2);
  Eigen::Matrix2d m = s1 + s2;
  if (m.isZero(0.0)) return kernel_eval(k, a, b);

  double l2 = k.lengthscale * k.lengthscale;
  Eigen::Matrix2d A = Eigen::Matrix2d::Identity() + m / l2;
  double det_a = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
  Eigen::Matrix2d B = m;
  B(0, 0) += l2;
  B(1, 1) += l2;
  double det_b = B(0, 0) * B(1, 1) - B(0, 1) * B(1, 0);
  if (det_a <= 0.0 || det_b <= 0.0)
    throw Error("corrected_kernel_eval: degenerate covariance sum");
  Point d = a - b;
  // d^T B^-1 d via the 2x2 adjugate.
  double q = (d.x() * (B(1, 1) * d.x() - B(0, 1) * d.y()) +
              d.y() * (B(0, 0) * d.y() - B(1, 0) * d.x())) /
             det_b;
  return k.signal_variance / std::sqrt(det_a) * std::exp(-0.5 * q);
}

}  // namespace stiffsearch
