#pragma once

#include "stiffsearch/common.hpp"

#include <algorithm>
#include <utility>
#include <vector>

namespace stiffsearch {

struct Pose {
  double x = 0.0, y = 0.0, theta = 0.0;
  Point position() const { return {x, y}; }
};

struct PrimitiveBounds {
  double v_min = 0.0, v_max = 0.2;
  double w_min = -6.2832, w_max = 6.2832;

  void validate() const {
    if (!(v_max >= v_min) || !(w_max >= w_min))
      throw Error("PrimitiveBounds: requires v_max >= v_min and w_max >= w_min");
  }
};

// A chain of m constant-twist primitives (v_j, w_j), each held for tau seconds.
// Flat layout: (v_1, w_1, ..., v_m, w_m) in R^{2m}.
struct PrimitiveParams {
  std::vector<std::pair<double, double>> controls;
  double tau = 1.0;
  PrimitiveBounds bounds;

  static PrimitiveParams from_flat(const Eigen::VectorXd& z, double tau,
                                   const PrimitiveBounds& bounds) {
    if (z.size() == 0 || z.size() % 2 != 0)
      throw Error("PrimitiveParams: flat vector length must be a positive even number");
    PrimitiveParams p;
    p.tau = tau;
    p.bounds = bounds;
    p.controls.reserve(z.size() / 2);
    for (int j = 0; j < z.size(); j += 2) p.controls.emplace_back(z[j], z[j + 1]);
    p.validate_shape();
    return p;
  }

  Eigen::VectorXd to_flat() const {
    Eigen::VectorXd z(2 * controls.size());
    for (int j = 0; j < int(controls.size()); ++j) {
      z[2 * j] = controls[j].first;
      z[2 * j + 1] = controls[j].second;
    }
    return z;
  }

  void validate_shape() const {
    if (controls.empty()) throw Error("PrimitiveParams: needs at least one primitive");
    if (!(tau > 0.0)) throw Error("PrimitiveParams: tau must be positive");
    bounds.validate();
  }
};

// Project each control into the bounds box.
inline PrimitiveParams clamp(PrimitiveParams p) {
  p.validate_shape();
  for (auto& [v, w] : p.controls) {
    v = std::clamp(v, p.bounds.v_min, p.bounds.v_max);
    w = std::clamp(w, p.bounds.w_min, p.bounds.w_max);
  }
  return p;
}

struct Path {
  std::vector<Pose> poses;
  std::vector<double> times;
};

// Closed-form unicycle rollout sampled every dt. Within each primitive, from
// the junction pose (x_j, y_j, theta_j):
//   theta(t) = theta_j + w t
//   x(t) = x_j + (v/w)(sin theta(t) - sin theta_j)   (straight-line limit when
//   y(t) = y_j + (v/w)(cos theta_j - cos theta(t))    |w| < 1e-8 / tau)
// Junction poses chain exactly, so there is no integration drift.
inline Path rollout(const Pose& start, const PrimitiveParams& p, double dt) {
  p.validate_shape();
  if (!(dt > 0.0)) throw Error("rollout: dt must be positive");
  if (dt > p.tau * (1.0 + 1e-12)) throw Error("rollout: dt must not exceed tau");

  Path path;
  path.poses.push_back(start);
  path.times.push_back(0.0);
  Pose q = start;
  double t0 = 0.0;
  const double w_eps = 1e-8 / p.tau;

  for (const auto& [v, w] : p.controls) {
    auto at = [&](double s) {
      Pose r;
      r.theta = q.theta + w * s;
      if (std::abs(w) < w_eps) {
        r.x = q.x + v * s * std::cos(q.theta);
        r.y = q.y + v * s * std::sin(q.theta);
      } else {
        r.x = q.x + (v / w) * (std::sin(r.theta) - std::sin(q.theta));
        r.y = q.y + (v / w) * (std::cos(q.theta) - std::cos(r.theta));
      }
      return r;
    };
    const double eps = p.tau * 1e-9;
    for (int k = 1;; ++k) {
      double s = k * dt;
      if (s >= p.tau - eps) break;
      path.poses.push_back(at(s));
      path.times.push_back(t0 + s);
    }
    q = at(p.tau);
    t0 += p.tau;
    path.poses.push_back(q);
    path.times.push_back(t0);
  }
  return path;
}

// Sum of Euclidean chords between consecutive poses.
inline double path_length(const Path& path) {
  double len = 0.0;
  for (size_t i = 1; i < path.poses.size(); ++i)
    len += std::hypot(path.poses[i].x - path.poses[i - 1].x,
                      path.poses[i].y - path.poses[i - 1].y);
  return len;
}

}  // namespace stiffsearch
