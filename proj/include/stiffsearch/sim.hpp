#pragma once

#include "stiffsearch/grid.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace stiffsearch {

// Ground-truth stiffness surface on a grid; continuous queries interpolate
// bilinearly between cell centers.
struct StiffnessField {
  DomainGrid grid;
  Eigen::VectorXd values;

  double value_at(const Point& p) const { return grid.interpolate(values, p); }
  double max_value() const { return values.maxCoeff(); }

  void validate() const {
    if (values.size() != grid.size())
      throw Error("StiffnessField: value count does not match grid");
    if ((values.array() < 0.0).any())
      throw Error("StiffnessField: stiffness values must be non-negative");
  }
};

struct PhantomParams {
  double baseline = 1.0;
  int n_inclusions = 2;
  double amp_lo = 3.0, amp_hi = 6.0;      // bump amplitude range (absolute)
  double width_lo = 0.05, width_hi = 0.12;  // bump sigma range (absolute length)

  void validate() const {
    if (baseline < 0.0) throw Error("PhantomParams: baseline must be non-negative");
    if (n_inclusions < 0) throw Error("PhantomParams: n_inclusions must be non-negative");
    if (!(amp_hi >= amp_lo) || amp_lo < 0.0)
      throw Error("PhantomParams: bad amplitude range");
    if (!(width_hi >= width_lo) || !(width_lo > 0.0))
      throw Error("PhantomParams: bad width range");
  }
};

// Baseline plus isotropic Gaussian bumps; bump centers land in the inner 80%
// of the domain so inclusions are not clipped by the boundary.
inline StiffnessField generate_phantom(std::uint64_t seed, const DomainGrid& grid,
                                       const PhantomParams& params) {
  params.validate();
  Rng rng = Rng::stream(seed, 101);
  const Rect& b = grid.bounds();
  StiffnessField field{grid, Eigen::VectorXd::Constant(grid.size(), params.baseline)};
  for (int k = 0; k < params.n_inclusions; ++k) {
    double cx = rng.uniform(b.xmin + 0.1 * b.width(), b.xmax - 0.1 * b.width());
    double cy = rng.uniform(b.ymin + 0.1 * b.height(), b.ymax - 0.1 * b.height());
    double amp = rng.uniform(params.amp_lo, params.amp_hi);
    double sig = rng.uniform(params.width_lo, params.width_hi);
    for (int idx = 0; idx < grid.size(); ++idx) {
      Point c = grid.center(idx);
      double d2 = (c - Point{cx, cy}).squaredNorm();
      field.values[idx] += amp * std::exp(-d2 / (2.0 * sig * sig));
    }
  }
  return field;
}

// Slope of the least-squares line through (displacement, force) pairs.
inline double estimate_stiffness(std::span<const double> displacement,
                                 std::span<const double> force) {
  if (displacement.size() != force.size() || displacement.size() < 2)
    throw Error("estimate_stiffness: needs at least two displacement/force pairs");
  const int n = int(displacement.size());
  double dbar = 0.0, fbar = 0.0;
  for (int i = 0; i < n; ++i) {
    dbar += displacement[i];
    fbar += force[i];
  }
  dbar /= n;
  fbar /= n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    num += (displacement[i] - dbar) * (force[i] - fbar);
    den += (displacement[i] - dbar) * (displacement[i] - dbar);
  }
  if (den == 0.0) throw Error("estimate_stiffness: all displacements identical");
  return num / den;
}

struct ProbeModel {
  Eigen::Matrix2d position_noise = Eigen::Matrix2d::Zero();  // contact-point covariance
  double force_noise_sd = 0.0;
  int displacement_steps = 5;
  double max_indent = 1.0;

  void validate() const {
    if (displacement_steps < 2)
      throw Error("ProbeModel: displacement_steps must be at least 2");
    if (!(max_indent > 0.0)) throw Error("ProbeModel: max_indent must be positive");
    if (force_noise_sd < 0.0) throw Error("ProbeModel: force_noise_sd must be non-negative");
  }
};

// Simulated palpation: the actual contact point scatters around the command
// (clamped into the domain), forces follow Hooke's law at the contact point's
// true stiffness plus sensor noise, and the estimate is the fitted slope.
// Zero-noise probes skip the RNG entirely, so noise-free runs keep consuming
// the same stream positions regardless of noise settings elsewhere.
inline double simulate_probe(const StiffnessField& truth, const Point& command,
                             const ProbeModel& model, Rng& rng) {
  model.validate();
  Point contact = command;
  if (!model.position_noise.isZero(0.0)) {
    Eigen::LLT<Eigen::Matrix2d> llt(model.position_noise);
    if (llt.info() != Eigen::Success)
      throw Error("simulate_probe: position_noise must be positive semidefinite");
    Eigen::Vector2d e = llt.matrixL() * Eigen::Vector2d(rng.normal(), rng.normal());
    contact += e;
    const Rect& b = truth.grid.bounds();
    contact.x() = std::clamp(contact.x(), b.xmin, b.xmax);
    contact.y() = std::clamp(contact.y(), b.ymin, b.ymax);
  }
  double k_true = truth.value_at(contact);
  std::vector<double> d(model.displacement_steps), f(model.displacement_steps);
  for (int j = 0; j < model.displacement_steps; ++j) {
    d[j] = model.max_indent * double(j + 1) / model.displacement_steps;
    f[j] = k_true * d[j];
    if (model.force_noise_sd > 0.0) f[j] += model.force_noise_sd * rng.normal();
  }
  return estimate_stiffness(d, f);
}

// Ground-truth region labels: region average of the true field above the
// fixed scoring threshold.
inline std::vector<bool> truth_labels(const StiffnessField& truth, const RegionGrid& regions) {
  std::vector<bool> labels;
  labels.reserve(regions.regions().size());
  for (const Region& g : regions.regions()) {
    if (g.cells.empty()) throw Error("truth_labels: region covers no grid cells");
    double avg = 0.0;
    for (int idx : g.cells) avg += truth.values[idx];
    avg /= double(g.cells.size());
    labels.push_back(avg > regions.tumor_threshold());
  }
  return labels;
}

// Recall = TP / (TP + FN); defined as 1 when the truth has no positives.
inline double score_recall(const std::vector<bool>& predicted,
                           const std::vector<bool>& truth) {
  if (predicted.size() != truth.size())
    throw Error("score_recall: label vectors differ in length");
  int tp = 0, fn = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] && predicted[i]) ++tp;
    if (truth[i] && !predicted[i]) ++fn;
  }
  if (tp + fn == 0) return 1.0;
  return double(tp) / double(tp + fn);
}

}  // namespace stiffsearch
