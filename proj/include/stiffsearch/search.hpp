#pragma once

#include "stiffsearch/acquisition.hpp"
#include "stiffsearch/cem.hpp"
#include "stiffsearch/trajectory.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

namespace stiffsearch {

struct DiscObstacle {
  Point center;
  double radius = 0.0;
};

struct PolyObstacle {
  std::vector<Point> vertices;  // simple polygon, implicitly closed
};

using Obstacle = std::variant<DiscObstacle, PolyObstacle>;

struct RobotFootprint {
  double radius = 0.0;
};

inline double distance_to_segment(const Point& p, const Point& a, const Point& b) {
  Point ab = b - a;
  double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

inline bool point_in_polygon(const Point& p, const std::vector<Point>& verts) {
  bool inside = false;
  size_t n = verts.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& vi = verts[i];
    const Point& vj = verts[j];
    if ((vi.y() > p.y()) != (vj.y() > p.y()) &&
        p.x() < (vj.x() - vi.x()) * (p.y() - vi.y()) / (vj.y() - vi.y()) + vi.x())
      inside = !inside;
  }
  return inside;
}

// Signed distance to the obstacle boundary: positive outside, negative inside.
inline double signed_distance(const Point& p, const Obstacle& obs) {
  if (const auto* disc = std::get_if<DiscObstacle>(&obs)) {
    if (!(disc->radius > 0.0)) throw Error("signed_distance: disc radius must be positive");
    return (p - disc->center).norm() - disc->radius;
  }
  const auto& poly = std::get<PolyObstacle>(obs);
  if (poly.vertices.size() < 3)
    throw Error("signed_distance: polygon needs at least three vertices");
  double d = std::numeric_limits<double>::infinity();
  size_t n = poly.vertices.size();
  for (size_t i = 0; i < n; ++i)
    d = std::min(d, distance_to_segment(p, poly.vertices[i], poly.vertices[(i + 1) % n]));
  return point_in_polygon(p, poly.vertices) ? -d : d;
}

// Worst clearance along the path: min over poses and obstacles of
// signed_distance - footprint radius, with leaving the domain rectangle scored
// like penetrating an obstacle. No obstacles and never leaving the domain
// yields +infinity (unconstrained).
inline double prox_constraint(const Path& path, const std::vector<Obstacle>& obstacles,
                              const RobotFootprint& footprint, const Rect& domain) {
  double worst = std::numeric_limits<double>::infinity();
  for (const Pose& q : path.poses) {
    Point p = q.position();
    if (!domain.contains(p))
      worst = std::min(worst, -rect_outside_distance(p, domain) - footprint.radius);
    for (const Obstacle& obs : obstacles)
      worst = std::min(worst, signed_distance(p, obs) - footprint.radius);
  }
  return worst;
}

enum class AcquisitionKind { Aas, Lse, Unc, Ei };

inline const char* to_string(AcquisitionKind k) {
  switch (k) {
    case AcquisitionKind::Aas: return "aas";
    case AcquisitionKind::Lse: return "lse";
    case AcquisitionKind::Unc: return "unc";
    case AcquisitionKind::Ei: return "ei";
  }
  throw Error("to_string: bad acquisition kind");
}

inline AcquisitionKind acquisition_kind_from(const std::string& s) {
  if (s == "aas") return AcquisitionKind::Aas;
  if (s == "lse") return AcquisitionKind::Lse;
  if (s == "unc") return AcquisitionKind::Unc;
  if (s == "ei") return AcquisitionKind::Ei;
  throw ConfigError("unknown acquisition method '" + s + "' (expected aas|lse|unc|ei)");
}

struct SearchConfig {
  AcquisitionKind kind = AcquisitionKind::Aas;
  Kernel kernel;
  std::optional<Eigen::Matrix2d> input_noise;  // measurement-location covariance

  int regions_x = 8, regions_y = 8;
  double confidence = 0.9;       // region classification confidence level
  double tau_factor = 0.5;       // adaptive threshold: tau = factor * max posterior mean
  double lse_beta = 9.0;
  double lse_omega = 0.6;        // level h = omega * max posterior mean

  std::optional<AcquisitionField> prior_field;  // normalized, grid-sized
  double decay_halflife = 10.0;                 // in measurements

  std::vector<Obstacle> obstacles;
  RobotFootprint footprint;

  // continuous mode
  PrimitiveBounds bounds;
  int num_primitives = 6;
  double tau_duration = 1.0;        // seconds per primitive
  int samples_per_primitive = 20;   // rollout resolution: dt = tau / this
  int measurement_stride = 4;
  int cem_components = 1;
  CemConfig cem;

  void validate() const {
    kernel.validate();
    if (regions_x < 1 || regions_y < 1)
      throw Error("SearchConfig: region counts must be at least 1");
    if (!(confidence > 0.0 && confidence < 1.0))
      throw Error("SearchConfig: confidence must lie in (0,1)");
    if (!(lse_beta > 0.0)) throw Error("SearchConfig: lse_beta must be positive");
    if (decay_halflife <= 0.0) throw Error("SearchConfig: decay_halflife must be positive");
    bounds.validate();
    if (num_primitives < 1) throw Error("SearchConfig: num_primitives must be at least 1");
    if (!(tau_duration > 0.0)) throw Error("SearchConfig: tau_duration must be positive");
    if (samples_per_primitive < 1)
      throw Error("SearchConfig: samples_per_primitive must be at least 1");
    if (measurement_stride < 1)
      throw Error("SearchConfig: measurement_stride must be at least 1");
    if (cem_components < 1) throw Error("SearchConfig: cem_components must be at least 1");
    cem.validate();
  }
};

struct ProbeSample {
  Point location;     // commanded probe location
  double stiffness;   // estimated stiffness from the probe
};

using ProbeFn = std::function<ProbeSample(const Point&)>;

struct TrajectoryRecord {
  int cycle = 0;
  double time = 0.0;  // global time across cycles
  Pose pose;
};

struct SearchState {
  GpModel gp;
  std::optional<LseState> lse;
  std::vector<ProbeSample> probed;
  Pose pose;
  std::optional<Eigen::VectorXd> incumbent;  // warm start for the next cycle
  int cycles_done = 0;
  Rng rng{0};

  // diagnostics / logging
  std::vector<TrajectoryRecord> trajectory;
  std::vector<std::vector<CemIteration>> cem_traces;
  std::vector<double> cycle_best_cost;
  double time_offset = 0.0;

  static SearchState init(const SearchConfig& cfg, const DomainGrid& grid, Rng rng,
                          bool continuous) {
    cfg.validate();
    if (cfg.prior_field) {
      if (cfg.prior_field->values.size() != grid.size())
        throw Error("SearchState: prior field size does not match grid");
      if (!cfg.prior_field->normalized)
        throw Error("SearchState: prior field must be normalized");
    }
    SearchState st;
    st.rng = rng;
    st.gp = GpModel::fit(cfg.kernel, {}, {});
    if (cfg.kind == AcquisitionKind::Lse)
      st.lse = LseState::init(grid, cfg.lse_beta);
    if (continuous) {
      const Rect& b = grid.bounds();
      for (int attempt = 0;; ++attempt) {
        if (attempt >= 1000)
          throw Error("SearchState: could not draw an initial pose clear of the obstacles");
        st.pose.x = st.rng.uniform(b.xmin, b.xmax);
        st.pose.y = st.rng.uniform(b.ymin, b.ymax);
        st.pose.theta = st.rng.uniform(0.0, 2.0 * std::numbers::pi);
        Path here;
        here.poses.push_back(st.pose);
        here.times.push_back(0.0);
        if (prox_constraint(here, cfg.obstacles, cfg.footprint, b) >= 0.0) break;
      }
    }
    return st;
  }
};

namespace detail {
inline void refit(SearchState& st, const SearchConfig& cfg) {
  std::vector<Point> xs;
  std::vector<double> ys;
  xs.reserve(st.probed.size());
  ys.reserve(st.probed.size());
  for (const ProbeSample& p : st.probed) {
    xs.push_back(p.location);
    ys.push_back(p.stiffness);
  }
  std::vector<Eigen::Matrix2d> noise;
  if (cfg.input_noise) noise.assign(xs.size(), *cfg.input_noise);
  st.gp = GpModel::fit(cfg.kernel, std::move(xs), std::move(ys), std::move(noise));
}
}  // namespace detail

// The acquisition surface for the current model, normalized to max 1 (the
// level-set ambiguity field is shifted by its minimum first). Adaptive
// thresholds refresh here: AAS tau and the LSE level track the current maximum
// posterior mean; EI's incumbent is the best probed stiffness.
inline AcquisitionField acquisition_field(SearchState& st, const SearchConfig& cfg,
                                          const DomainGrid& grid) {
  AcquisitionField f;
  bool shift = false;
  switch (cfg.kind) {
    case AcquisitionKind::Aas: {
      std::vector<Prediction> preds = st.gp.predict(grid.centers());
      double max_mean = -std::numeric_limits<double>::infinity();
      for (const Prediction& p : preds) max_mean = std::max(max_mean, p.mean);
      RegionGrid regions(grid, cfg.regions_x, cfg.regions_y, cfg.tau_factor * max_mean,
                         cfg.confidence);
      f = aas_field(st.gp, regions, grid);
      break;
    }
    case AcquisitionKind::Lse: {
      std::vector<Prediction> preds = st.gp.predict(grid.centers());
      double max_mean = -std::numeric_limits<double>::infinity();
      for (const Prediction& p : preds) max_mean = std::max(max_mean, p.mean);
      if (!st.lse) throw Error("acquisition_field: state was not initialized for LSE");
      st.lse->level_h = cfg.lse_omega * max_mean;
      f = lse_update_and_field(st.gp, *st.lse, grid);
      shift = true;
      break;
    }
    case AcquisitionKind::Unc:
      f = unc_field(st.gp, grid);
      break;
    case AcquisitionKind::Ei: {
      double incumbent = 0.0;
      for (const ProbeSample& p : st.probed) incumbent = std::max(incumbent, p.stiffness);
      f = ei_field(st.gp, grid, incumbent);
      break;
    }
  }
  // A constant surface carries no guidance (e.g. every region already counts
  // as classified, so each candidate scores the same total). Fall back to the
  // posterior-variance surface so the next measurement still explores.
  if (f.values.size() > 0) {
    const double mn = f.values.minCoeff();
    const double mx = f.values.maxCoeff();
    if (mx - mn <= 1e-9 * std::max(1.0, std::abs(mx))) {
      f = unc_field(st.gp, grid);
      shift = false;
    }
  }
  normalize_field(f, shift);
  return f;
}

// Blend the acquisition surface with a decaying prior:
//   xi_total ∝ xi_acq + 2^(-t / halflife) * xi_prior,  t = measurements so far,
// then rescale to max 1.
inline AcquisitionField total_acquisition(const AcquisitionField& acq,
                                          const SearchConfig& cfg, int t) {
  if (!acq.normalized) throw Error("total_acquisition: acquisition field not normalized");
  AcquisitionField out = acq;
  if (cfg.prior_field) {
    double alpha = std::exp2(-double(t) / cfg.decay_halflife);
    out.values += alpha * cfg.prior_field->values;
    out.normalized = false;
    normalize_field(out, false);
  }
  return out;
}

inline AcquisitionField build_total_field(SearchState& st, const SearchConfig& cfg,
                                          const DomainGrid& grid) {
  return total_acquisition(acquisition_field(st, cfg, grid), cfg, int(st.probed.size()));
}

// Negated path integral of the acquisition surface, rectangle rule over the
// rolled-out poses: J = -sum_i xi(q_i) * ds_i. Any clearance violation gates
// the trajectory to +infinity.
inline double trajectory_cost(const PrimitiveParams& params, const Pose& start,
                              const AcquisitionField& field, const DomainGrid& grid,
                              const SearchConfig& cfg) {
  Path path = rollout(start, params, params.tau / cfg.samples_per_primitive);
  if (prox_constraint(path, cfg.obstacles, cfg.footprint, grid.bounds()) < 0.0)
    return std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (size_t i = 1; i < path.poses.size(); ++i) {
    Point p = path.poses[i].position();
    double ds = (p - path.poses[i - 1].position()).norm();
    sum += grid.interpolate(field.values, p) * ds;
  }
  return -sum;
}

// One probe of the discrete loop: probe the argmax cell of the blended
// acquisition surface (first probe uniform-random), then refit.
inline void discrete_step(SearchState& st, const SearchConfig& cfg, const DomainGrid& grid,
                          const ProbeFn& probe) {
  Point x;
  if (st.probed.empty()) {
    const Rect& b = grid.bounds();
    x = {st.rng.uniform(b.xmin, b.xmax), st.rng.uniform(b.ymin, b.ymax)};
  } else {
    AcquisitionField f = build_total_field(st, cfg, grid);
    x = grid.center(argmax_cell(f));
  }
  st.probed.push_back(probe(x));
  detail::refit(st, cfg);
}

// One cycle of the continuous loop: build the blended surface, CE-optimize a
// primitive chain from the current pose, execute it, measure every stride-th
// pose, refit. If every CE sample is infeasible the horizon tau is halved once
// before giving up.
inline void continuous_step(SearchState& st, const SearchConfig& cfg, const DomainGrid& grid,
                            const ProbeFn& probe) {
  AcquisitionField field = build_total_field(st, cfg, grid);
  const int d = 2 * cfg.num_primitives;

  Eigen::VectorXd mean0(d);
  for (int j = 0; j < cfg.num_primitives; ++j) {
    mean0[2 * j] = 0.5 * (cfg.bounds.v_min + cfg.bounds.v_max);
    mean0[2 * j + 1] = 0.5 * (cfg.bounds.w_min + cfg.bounds.w_max);
  }
  Eigen::VectorXd diag(d);
  for (int j = 0; j < cfg.num_primitives; ++j) {
    double hv = 0.5 * (cfg.bounds.v_max - cfg.bounds.v_min);
    double hw = 0.5 * (cfg.bounds.w_max - cfg.bounds.w_min);
    diag[2 * j] = std::max(hv * hv, cfg.cem.min_covariance_floor);
    diag[2 * j + 1] = std::max(hw * hw, cfg.cem.min_covariance_floor);
  }

  GmmParams gmm;
  if (cfg.cem_components == 1) {
    gmm = GmmParams::single(st.incumbent ? *st.incumbent : mean0, diag);
  } else {
    for (int k = 0; k < cfg.cem_components; ++k) {
      Eigen::VectorXd mu(d);
      if (k == 0 && st.incumbent) {
        mu = *st.incumbent;
      } else {
        for (int j = 0; j < cfg.num_primitives; ++j) {
          mu[2 * j] = st.rng.uniform(cfg.bounds.v_min, cfg.bounds.v_max);
          mu[2 * j + 1] = st.rng.uniform(cfg.bounds.w_min, cfg.bounds.w_max);
        }
      }
      gmm.components.push_back(
          {mu, diag.asDiagonal().toDenseMatrix(), 1.0 / cfg.cem_components});
    }
  }

  auto make_cost = [&](double tau) {
    return [&, tau](const Eigen::VectorXd& z) {
      PrimitiveParams p = clamp(PrimitiveParams::from_flat(z, tau, cfg.bounds));
      return trajectory_cost(p, st.pose, field, grid, cfg);
    };
  };

  CemConfig cem_cfg = cfg.cem;
  cem_cfg.seed = st.rng.next_u64();
  // Slowest-speed turn chains: from any pose the executed gate has accepted,
  // these stay (essentially) put, so the population always holds a feasible
  // candidate even when the robot is pressed against a wall facing out.
  for (double w : {cfg.bounds.w_max, cfg.bounds.w_min}) {
    Eigen::VectorXd a(d);
    for (int j = 0; j < cfg.num_primitives; ++j) {
      a[2 * j] = cfg.bounds.v_min;
      a[2 * j + 1] = w;
    }
    cem_cfg.anchors.push_back(a);
  }
  double tau_used = cfg.tau_duration;
  CemResult result;
  try {
    result = optimize(make_cost(tau_used), gmm, cem_cfg);
  } catch (const Error&) {
    tau_used *= 0.5;  // shorter horizon: easier to stay feasible
    cem_cfg.seed = st.rng.next_u64();
    try {
      result = optimize(make_cost(tau_used), gmm, cem_cfg);
    } catch (const Error&) {
      throw Error("continuous_step: no feasible trajectory found even after halving tau");
    }
  }

  PrimitiveParams best = clamp(PrimitiveParams::from_flat(result.best, tau_used, cfg.bounds));
  Path path = rollout(st.pose, best, tau_used / cfg.samples_per_primitive);
  if (prox_constraint(path, cfg.obstacles, cfg.footprint, grid.bounds()) < 0.0)
    throw Error("continuous_step: optimized trajectory violates clearance");

  ++st.cycles_done;
  for (size_t i = 0; i < path.poses.size(); ++i)
    st.trajectory.push_back({st.cycles_done, st.time_offset + path.times[i], path.poses[i]});
  st.time_offset += path.times.back();
  st.cem_traces.push_back(result.trace);
  st.cycle_best_cost.push_back(result.best_cost);
  st.incumbent = best.to_flat();
  st.pose = path.poses.back();

  // Measure every stride-th pose along the executed path; the start pose is
  // the previous cycle's endpoint, so counting begins after it.
  const int steps = int(path.poses.size()) - 1;
  for (int k = 1; k * cfg.measurement_stride <= steps; ++k) {
    const Pose& q = path.poses[k * cfg.measurement_stride];
    st.probed.push_back(probe(q.position()));
  }
  detail::refit(st, cfg);
}

}  // namespace stiffsearch
