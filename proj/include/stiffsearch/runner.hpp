#pragma once

#include "stiffsearch/config.hpp"

#include <atomic>
#include <map>
#include <thread>
#include <vector>

namespace stiffsearch {

struct StepRecord {
  int step = 0;           // probe index (discrete) / measurement index (continuous)
  Point location;         // commanded probe location
  double estimate = 0.0;
  double recall = 0.0;    // recall after the refit that incorporated this probe
};

struct RunResult {
  std::vector<StepRecord> steps;
  std::vector<TrajectoryRecord> trajectory;               // continuous only
  std::vector<std::vector<CemIteration>> cem_traces;      // continuous only
  Eigen::VectorXd estimated_field;                        // posterior mean per cell
  std::vector<bool> labels;                               // final agent labels
  std::vector<bool> truth;
  StiffnessField phantom;
  double final_recall = 0.0;
};

namespace detail {

struct RunSetup {
  DomainGrid grid;
  StiffnessField phantom;
  RegionGrid scoring_regions;
  std::vector<bool> truth;
  SearchConfig search;
  ProbeModel probe_model;
  Rng probe_rng{0};
};

// Streams carved off the run seed: phantom geometry, probe noise, search
// decisions. Keeping them separate means e.g. turning probe noise on cannot
// change which phantom gets generated.
inline RunSetup make_setup(const Config& cfg, std::uint64_t phantom_seed,
                           std::uint64_t run_seed) {
  RunSetup s{cfg.make_grid(),
             {},
             RegionGrid(cfg.make_grid(), 1, 1, 0.0, 0.5),  // placeholder, rebuilt below
             {},
             cfg.make_search_config(),
             cfg.make_probe_model(),
             Rng::stream(run_seed, 11)};
  s.phantom = cfg.phantom_file.empty()
                  ? generate_phantom(phantom_seed, s.grid, cfg.make_phantom_params())
                  : load_field_csv(cfg.phantom_file);
  if (s.phantom.grid.size() != s.grid.size() ||
      s.phantom.grid.nx() != s.grid.nx())
    throw ConfigError("phantom file grid does not match configured grid");
  s.phantom.validate();
  double tau_truth = cfg.tau_truth_factor * s.phantom.max_value();
  s.scoring_regions =
      RegionGrid(s.grid, cfg.regions_nx, cfg.regions_ny, tau_truth, cfg.confidence);
  s.truth = truth_labels(s.phantom, s.scoring_regions);
  if (!cfg.prior_file.empty()) {
    StiffnessField prior = load_field_csv(cfg.prior_file, false);
    if (prior.grid.size() != s.grid.size() || prior.grid.nx() != s.grid.nx())
      throw ConfigError("prior file grid does not match configured grid");
    AcquisitionField pf;
    pf.values = prior.values;
    normalize_field(pf, true);
    s.search.prior_field = pf;
  }
  return s;
}

inline ProbeFn make_probe_fn(RunSetup& s) {
  return [&s](const Point& x) {
    return ProbeSample{x, simulate_probe(s.phantom, x, s.probe_model, s.probe_rng)};
  };
}

inline void finish_result(RunResult& r, const RunSetup& s, const SearchState& st) {
  std::vector<Prediction> preds = st.gp.predict(s.grid.centers());
  r.estimated_field.resize(s.grid.size());
  for (int i = 0; i < s.grid.size(); ++i) r.estimated_field[i] = preds[i].mean;
  r.labels = classify_regions(st.gp, s.scoring_regions, s.grid);
  r.truth = s.truth;
  r.phantom = s.phantom;
  r.final_recall = r.steps.empty() ? score_recall(r.labels, r.truth) : r.steps.back().recall;
}

}  // namespace detail

inline RunResult run_discrete(const Config& cfg, std::uint64_t phantom_seed,
                              std::uint64_t run_seed) {
  detail::RunSetup s = detail::make_setup(cfg, phantom_seed, run_seed);
  ProbeFn probe = detail::make_probe_fn(s);
  SearchState st = SearchState::init(s.search, s.grid, Rng::stream(run_seed, 13), false);

  RunResult r;
  for (int step = 1; step <= cfg.search_probes; ++step) {
    discrete_step(st, s.search, s.grid, probe);
    double rec =
        score_recall(classify_regions(st.gp, s.scoring_regions, s.grid), s.truth);
    const ProbeSample& p = st.probed.back();
    r.steps.push_back({step, p.location, p.stiffness, rec});
  }
  detail::finish_result(r, s, st);
  return r;
}

inline RunResult run_continuous(const Config& cfg, std::uint64_t phantom_seed,
                                std::uint64_t run_seed) {
  detail::RunSetup s = detail::make_setup(cfg, phantom_seed, run_seed);
  ProbeFn probe = detail::make_probe_fn(s);
  SearchState st = SearchState::init(s.search, s.grid, Rng::stream(run_seed, 13), true);

  RunResult r;
  for (int cycle = 1; cycle <= cfg.search_cycles; ++cycle) {
    size_t before = st.probed.size();
    continuous_step(st, s.search, s.grid, probe);
    double rec =
        score_recall(classify_regions(st.gp, s.scoring_regions, s.grid), s.truth);
    for (size_t i = before; i < st.probed.size(); ++i)
      r.steps.push_back({int(i) + 1, st.probed[i].location, st.probed[i].stiffness, rec});
  }
  r.trajectory = st.trajectory;
  r.cem_traces = st.cem_traces;
  detail::finish_result(r, s, st);
  return r;
}

struct CurvePoint {
  int step = 0;
  double mean_recall = 0.0;
  double sd_recall = 0.0;
  int n_effective = 0;
};

struct BatchFailure {
  std::string method;
  int run_index = 0;
  std::string message;
};

struct BatchResult {
  std::vector<std::string> methods;
  std::map<std::string, std::vector<CurvePoint>> curves;
  std::vector<BatchFailure> failures;
};

// Repeated seeded runs per method with aggregated recall curves. Random-truths
// draws a fresh phantom per run (seed0+i); fixed-truth reuses seed0's phantom
// for every run. The per-run work is farmed to an indexed-slot thread pool and
// reduced in run order, so the report does not depend on scheduling (on a
// single-core host this degenerates to sequential execution).
inline BatchResult run_batch(const Config& cfg, const std::string& mode, int n_runs,
                             std::uint64_t seed0) {
  if (n_runs < 1) throw Error("run_batch: n_runs must be at least 1");
  if (mode != "discrete" && mode != "continuous")
    throw Error("run_batch: mode must be discrete or continuous");
  BatchResult out;
  out.methods = cfg.batch_methods;

  struct Slot {
    bool ok = false;
    std::vector<double> recalls;
    std::string error;
  };

  for (const std::string& method : cfg.batch_methods) {
    Config mc = cfg;
    mc.method = method;
    std::vector<Slot> slots(n_runs);

    auto work = [&](int i) {
      std::uint64_t run_seed = seed0 + std::uint64_t(i);
      std::uint64_t phantom_seed = cfg.batch_protocol == "fixed-truth" ? seed0 : run_seed;
      Slot sl;
      try {
        RunResult r = mode == "discrete" ? run_discrete(mc, phantom_seed, run_seed)
                                         : run_continuous(mc, phantom_seed, run_seed);
        sl.ok = true;
        sl.recalls.reserve(r.steps.size());
        for (const StepRecord& st : r.steps) sl.recalls.push_back(st.recall);
      } catch (const std::exception& e) {
        sl.error = e.what();
      }
      return sl;
    };

    unsigned hw = std::thread::hardware_concurrency();
    int workers = std::max(1, int(std::min<unsigned>(hw == 0 ? 1 : hw, unsigned(n_runs))));
    if (workers == 1) {
      for (int i = 0; i < n_runs; ++i) slots[i] = work(i);
    } else {
      std::atomic<int> next{0};
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
          for (;;) {
            int i = next.fetch_add(1);
            if (i >= n_runs) return;
            slots[i] = work(i);
          }
        });
      for (auto& t : pool) t.join();
    }

    size_t max_len = 0;
    for (int i = 0; i < n_runs; ++i) {
      if (!slots[i].ok) {
        out.failures.push_back({method, i, slots[i].error});
        continue;
      }
      max_len = std::max(max_len, slots[i].recalls.size());
    }
    std::vector<CurvePoint> curve(max_len);
    for (size_t k = 0; k < max_len; ++k) {
      double sum = 0.0;
      int n = 0;
      for (const Slot& sl : slots)
        if (sl.ok && k < sl.recalls.size()) {
          sum += sl.recalls[k];
          ++n;
        }
      double mean = n > 0 ? sum / n : 0.0;
      double ss = 0.0;
      for (const Slot& sl : slots)
        if (sl.ok && k < sl.recalls.size()) ss += (sl.recalls[k] - mean) * (sl.recalls[k] - mean);
      double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
      curve[k] = {int(k) + 1, mean, sd, n};
    }
    out.curves[method] = std::move(curve);
  }
  return out;
}

}  // namespace stiffsearch
