// Command-line driver: palpation-search simulations over synthetic stiffness
// phantoms, with replayable manifests.

#include "stiffsearch/stiffsearch.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using namespace stiffsearch;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string method;
  long seed = -1;
  int runs = -1;
};

Config load_config(const CommonOpts& o) {
  Config cfg = o.config_path.empty()
                   ? Config::from_map({}, "defaults")
                   : Config::load(o.config_path);
  if (o.seed >= 0) cfg.seed = std::uint64_t(o.seed);
  if (!o.method.empty()) {
    acquisition_kind_from(o.method);
    cfg.method = o.method;
  }
  if (o.runs >= 0) {
    if (o.runs < 1) throw ConfigError("--runs must be at least 1");
    cfg.batch_runs = o.runs;
  }
  return cfg;
}

std::string probe_log_csv(const RunResult& r) {
  std::string o = "step,x,y,stiffness_estimate,recall\n";
  for (const StepRecord& s : r.steps)
    o += std::to_string(s.step) + "," + format_double(s.location.x()) + "," +
         format_double(s.location.y()) + "," + format_double(s.estimate) + "," +
         format_double(s.recall) + "\n";
  return o;
}

std::string region_labels_csv(const RunResult& r, const Config& cfg) {
  DomainGrid grid = cfg.make_grid();
  double tau_truth = cfg.tau_truth_factor * r.phantom.max_value();
  RegionGrid regions(grid, cfg.regions_nx, cfg.regions_ny, tau_truth, cfg.confidence);
  std::string o = "region,xmin,xmax,ymin,ymax,label,truth\n";
  const auto& rs = regions.regions();
  for (size_t i = 0; i < rs.size(); ++i)
    o += std::to_string(i) + "," + format_double(rs[i].rect.xmin) + "," +
         format_double(rs[i].rect.xmax) + "," + format_double(rs[i].rect.ymin) + "," +
         format_double(rs[i].rect.ymax) + "," + (r.labels[i] ? "1" : "0") + "," +
         (r.truth[i] ? "1" : "0") + "\n";
  return o;
}

std::string trajectory_csv(const RunResult& r) {
  std::string o = "cycle,time,x,y,theta\n";
  for (const TrajectoryRecord& t : r.trajectory)
    o += std::to_string(t.cycle) + "," + format_double(t.time) + "," +
         format_double(t.pose.x) + "," + format_double(t.pose.y) + "," +
         format_double(t.pose.theta) + "\n";
  return o;
}

std::string cem_trace_csv(const RunResult& r) {
  std::string o = "cycle,iteration,best_cost,sample_mean_cost,elite_mean_cost\n";
  for (size_t c = 0; c < r.cem_traces.size(); ++c)
    for (const CemIteration& it : r.cem_traces[c])
      o += std::to_string(c + 1) + "," + std::to_string(it.iteration) + "," +
           format_double(it.best_cost) + "," + format_double(it.sample_mean_cost) + "," +
           format_double(it.elite_mean_cost) + "\n";
  return o;
}

std::string recall_curves_csv(const BatchResult& b) {
  std::string o = "method,step,mean_recall,sd_recall,n_effective\n";
  for (const std::string& m : b.methods)
    for (const CurvePoint& p : b.curves.at(m))
      o += m + "," + std::to_string(p.step) + "," + format_double(p.mean_recall) + "," +
           format_double(p.sd_recall) + "," + std::to_string(p.n_effective) + "\n";
  return o;
}

void write_manifest(const fs::path& dir, const std::string& mode, const Config& cfg,
                    const std::vector<std::string>& outputs, const std::string& created) {
  Manifest m;
  m.version = kVersion;
  m.mode = mode;
  m.created = created;
  m.finished = utc_now();
  m.outputs = outputs;
  m.config = cfg;
  write_file_atomic(dir / "manifest.txt", manifest_to_text(m));
}

RunResult write_single_artifacts(const Config& cfg, const std::string& mode,
                                 const fs::path& out_dir) {
  std::string created = utc_now();
  fs::create_directories(out_dir);
  RunResult r = mode == "discrete" ? run_discrete(cfg, cfg.seed, cfg.seed)
                                   : run_continuous(cfg, cfg.seed, cfg.seed);
  DomainGrid grid = cfg.make_grid();
  std::vector<std::string> outputs;
  write_file_atomic(out_dir / "probe_log.csv", probe_log_csv(r));
  outputs.push_back("probe_log.csv");
  write_file_atomic(out_dir / "estimated_field.csv", field_to_csv(grid, r.estimated_field));
  outputs.push_back("estimated_field.csv");
  write_file_atomic(out_dir / "region_labels.csv", region_labels_csv(r, cfg));
  outputs.push_back("region_labels.csv");
  if (mode == "continuous") {
    write_file_atomic(out_dir / "trajectory.csv", trajectory_csv(r));
    outputs.push_back("trajectory.csv");
    write_file_atomic(out_dir / "cem_trace.csv", cem_trace_csv(r));
    outputs.push_back("cem_trace.csv");
  }
  write_manifest(out_dir, mode, cfg, outputs, created);
  return r;
}

int run_single(const Config& cfg, const std::string& mode, const fs::path& out_dir) {
  RunResult r = write_single_artifacts(cfg, mode, out_dir);
  std::cout << mode << " run finished: " << r.steps.size() << " measurements, final recall "
            << format_double(r.final_recall) << "\n";
  return 0;
}

void write_batch_artifacts(const Config& cfg, const fs::path& out_dir, bool verbose) {
  std::string created = utc_now();
  fs::create_directories(out_dir);
  BatchResult b = run_batch(cfg, cfg.batch_mode, cfg.batch_runs, cfg.seed);
  write_file_atomic(out_dir / "recall_curves.csv", recall_curves_csv(b));
  write_manifest(out_dir, "batch", cfg, {"recall_curves.csv"}, created);
  if (verbose) {
    for (const BatchFailure& f : b.failures)
      std::cerr << "warning: " << f.method << " run " << f.run_index
                << " failed: " << f.message << "\n";
    std::cout << "batch finished: " << b.methods.size() << " methods x " << cfg.batch_runs
              << " runs (" << b.failures.size() << " failures)\n";
  }
}

int validate_cmd(const fs::path& manifest_path, std::string out_dir_opt) {
  Manifest m = load_manifest(manifest_path);
  fs::path orig_dir = manifest_path.parent_path();
  fs::path work = out_dir_opt.empty()
                      ? fs::temp_directory_path() /
                            ("stiffsearch-validate-" +
                             std::to_string(
                                 std::chrono::steady_clock::now().time_since_epoch().count()))
                      : fs::path(out_dir_opt);
  fs::create_directories(work);

  // Re-run with the manifest's own config, then compare artifacts byte for byte.
  if (m.mode == "batch")
    write_batch_artifacts(m.config, work, false);
  else
    write_single_artifacts(m.config, m.mode, work);

  bool ok = true;
  for (const std::string& name : m.outputs) {
    fs::path a = orig_dir / name;
    fs::path b = work / name;
    if (!fs::exists(a) || !fs::exists(b)) {
      std::cerr << name << ": MISSING\n";
      ok = false;
      continue;
    }
    std::string ca = read_file(a);
    std::string cb = read_file(b);
    bool same = ca == cb;
    std::cout << name << ": " << (same ? "OK" : "MISMATCH") << "\n";
    ok = ok && same;
  }

  // Clearance re-check on the recorded trajectory.
  auto traj_it = std::find(m.outputs.begin(), m.outputs.end(), std::string("trajectory.csv"));
  if (traj_it != m.outputs.end() && fs::exists(orig_dir / "trajectory.csv")) {
    std::vector<std::string> lines = split(read_file(orig_dir / "trajectory.csv"), '\n');
    Path path;
    for (size_t i = 1; i < lines.size(); ++i) {
      std::string ln = strip(lines[i]);
      if (ln.empty()) continue;
      std::vector<std::string> f = split(ln, ',');
      if (f.size() != 5) continue;
      path.poses.push_back({parse_double(f[2], "trajectory.csv"),
                            parse_double(f[3], "trajectory.csv"),
                            parse_double(f[4], "trajectory.csv")});
    }
    RobotFootprint fp{m.config.footprint_radius};
    double clearance = path.poses.empty()
                           ? 0.0
                           : prox_constraint(path, m.config.obstacles, fp, m.config.domain);
    bool clear_ok = path.poses.empty() || clearance >= 0.0;
    std::cout << "clearance: " << (clear_ok ? "OK" : "VIOLATED") << "\n";
    ok = ok && clear_ok;
  }

  if (out_dir_opt.empty()) {
    std::error_code ec;
    fs::remove_all(work, ec);
  }
  if (!ok) {
    std::cerr << "validation failed\n";
    return kExitRuntime;
  }
  std::cout << "validation passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active stiffness-mapping search simulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonOpts opt;
  std::string manifest_path;
  std::string phantom_out;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", opt.config_path, "Config file (key = value lines)");
    sub->add_option("--seed", opt.seed, "Override config seed");
    sub->add_option("--method", opt.method, "Override acquisition method (aas|lse|unc|ei)");
    auto* o = sub->add_option("--out", opt.out_dir, "Output directory");
    if (needs_out) o->required();
  };

  CLI::App* run_d = app.add_subcommand("run-discrete", "Single discrete-probing run");
  add_common(run_d, true);
  CLI::App* run_c = app.add_subcommand("run-continuous", "Single trajectory-palpation run");
  add_common(run_c, true);
  CLI::App* batch = app.add_subcommand("batch", "Repeated seeded runs, aggregated recall");
  add_common(batch, true);
  batch->add_option("--runs", opt.runs, "Override batch.runs");
  std::string batch_mode;
  batch->add_option("--mode", batch_mode, "Override batch.mode (discrete|continuous)")
      ->check(CLI::IsMember({"discrete", "continuous"}));
  CLI::App* gen = app.add_subcommand("gen-phantom", "Write a synthetic phantom field CSV");
  gen->add_option("--config", opt.config_path, "Config file");
  gen->add_option("--seed", opt.seed, "Override config seed");
  gen->add_option("--out", phantom_out, "Output CSV path")->required();
  CLI::App* val = app.add_subcommand("validate", "Replay a manifest and compare artifacts");
  val->add_option("--manifest", manifest_path, "Path to manifest.txt")->required();
  val->add_option("--out", opt.out_dir, "Keep replay outputs in this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (run_d->parsed()) return run_single(load_config(opt), "discrete", opt.out_dir);
    if (run_c->parsed()) return run_single(load_config(opt), "continuous", opt.out_dir);
    if (batch->parsed()) {
      Config cfg = load_config(opt);
      if (!batch_mode.empty()) cfg.batch_mode = batch_mode;
      write_batch_artifacts(cfg, opt.out_dir, true);
      return 0;
    }
    if (gen->parsed()) {
      Config cfg = load_config(opt);
      DomainGrid grid = cfg.make_grid();
      StiffnessField f = generate_phantom(cfg.seed, grid, cfg.make_phantom_params());
      save_field_csv(phantom_out, grid, f.values);
      std::cout << "phantom written to " << phantom_out << "\n";
      return 0;
    }
    if (val->parsed()) return validate_cmd(manifest_path, opt.out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
