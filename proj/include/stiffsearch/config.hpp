#pragma once

#include "stiffsearch/io.hpp"
#include "stiffsearch/search.hpp"
#include "stiffsearch/version.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace stiffsearch {

// Flat "key = value" text, '#' comments, blank lines ignored.
inline std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                        const std::string& what) {
  std::map<std::string, std::string> kv;
  int lineno = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++lineno;
    std::string line = raw;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(what + " line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(what + " line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key)) throw ConfigError(what + ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

// Typed accessors over the key/value map; tracks consumption so anything left
// over is reported as an unknown key.
class KvReader {
 public:
  KvReader(std::map<std::string, std::string> kv, std::string what)
      : kv_(std::move(kv)), what_(std::move(what)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    return parse_double(it->second, what_ + " key '" + key + "'");
  }

  int get_int(const std::string& key, int fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    return int(parse_int(it->second, what_ + " key '" + key + "'"));
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    long v = parse_int(it->second, what_ + " key '" + key + "'");
    if (v < 0) throw ConfigError(what_ + " key '" + key + "' must be non-negative");
    return std::uint64_t(v);
  }

  bool get_bool(const std::string& key, bool fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    const std::string& v = it->second;
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(what_ + " key '" + key + "': expected true/false, got '" + v + "'");
  }

  // All entries whose key starts with the prefix, marked consumed.
  std::vector<std::pair<std::string, std::string>> take_prefixed(const std::string& prefix) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, v] : kv_)
      if (k.rfind(prefix, 0) == 0) {
        consumed_.insert(k);
        out.emplace_back(k, v);
      }
    return out;
  }

  void finish() const {
    for (const auto& [k, v] : kv_)
      if (!consumed_.count(k)) throw ConfigError(what_ + ": unknown key '" + k + "'");
  }

  const std::string& what() const { return what_; }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> consumed_;
  std::string what_;
};

struct Config {
  std::uint64_t seed = 0;

  Rect domain{0.0, 1.0, 0.0, 1.0};
  int grid_nx = 50, grid_ny = 50;
  int regions_nx = 8, regions_ny = 8;

  double gp_lengthscale = 0.0;  // 0 = auto: 0.1 * domain width
  double gp_signal_variance = 1.0;
  double gp_noise_variance = 0.01;
  double gp_input_noise_sd = 0.0;  // >0 enables the corrected kernel

  std::string method = "aas";
  double confidence = 0.9;
  double tau_factor = 0.5;
  double lse_beta = 9.0;
  double lse_omega = 0.6;

  std::string prior_file;
  double prior_halflife = 10.0;

  int traj_primitives = 6;
  double traj_tau = 0.0;  // 0 = auto: 0.15 * diagonal / (primitives * v_max)
  int traj_samples_per_primitive = 20;
  double traj_v_min = 0.0, traj_v_max = 0.2;
  double traj_w_min = -6.2832, traj_w_max = 6.2832;

  int cem_components = 1;
  int cem_samples = 200;
  double cem_elite_frac = 0.1;
  int cem_max_iters = 30;
  double cem_floor = 1e-6;
  double cem_tol = 1e-4;

  int search_probes = 30;
  int search_cycles = 6;
  int search_stride = 4;

  double probe_position_noise_sd = 0.0;
  double probe_force_noise_sd = 0.0;
  int probe_displacement_steps = 5;
  double probe_max_indent = 1.0;

  std::string phantom_file;
  double phantom_baseline = 1.0;
  int phantom_inclusions = 2;
  double phantom_amp_lo = 3.0, phantom_amp_hi = 6.0;        // x baseline
  double phantom_width_lo = 0.05, phantom_width_hi = 0.12;  // x domain width

  double tau_truth_factor = 0.5;

  int batch_runs = 100;
  std::string batch_mode = "discrete";
  std::string batch_protocol = "random-truths";
  std::vector<std::string> batch_methods{"aas", "lse", "unc", "ei"};

  double footprint_radius = 0.0;
  std::vector<Obstacle> obstacles;

  static Config from_reader(KvReader& r) {
    Config c;
    c.seed = r.get_u64("seed", c.seed);
    c.domain.xmin = r.get_double("domain.xmin", c.domain.xmin);
    c.domain.xmax = r.get_double("domain.xmax", c.domain.xmax);
    c.domain.ymin = r.get_double("domain.ymin", c.domain.ymin);
    c.domain.ymax = r.get_double("domain.ymax", c.domain.ymax);
    c.grid_nx = r.get_int("grid.nx", c.grid_nx);
    c.grid_ny = r.get_int("grid.ny", c.grid_ny);
    c.regions_nx = r.get_int("regions.nx", c.regions_nx);
    c.regions_ny = r.get_int("regions.ny", c.regions_ny);

    c.gp_lengthscale = r.get_double("gp.lengthscale", c.gp_lengthscale);
    c.gp_signal_variance = r.get_double("gp.signal_variance", c.gp_signal_variance);
    c.gp_noise_variance = r.get_double("gp.noise_variance", c.gp_noise_variance);
    c.gp_input_noise_sd = r.get_double("gp.input_noise_sd", c.gp_input_noise_sd);

    c.method = r.get_string("acquisition.method", c.method);
    acquisition_kind_from(c.method);  // validates
    c.confidence = r.get_double("acquisition.confidence", c.confidence);
    c.tau_factor = r.get_double("acquisition.tau_factor", c.tau_factor);
    c.lse_beta = r.get_double("acquisition.lse_beta", c.lse_beta);
    c.lse_omega = r.get_double("acquisition.lse_omega", c.lse_omega);

    c.prior_file = r.get_string("prior.file", c.prior_file);
    c.prior_halflife = r.get_double("prior.halflife", c.prior_halflife);

    c.traj_primitives = r.get_int("trajectory.primitives", c.traj_primitives);
    c.traj_tau = r.get_double("trajectory.tau", c.traj_tau);
    c.traj_samples_per_primitive =
        r.get_int("trajectory.samples_per_primitive", c.traj_samples_per_primitive);
    c.traj_v_min = r.get_double("trajectory.v_min", c.traj_v_min);
    c.traj_v_max = r.get_double("trajectory.v_max", c.traj_v_max);
    c.traj_w_min = r.get_double("trajectory.w_min", c.traj_w_min);
    c.traj_w_max = r.get_double("trajectory.w_max", c.traj_w_max);

    c.cem_components = r.get_int("cem.components", c.cem_components);
    c.cem_samples = r.get_int("cem.samples", c.cem_samples);
    c.cem_elite_frac = r.get_double("cem.elite_frac", c.cem_elite_frac);
    c.cem_max_iters = r.get_int("cem.max_iters", c.cem_max_iters);
    c.cem_floor = r.get_double("cem.covariance_floor", c.cem_floor);
    c.cem_tol = r.get_double("cem.tolerance", c.cem_tol);

    c.search_probes = r.get_int("search.probes", c.search_probes);
    c.search_cycles = r.get_int("search.cycles", c.search_cycles);
    c.search_stride = r.get_int("search.stride", c.search_stride);

    c.probe_position_noise_sd =
        r.get_double("probe.position_noise_sd", c.probe_position_noise_sd);
    c.probe_force_noise_sd = r.get_double("probe.force_noise_sd", c.probe_force_noise_sd);
    c.probe_displacement_steps =
        r.get_int("probe.displacement_steps", c.probe_displacement_steps);
    c.probe_max_indent = r.get_double("probe.max_indent", c.probe_max_indent);

    c.phantom_file = r.get_string("phantom.file", c.phantom_file);
    c.phantom_baseline = r.get_double("phantom.baseline", c.phantom_baseline);
    c.phantom_inclusions = r.get_int("phantom.inclusions", c.phantom_inclusions);
    c.phantom_amp_lo = r.get_double("phantom.amp_lo", c.phantom_amp_lo);
    c.phantom_amp_hi = r.get_double("phantom.amp_hi", c.phantom_amp_hi);
    c.phantom_width_lo = r.get_double("phantom.width_lo", c.phantom_width_lo);
    c.phantom_width_hi = r.get_double("phantom.width_hi", c.phantom_width_hi);

    c.tau_truth_factor = r.get_double("score.tau_truth_factor", c.tau_truth_factor);

    c.batch_runs = r.get_int("batch.runs", c.batch_runs);
    c.batch_mode = r.get_string("batch.mode", c.batch_mode);
    if (c.batch_mode != "discrete" && c.batch_mode != "continuous")
      throw ConfigError(r.what() + " key 'batch.mode': expected discrete or continuous, "
                        "got '" + c.batch_mode + "'");
    c.batch_protocol = r.get_string("batch.protocol", c.batch_protocol);
    if (c.batch_protocol != "random-truths" && c.batch_protocol != "fixed-truth")
      throw ConfigError(r.what() + " key 'batch.protocol': expected random-truths or "
                        "fixed-truth, got '" + c.batch_protocol + "'");
    std::string methods = r.get_string("batch.methods", "aas,lse,unc,ei");
    c.batch_methods.clear();
    for (const std::string& m : split(methods, ',')) {
      std::string t = strip(m);
      if (t.empty()) continue;
      acquisition_kind_from(t);
      c.batch_methods.push_back(t);
    }
    if (c.batch_methods.empty())
      throw ConfigError(r.what() + " key 'batch.methods': no methods listed");

    c.footprint_radius = r.get_double("footprint.radius", c.footprint_radius);

    for (const auto& [key, value] : r.take_prefixed("obstacle."))
      c.obstacles.push_back(parse_obstacle(key, value, r.what()));

    r.finish();
    c.resolve_and_validate(r.what());
    return c;
  }

  static Config from_map(const std::map<std::string, std::string>& kv,
                         const std::string& what) {
    KvReader r(kv, what);
    return from_reader(r);
  }

  static Config load(const std::filesystem::path& path) {
    std::string what = "config '" + path.string() + "'";
    return from_map(parse_kv_text(read_file(path), what), what);
  }

  static Obstacle parse_obstacle(const std::string& key, const std::string& value,
                                 const std::string& what) {
    const std::string ctx = what + " key '" + key + "'";
    size_t colon = value.find(':');
    if (colon == std::string::npos)
      throw ConfigError(ctx + ": expected 'disc:cx,cy,r' or 'poly:x,y;x,y;...'");
    std::string kind = strip(value.substr(0, colon));
    std::string rest = strip(value.substr(colon + 1));
    if (kind == "disc") {
      std::vector<std::string> parts = split(rest, ',');
      if (parts.size() != 3) throw ConfigError(ctx + ": disc needs cx,cy,r");
      DiscObstacle d;
      d.center = {parse_double(strip(parts[0]), ctx), parse_double(strip(parts[1]), ctx)};
      d.radius = parse_double(strip(parts[2]), ctx);
      if (!(d.radius > 0.0)) throw ConfigError(ctx + ": disc radius must be positive");
      return d;
    }
    if (kind == "poly") {
      PolyObstacle p;
      for (const std::string& pair : split(rest, ';')) {
        std::vector<std::string> xy = split(pair, ',');
        if (xy.size() != 2) throw ConfigError(ctx + ": polygon vertices are 'x,y' pairs");
        p.vertices.push_back(
            {parse_double(strip(xy[0]), ctx), parse_double(strip(xy[1]), ctx)});
      }
      if (p.vertices.size() < 3)
        throw ConfigError(ctx + ": polygon needs at least three vertices");
      return p;
    }
    throw ConfigError(ctx + ": unknown obstacle kind '" + kind + "'");
  }

  void resolve_and_validate(const std::string& what) {
    try {
      domain.validate();
    } catch (const Error& e) {
      throw ConfigError(what + ": " + e.what());
    }
    if (gp_lengthscale == 0.0) gp_lengthscale = 0.1 * domain.width();
    if (traj_tau == 0.0)
      traj_tau = 0.15 * domain.diagonal() / (traj_primitives * traj_v_max);
    if (grid_nx < 2 || grid_ny < 2)
      throw ConfigError(what + ": grid.nx and grid.ny must be at least 2");
    if (search_probes < 0 || search_cycles < 0)
      throw ConfigError(what + ": search budgets must be non-negative");
    if (batch_runs < 1) throw ConfigError(what + ": batch.runs must be at least 1");
    if (gp_input_noise_sd < 0.0)
      throw ConfigError(what + ": gp.input_noise_sd must be non-negative");
    if (probe_position_noise_sd < 0.0)
      throw ConfigError(what + ": probe.position_noise_sd must be non-negative");
    if (footprint_radius < 0.0)
      throw ConfigError(what + ": footprint.radius must be non-negative");
    try {
      make_kernel().validate();
      make_search_config().validate();
      make_phantom_params().validate();
      make_probe_model().validate();
    } catch (const Error& e) {
      throw ConfigError(what + ": " + e.what());
    }
  }

  DomainGrid make_grid() const { return DomainGrid(domain, grid_nx, grid_ny); }

  Kernel make_kernel() const {
    return Kernel{gp_lengthscale, gp_signal_variance, gp_noise_variance};
  }

  PhantomParams make_phantom_params() const {
    PhantomParams p;
    p.baseline = phantom_baseline;
    p.n_inclusions = phantom_inclusions;
    p.amp_lo = phantom_amp_lo * phantom_baseline;
    p.amp_hi = phantom_amp_hi * phantom_baseline;
    p.width_lo = phantom_width_lo * domain.width();
    p.width_hi = phantom_width_hi * domain.width();
    return p;
  }

  ProbeModel make_probe_model() const {
    ProbeModel m;
    m.position_noise = probe_position_noise_sd * probe_position_noise_sd *
                       Eigen::Matrix2d::Identity();
    m.force_noise_sd = probe_force_noise_sd;
    m.displacement_steps = probe_displacement_steps;
    m.max_indent = probe_max_indent;
    return m;
  }

  SearchConfig make_search_config() const {
    SearchConfig s;
    s.kind = acquisition_kind_from(method);
    s.kernel = make_kernel();
    if (gp_input_noise_sd > 0.0)
      s.input_noise =
          gp_input_noise_sd * gp_input_noise_sd * Eigen::Matrix2d::Identity();
    s.regions_x = regions_nx;
    s.regions_y = regions_ny;
    s.confidence = confidence;
    s.tau_factor = tau_factor;
    s.lse_beta = lse_beta;
    s.lse_omega = lse_omega;
    s.decay_halflife = prior_halflife;
    s.obstacles = obstacles;
    s.footprint.radius = footprint_radius;
    s.bounds = PrimitiveBounds{traj_v_min, traj_v_max, traj_w_min, traj_w_max};
    s.num_primitives = traj_primitives;
    s.tau_duration = traj_tau;
    s.samples_per_primitive = traj_samples_per_primitive;
    s.measurement_stride = search_stride;
    s.cem_components = cem_components;
    s.cem = CemConfig{cem_samples, cem_elite_frac, cem_max_iters, cem_floor, cem_tol, 0};
    return s;
  }

  std::string obstacle_to_string(const Obstacle& obs) const {
    if (const auto* disc = std::get_if<DiscObstacle>(&obs))
      return "disc:" + format_double(disc->center.x()) + "," +
             format_double(disc->center.y()) + "," + format_double(disc->radius);
    const auto& poly = std::get<PolyObstacle>(obs);
    std::string out = "poly:";
    for (size_t i = 0; i < poly.vertices.size(); ++i) {
      if (i) out += ";";
      out += format_double(poly.vertices[i].x()) + "," + format_double(poly.vertices[i].y());
    }
    return out;
  }

  // Canonical resolved form; parsing this text reproduces the config exactly.
  std::string serialize() const {
    std::string o;
    auto kv = [&o](const std::string& k, const std::string& v) { o += k + " = " + v + "\n"; };
    auto kd = [&](const std::string& k, double v) { kv(k, format_double(v)); };
    auto ki = [&](const std::string& k, long v) { kv(k, std::to_string(v)); };
    ki("seed", long(seed));
    kd("domain.xmin", domain.xmin);
    kd("domain.xmax", domain.xmax);
    kd("domain.ymin", domain.ymin);
    kd("domain.ymax", domain.ymax);
    ki("grid.nx", grid_nx);
    ki("grid.ny", grid_ny);
    ki("regions.nx", regions_nx);
    ki("regions.ny", regions_ny);
    kd("gp.lengthscale", gp_lengthscale);
    kd("gp.signal_variance", gp_signal_variance);
    kd("gp.noise_variance", gp_noise_variance);
    kd("gp.input_noise_sd", gp_input_noise_sd);
    kv("acquisition.method", method);
    kd("acquisition.confidence", confidence);
    kd("acquisition.tau_factor", tau_factor);
    kd("acquisition.lse_beta", lse_beta);
    kd("acquisition.lse_omega", lse_omega);
    if (!prior_file.empty()) kv("prior.file", prior_file);
    kd("prior.halflife", prior_halflife);
    ki("trajectory.primitives", traj_primitives);
    kd("trajectory.tau", traj_tau);
    ki("trajectory.samples_per_primitive", traj_samples_per_primitive);
    kd("trajectory.v_min", traj_v_min);
    kd("trajectory.v_max", traj_v_max);
    kd("trajectory.w_min", traj_w_min);
    kd("trajectory.w_max", traj_w_max);
    ki("cem.components", cem_components);
    ki("cem.samples", cem_samples);
    kd("cem.elite_frac", cem_elite_frac);
    ki("cem.max_iters", cem_max_iters);
    kd("cem.covariance_floor", cem_floor);
    kd("cem.tolerance", cem_tol);
    ki("search.probes", search_probes);
    ki("search.cycles", search_cycles);
    ki("search.stride", search_stride);
    kd("probe.position_noise_sd", probe_position_noise_sd);
    kd("probe.force_noise_sd", probe_force_noise_sd);
    ki("probe.displacement_steps", probe_displacement_steps);
    kd("probe.max_indent", probe_max_indent);
    if (!phantom_file.empty()) kv("phantom.file", phantom_file);
    kd("phantom.baseline", phantom_baseline);
    ki("phantom.inclusions", phantom_inclusions);
    kd("phantom.amp_lo", phantom_amp_lo);
    kd("phantom.amp_hi", phantom_amp_hi);
    kd("phantom.width_lo", phantom_width_lo);
    kd("phantom.width_hi", phantom_width_hi);
    kd("score.tau_truth_factor", tau_truth_factor);
    ki("batch.runs", batch_runs);
    kv("batch.mode", batch_mode);
    kv("batch.protocol", batch_protocol);
    {
      std::string m;
      for (size_t i = 0; i < batch_methods.size(); ++i) {
        if (i) m += ",";
        m += batch_methods[i];
      }
      kv("batch.methods", m);
    }
    kd("footprint.radius", footprint_radius);
    for (size_t i = 0; i < obstacles.size(); ++i)
      kv("obstacle." + std::to_string(i + 1), obstacle_to_string(obstacles[i]));
    return o;
  }
};

struct Manifest {
  std::string version;
  std::string mode;  // discrete | continuous | batch
  std::string created;
  std::string finished;
  std::vector<std::string> outputs;
  Config config;
};

inline std::string manifest_to_text(const Manifest& m) {
  std::string o;
  o += "manifest.version = " + m.version + "\n";
  o += "manifest.mode = " + m.mode + "\n";
  o += "manifest.created = " + m.created + "\n";
  o += "manifest.finished = " + m.finished + "\n";
  for (size_t i = 0; i < m.outputs.size(); ++i)
    o += "manifest.output." + std::to_string(i + 1) + " = " + m.outputs[i] + "\n";
  o += m.config.serialize();
  return o;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  const std::string what = "manifest '" + path.string() + "'";
  std::map<std::string, std::string> kv = parse_kv_text(read_file(path), what);
  Manifest m;
  std::map<std::string, std::string> cfg_kv;
  std::map<int, std::string> outputs;
  for (const auto& [k, v] : kv) {
    if (k == "manifest.version") {
      m.version = v;
    } else if (k == "manifest.mode") {
      m.mode = v;
    } else if (k == "manifest.created") {
      m.created = v;
    } else if (k == "manifest.finished") {
      m.finished = v;
    } else if (k.rfind("manifest.output.", 0) == 0) {
      outputs[int(parse_int(k.substr(16), what))] = v;
    } else if (k.rfind("manifest.", 0) == 0) {
      throw ConfigError(what + ": unknown key '" + k + "'");
    } else {
      cfg_kv[k] = v;
    }
  }
  for (const auto& [i, v] : outputs) m.outputs.push_back(v);
  if (m.mode != "discrete" && m.mode != "continuous" && m.mode != "batch")
    throw ConfigError(what + ": manifest.mode must be discrete, continuous or batch");
  m.config = Config::from_map(cfg_kv, what);
  return m;
}

}  // namespace stiffsearch
