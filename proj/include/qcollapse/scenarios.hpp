#pragma once

// Preset experiments, JSON configuration and on-disk artifacts.

#include <qcollapse/collapse.hpp>
#include <qcollapse/core.hpp>
#include <qcollapse/densmat.hpp>
#include <qcollapse/localization.hpp>
#include <qcollapse/propagator.hpp>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#ifndef QCOLLAPSE_VERSION
#define QCOLLAPSE_VERSION "0.0.0"
#endif

namespace qcollapse {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = QCOLLAPSE_VERSION;

struct GridSpec {
  double x_min = -16.0;
  double x_max = 16.0;
  std::size_t n = 1024;
};

enum class InitialKind {
  gaussian,      // exp(-((x - x_c)/delta)^2 + i p0 x)
  two_lowest,    // (f1 + f2)/sqrt 2 from the grid Hamiltonian, weighted to the left
  left_well,     // sine ground state of the box between x_min and the bump
  box_ground,    // sine ground state of the full domain
};

struct InitialSpec {
  InitialKind kind = InitialKind::gaussian;
  double x_c = 0.0;
  double delta = 1.0;
  double p0 = 0.0;
};

struct ScenarioConfig {
  std::string id = "custom";
  GridSpec grid;
  InitialSpec initial;
  Potential potential;
  ModelParams params;
  std::string collapse = "scan_x0";  // off | scan_x0 | scan_lambda | scan_both
  bool forced = false;               // collapse attempt at t = 0 regardless of the clock
  double lambda = 0.0;               // fixed width for scan_x0 and the master-equation kernel
  double x0 = 0.0;                   // fixed centre for scan_lambda and the kernel
  EntropyMode entropy = EntropyMode::exact_overlap;
  double dt = 1e-3;
  double t_end = 1.0;
  std::size_t snapshot_stride = 10;
  std::uint64_t seed = 1;
  double partition_x = 0.0;
};

// ---------------------------------------------------------------------------
// Presets

inline const std::vector<std::string>& preset_ids() {
  static const std::vector<std::string> ids{"free", "tunnel", "double_well", "decay", "wall_insertion"};
  return ids;
}

inline ScenarioConfig preset(const std::string& id) {
  ScenarioConfig c;
  c.id = id;
  if (id == "free") {
    c.params = make_params(1.0, 0.5, 1.0, 1.0);
    c.grid = {-16.0, 16.0, 1024};
    c.initial = {InitialKind::gaussian, 0.0, c.params.lambda0() / 3.0, 0.0};
    c.lambda = c.params.lambda0() / 8.0;
    c.dt = 0.005;
    c.t_end = 10.0;
    c.snapshot_stride = 20;
  } else if (id == "tunnel") {
    c.params = make_params(1.0, 1.0, 1.0, 1.0);
    c.grid = {-16.0, 16.0, 1024};
    c.initial = {InitialKind::gaussian, -8.0, c.params.lambda0() / 2.0, 8.0};
    c.potential = Potential::gaussian_barrier(0.08, 4.0);
    c.lambda = c.params.lambda0() / 8.0;
    c.dt = 0.002;
    c.t_end = 2.0;
    c.snapshot_stride = 10;
  } else if (id == "double_well") {
    c.params = make_params(1.0, 2.0, 1.0, 1.0);
    c.grid = {-1.0, 1.0, 401};
    c.initial.kind = InitialKind::two_lowest;
    c.potential = Potential::double_well(1.0, 0.1, 0.1);
    c.lambda = c.params.lambda0() / 16.0;
    c.dt = 0.005;
    c.t_end = 30.0;
    c.snapshot_stride = 20;
  } else if (id == "decay") {
    c.params = make_params(1.0, 2.0, 1.0, 1.0);
    c.grid = {-1.0, 8.0, 1801};
    c.initial.kind = InitialKind::left_well;
    c.potential = Potential::half_open_well(0.1, 0.1);
    c.lambda = c.params.lambda0() / 16.0;
    c.dt = 0.005;
    c.t_end = 10.0;
    c.snapshot_stride = 20;
  } else if (id == "wall_insertion") {
    c.params = make_params(1.0, 0.5, 1.0, 1.0);
    c.grid = {-1.0, 1.0, 101};
    c.initial.kind = InitialKind::box_ground;
    c.potential = Potential::growing_bump(0.1, 0.1);
    c.collapse = "scan_lambda";
    c.x0 = 0.0;
    c.lambda = 0.1;
    c.dt = 0.1;
    c.t_end = 60000.0;
    c.snapshot_stride = 20000;
  } else {
    throw Error(ErrorCode::unknown_preset, "no preset named '" + id + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Initial states

/// Eigenpairs of the interior grid Hamiltonian (hard walls), lowest first.
inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> grid_eigensystem(const Grid1D& grid, std::span<const double> v,
                                                                       const ModelParams& params) {
  const auto m = static_cast<Eigen::Index>(grid.size() - 2);
  const double kin = params.hbar * params.hbar / (2.0 * params.mass * grid.dx() * grid.dx());
  Eigen::VectorXd diag(m), sub(m - 1);
  for (Eigen::Index k = 0; k < m; ++k) diag(k) = 2.0 * kin + v[static_cast<std::size_t>(k) + 1];
  sub.setConstant(-kin);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::solver_nonconvergence, "tridiagonal eigensolver failed");
  return es;
}

inline WaveFunction make_initial(const ScenarioConfig& c, const Grid1D& grid) {
  switch (c.initial.kind) {
    case InitialKind::gaussian:
      return gaussian_packet(grid, c.initial.x_c, c.initial.delta, c.initial.p0, c.params.hbar);
    case InitialKind::two_lowest: {
      const auto v = c.potential.sample(grid, 0.0);
      const auto es = grid_eigensystem(grid, v, c.params);
      Eigen::VectorXd f1 = es.eigenvectors().col(0);
      Eigen::VectorXd f2 = es.eigenvectors().col(1);
      if (f1.sum() < 0.0) f1 = -f1;
      double left = 0.0;
      for (Eigen::Index k = 0; k < f2.size(); ++k)
        if (grid.x(static_cast<std::size_t>(k) + 1) < c.partition_x) left += f2(k);
      if (left < 0.0) f2 = -f2;
      WaveFunction psi(grid);
      for (Eigen::Index k = 0; k < f1.size(); ++k) psi.amp[static_cast<std::size_t>(k) + 1] = f1(k) + f2(k);
      normalize(psi);
      return psi;
    }
    case InitialKind::left_well:
    case InitialKind::box_ground: {
      const double a = grid.x_min();
      const double b = c.initial.kind == InitialKind::box_ground
                           ? grid.x_max()
                           : c.potential.bump_center - 0.5 * c.potential.bump_width;
      WaveFunction psi(grid);
      for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
        const double x = grid.x(i);
        if (x < b) psi.amp[i] = std::sin(std::numbers::pi * (x - a) / (b - a));
      }
      normalize(psi);
      return psi;
    }
  }
  throw Error(ErrorCode::invalid_config, "unknown initial state");
}

inline SplitOptions split_options(const ScenarioConfig& c) {
  SplitOptions o;
  if (c.collapse == "scan_x0" || c.collapse == "off") o.mode = ScanMode::scan_x0;
  else if (c.collapse == "scan_lambda") o.mode = ScanMode::scan_lambda;
  else if (c.collapse == "scan_both") o.mode = ScanMode::scan_both;
  else throw Error(ErrorCode::invalid_config, "unknown collapse mode '" + c.collapse + "'");
  o.lambda = c.lambda;
  o.x0 = c.x0;
  o.entropy = c.entropy;
  return o;
}

/// Validates the config and builds the trajectory inputs.
inline TrajectorySpec make_trajectory_spec(const ScenarioConfig& c) {
  const Grid1D grid = make_grid(c.grid.x_min, c.grid.x_max, c.grid.n);
  const ModelParams p = make_params(c.params.hbar, c.params.mass, c.params.T0, c.params.gamma0);
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw Error(ErrorCode::invalid_config, "dt must be positive");
  if (!(c.t_end >= 0.0) || !std::isfinite(c.t_end)) throw Error(ErrorCode::invalid_config, "t_end must be >= 0");
  TrajectorySpec s;
  s.scenario = c.id;
  s.params = p;
  s.potential = c.potential;
  s.initial = make_initial(c, grid);
  s.split = split_options(c);
  s.mode = c.collapse == "off" ? CollapseMode::off : (c.forced ? CollapseMode::forced : CollapseMode::stochastic);
  s.dt = c.dt;
  s.t_end = c.t_end;
  s.snapshot_stride = c.snapshot_stride;
  s.partition_x = c.partition_x;
  return s;
}

// ---------------------------------------------------------------------------
// JSON

inline std::string to_string(InitialKind k) {
  switch (k) {
    case InitialKind::gaussian: return "gaussian";
    case InitialKind::two_lowest: return "two_lowest";
    case InitialKind::left_well: return "left_well";
    case InitialKind::box_ground: return "box_ground";
  }
  return "gaussian";
}

inline InitialKind initial_kind_from(const std::string& s) {
  for (auto k : {InitialKind::gaussian, InitialKind::two_lowest, InitialKind::left_well, InitialKind::box_ground})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::invalid_config, "unknown initial state '" + s + "'");
}

inline Potential::Kind potential_kind_from(const std::string& s) {
  using K = Potential::Kind;
  for (auto k : {K::free, K::gaussian_barrier, K::double_well, K::half_open_well, K::growing_bump})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::invalid_config, "unknown potential '" + s + "'");
}

inline json to_json(const ScenarioConfig& c) {
  const auto& v = c.potential;
  return json{
      {"id", c.id},
      {"grid", {{"x_min", c.grid.x_min}, {"x_max", c.grid.x_max}, {"n", c.grid.n}}},
      {"initial",
       {{"kind", to_string(c.initial.kind)}, {"x_c", c.initial.x_c}, {"delta", c.initial.delta}, {"p0", c.initial.p0}}},
      {"potential",
       {{"kind", to_string(v.kind)},
        {"amplitude", v.amplitude},
        {"sharpness", v.sharpness},
        {"bump_center", v.bump_center},
        {"bump_width", v.bump_width},
        {"bump_height", v.bump_height},
        {"growth_rate", v.growth_rate},
        {"wall_pos", v.wall_pos}}},
      {"params",
       {{"hbar", c.params.hbar},
        {"mass", c.params.mass},
        {"T0", c.params.T0},
        {"gamma0", c.params.gamma0},
        {"lambda0", c.params.lambda0()}}},
      {"collapse", c.collapse},
      {"forced", c.forced},
      {"lambda", c.lambda},
      {"x0", c.x0},
      {"entropy", c.entropy == EntropyMode::mixing ? "mixing" : "exact"},
      {"dt", c.dt},
      {"t_end", c.t_end},
      {"snapshot_stride", c.snapshot_stride},
      {"seed", c.seed},
      {"partition_x", c.partition_x},
  };
}

/// Missing keys keep the defaults of `base`.
inline ScenarioConfig config_from_json(const json& j, ScenarioConfig base = {}) {
  try {
    ScenarioConfig c = std::move(base);
    c.id = j.value("id", c.id);
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      c.grid.x_min = g.value("x_min", c.grid.x_min);
      c.grid.x_max = g.value("x_max", c.grid.x_max);
      c.grid.n = g.value("n", c.grid.n);
    }
    if (j.contains("initial")) {
      const auto& s = j.at("initial");
      if (s.contains("kind")) c.initial.kind = initial_kind_from(s.at("kind").get<std::string>());
      c.initial.x_c = s.value("x_c", c.initial.x_c);
      c.initial.delta = s.value("delta", c.initial.delta);
      c.initial.p0 = s.value("p0", c.initial.p0);
    }
    if (j.contains("potential")) {
      const auto& s = j.at("potential");
      auto& v = c.potential;
      if (s.contains("kind")) v.kind = potential_kind_from(s.at("kind").get<std::string>());
      v.amplitude = s.value("amplitude", v.amplitude);
      v.sharpness = s.value("sharpness", v.sharpness);
      v.bump_center = s.value("bump_center", v.bump_center);
      v.bump_width = s.value("bump_width", v.bump_width);
      v.bump_height = s.value("bump_height", v.bump_height);
      v.growth_rate = s.value("growth_rate", v.growth_rate);
      v.wall_pos = s.value("wall_pos", v.wall_pos);
    }
    if (j.contains("params")) {
      const auto& s = j.at("params");
      c.params = make_params(s.value("hbar", c.params.hbar), s.value("mass", c.params.mass),
                             s.value("T0", c.params.T0), s.value("gamma0", c.params.gamma0));
    }
    c.collapse = j.value("collapse", c.collapse);
    c.forced = j.value("forced", c.forced);
    c.lambda = j.value("lambda", c.lambda);
    c.x0 = j.value("x0", c.x0);
    if (j.contains("entropy")) {
      const auto e = j.at("entropy").get<std::string>();
      if (e == "exact") c.entropy = EntropyMode::exact_overlap;
      else if (e == "mixing") c.entropy = EntropyMode::mixing;
      else throw Error(ErrorCode::invalid_config, "entropy must be 'exact' or 'mixing'");
    }
    c.dt = j.value("dt", c.dt);
    c.t_end = j.value("t_end", c.t_end);
    c.snapshot_stride = j.value("snapshot_stride", c.snapshot_stride);
    c.seed = j.value("seed", c.seed);
    c.partition_x = j.value("partition_x", c.partition_x);
    split_options(c);
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_config, e.what());
  }
}

/// Accepts either a bare config object or a meta.json with a "config" member.
inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_config, path.string() + ": " + e.what());
  }
  const json& body = j.contains("config") ? j.at("config") : j;
  ScenarioConfig base;
  if (body.contains("id")) {
    const auto id = body.at("id").get<std::string>();
    if (std::find(preset_ids().begin(), preset_ids().end(), id) != preset_ids().end()) base = preset(id);
  }
  return config_from_json(body, base);
}

inline json event_json(const CollapseEvent& e) {
  if (!e.split())
    return json{{"t", e.t}, {"x0", nullptr}, {"lambda", nullptr}, {"wL", nullptr},
                {"wR", nullptr}, {"chosen", "NoSplit"}, {"dE", nullptr}, {"dS", nullptr}};
  return json{{"t", e.t},   {"x0", e.x0}, {"lambda", e.lambda},          {"wL", e.wL},
              {"wR", e.wR}, {"chosen", to_string(e.chosen)}, {"dE", e.dE}, {"dS", e.dS}};
}

inline json observables_json(const Observables& o) {
  return json{{"norm", o.norm},         {"kinetic", o.kinetic}, {"potential", o.potential},
              {"energy", o.energy},     {"mean_x", o.mean_x},   {"var_x", o.var_x}};
}

// ---------------------------------------------------------------------------
// Writers

inline std::string format_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path.string());
}

/// Header "t,x_0,...,x_{n-1}", then one row "t,rho_0,..." per snapshot, 9 significant digits.
inline std::string density_csv(const Grid1D& grid, const std::vector<Snapshot>& snaps) {
  std::string s = "t";
  for (std::size_t i = 0; i < grid.size(); ++i) s += "," + format_g9(grid.x(i));
  s += '\n';
  for (const auto& sn : snaps) {
    s += format_g9(sn.t);
    for (double r : sn.rho) s += "," + format_g9(r);
    s += '\n';
  }
  return s;
}

struct DensityTable {
  std::vector<double> x;
  std::vector<double> t;
  std::vector<std::vector<double>> rho;
};

inline DensityTable read_density_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
  DensityTable tab;
  std::string line;
  const auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (!std::getline(in, line)) throw Error(ErrorCode::io_error, path.string() + " is empty");
  const auto head = split(line);
  for (std::size_t i = 1; i < head.size(); ++i) tab.x.push_back(std::stod(head[i]));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    tab.t.push_back(std::stod(cells.at(0)));
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(std::stod(cells[i]));
    tab.rho.push_back(std::move(row));
  }
  return tab;
}

inline json meta_json(const ScenarioConfig& c) {
  json m{{"version", kVersion}, {"seed", c.seed}, {"config", to_json(c)}};
  if (c.id == "decay") m["L_right"] = c.grid.x_max;
  return m;
}

struct RunArtifacts {
  TrajectoryRecord record;
  std::filesystem::path dir;
};

/// Runs one trajectory and writes density.csv, events.json and meta.json into dir.
inline RunArtifacts run(const ScenarioConfig& c, const std::filesystem::path& dir) {
  const auto spec = make_trajectory_spec(c);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create " + dir.string() + ": " + ec.message());
  auto rec = run_trajectory(spec, c.seed);

  write_text(dir / "density.csv", density_csv(spec.initial.grid, rec.snapshots));
  json ev = json::array();
  for (const auto& e : rec.events) ev.push_back(event_json(e));
  write_text(dir / "events.json", ev.dump(1) + "\n");
  json meta = meta_json(c);
  meta["n_events"] = rec.events.size();
  meta["final"] = observables_json(rec.final_observables);
  meta["max_norm_drift"] = rec.max_norm_drift;
  write_text(dir / "meta.json", meta.dump(2) + "\n");
  return {std::move(rec), dir};
}

inline json stats_json(const EnsembleResult& r) {
  const auto& s = r.stats;
  json per = json::array();
  for (const auto& t : r.summaries)
    per.push_back({{"seed", t.seed},
                   {"events", t.n_events},
                   {"splits", t.n_splits},
                   {"first_split_time", t.first_split_time < 0.0 ? json(nullptr) : json(t.first_split_time)},
                   {"final_left", t.final_left}});
  return json{{"trajectories", s.trajectories},
              {"events", {{"L", s.events_L}, {"R", s.events_R}, {"NoSplit", s.events_nosplit}}},
              {"final_side", {{"left", s.final_left}, {"right", s.final_right}, {"mixed", s.final_mixed}}},
              {"times", s.times},
              {"survival", s.survival},
              {"unsplit_fraction", s.unsplit_fraction},
              {"trapped_fraction", s.trapped_fraction},
              {"mean_left", s.mean_left},
              {"occupation_histogram", s.occupation_histogram},
              {"per_seed", per}};
}

inline EnsembleResult ensemble(const ScenarioConfig& c, std::size_t n_seeds, const std::filesystem::path& dir,
                               std::size_t threads = 0) {
  const auto spec = make_trajectory_spec(c);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create " + dir.string() + ": " + ec.message());
  EnsembleOptions opt;
  opt.threads = threads;
  auto res = run_ensemble(spec, n_seeds, c.seed, opt);
  write_text(dir / "stats.json", stats_json(res).dump(1) + "\n");
  json meta = meta_json(c);
  meta["seeds"] = {{"first", c.seed}, {"count", n_seeds}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");
  return res;
}

/// Density-matrix run of a preset: the grid is coarsened to at most 256 points
/// and the kernel is frozen as the trial pair at (x0, lambda) of the config.
inline DensityMatrixGrid master(const ScenarioConfig& c, const std::filesystem::path& dir) {
  const std::size_t n = std::min(c.grid.n, kMaxDensityMatrixSize);
  const Grid1D grid = make_grid(c.grid.x_min, c.grid.x_max, n);
  const WaveFunction psi = make_initial(c, grid);
  const double lambda = c.lambda > 0.0 ? c.lambda : c.params.lambda0() / 8.0;
  const auto basis = trial_pair(grid, c.x0, lambda);
  const DeltaKernel kernel = delta_kernel(basis);
  MasterConfig mc;
  mc.dt = c.dt;
  mc.t_end = c.t_end;
  mc.potential = c.potential;

  std::vector<Snapshot> snaps;
  json series = json::array();
  std::size_t k = 0;
  const std::size_t stride = std::max<std::size_t>(1, c.snapshot_stride);
  const auto steps = static_cast<std::size_t>(std::llround(c.t_end / c.dt));
  const auto obs = [&](double t, const DensityMatrixGrid& d) {
    if (k % stride == 0 || k == steps) {
      std::vector<double> diag(n);
      for (std::size_t i = 0; i < n; ++i) diag[i] = d.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
      snaps.push_back({t, std::move(diag)});
      series.push_back({{"t", t}, {"trace", d.trace()}, {"purity", d.purity()}});
    }
    ++k;
  };
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create " + dir.string() + ": " + ec.message());
  auto out = evolve_master(pure_state(psi), kernel, c.params, mc, obs);
  write_text(dir / "density.csv", density_csv(grid, snaps));
  write_text(dir / "master.json", json{{"x0", c.x0}, {"lambda", lambda}, {"n", n}, {"series", series}}.dump(1) + "\n");
  json meta = meta_json(c);
  meta["mode"] = "master";
  write_text(dir / "meta.json", meta.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// Self test

/// Quick invariant suite; prints one line per check and returns true if all pass.
inline bool selftest(std::ostream& os) {
  bool ok = true;
  const auto check = [&](const std::string& name, bool pass, double value) {
    os << (pass ? "PASS " : "FAIL ") << name << " (" << format_g9(value) << ")\n";
    ok = ok && pass;
  };
  const ModelParams p = make_params(1.0, 0.5, 1.0, 1.0);
  const Grid1D g = make_grid(-16.0, 16.0, 512);
  WaveFunction psi = gaussian_packet(g, 0.0, p.lambda0() / 3.0, 0.0);
  const auto v = Potential::free_space().sample(g, 0.0);
  const double e0 = observables(psi, v, p).energy;
  CayleyPropagator prop(g, p, 0.01);
  for (int k = 0; k < 500; ++k) prop.step(psi, v);
  check("norm after 500 steps", std::abs(psi.norm2() - 1.0) < 1e-10, psi.norm2() - 1.0);
  const double e1 = observables(psi, v, p).energy;
  check("energy drift", std::abs(e1 - e0) / e0 < 1e-8, (e1 - e0) / e0);

  const WaveFunction phi = gaussian_packet(g, 0.0, 2.0, 0.0);
  const auto basis = trial_pair(g, 0.7, 0.5);
  double maxdev = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    maxdev = std::max(maxdev, std::abs(basis.pL[i] * basis.pL[i] + basis.pR[i] * basis.pR[i] - 1.0));
  check("sum of P^2 equals 1", maxdev < 1e-12, maxdev);
  const auto w = weights(phi, basis);
  check("weights sum to 1", std::abs(w.wL + w.wR - 1.0) < 1e-10, w.wL + w.wR - 1.0);
  const double before = kinetic_energy(phi, p);
  const double after = w.wL * kinetic_energy(apply_branch(phi, basis, Side::left), p) +
                       w.wR * kinetic_energy(apply_branch(phi, basis, Side::right), p);
  const double dE = energy_cost(phi, basis, p).gradient;
  check("energy cost equals post-collapse energy change", std::abs(after - before - dE) < 1e-8, after - before - dE);

  ScenarioConfig c = preset("free");
  c.grid.n = 256;
  c.t_end = 2.0;
  c.seed = 7;
  const auto spec = make_trajectory_spec(c);
  const auto a = run_trajectory(spec, c.seed);
  const auto b = run_trajectory(spec, c.seed);
  json ja = json::array(), jb = json::array();
  for (const auto& e : a.events) ja.push_back(event_json(e));
  for (const auto& e : b.events) jb.push_back(event_json(e));
  check("same seed gives identical events", ja.dump() == jb.dump(), static_cast<double>(a.events.size()));
  return ok;
}

}  // namespace qcollapse
