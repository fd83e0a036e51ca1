#pragma once

// Stochastic branch of the dynamics. Each step of length dt either fires the
// collapse clock (probability gamma0 dt) and applies an optimized binary
// localization, or advances the state unitarily.
//
// Random draws per step, in order: clock; on a firing clock the optimizer's
// tie-break draw; if a split is admissible, the branch draw.

#include <qcollapse/core.hpp>
#include <qcollapse/localization.hpp>
#include <qcollapse/propagator.hpp>
#include <qcollapse/rng.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace qcollapse {

enum class Outcome { L, R, NoSplit };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::L: return "L";
    case Outcome::R: return "R";
    case Outcome::NoSplit: return "NoSplit";
  }
  return "NoSplit";
}

struct CollapseEvent {
  double t = 0.0;
  double x0 = 0.0;
  double lambda = 0.0;
  double wL = 0.0;
  double wR = 0.0;
  Outcome chosen = Outcome::NoSplit;
  double dE = 0.0;
  double dS = 0.0;
  std::uint64_t seed_cursor = 0;  // draws consumed before this event

  bool split() const { return chosen != Outcome::NoSplit; }
};

/// P_side psi / sqrt(w_side), renormalized. The phase of psi is untouched.
inline WaveFunction apply_branch(const WaveFunction& psi, const SplitBasis& basis, Side side) {
  const auto& p = basis.function(side);
  double w = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) w += psi.grid.weight(i) * p[i] * p[i] * std::norm(psi.amp[i]);
  if (!(w >= 1e-12))
    throw Error(ErrorCode::empty_branch, "branch weight " + std::to_string(w) + " is below 1e-12");
  WaveFunction out(psi.grid);
  const double s = 1.0 / std::sqrt(w);
  for (std::size_t i = 0; i < psi.size(); ++i) out.amp[i] = psi.amp[i] * (p[i] * s);
  normalize(out);
  return out;
}

/// Optimizer call plus branch sampling, without the clock.
inline CollapseEvent force_collapse(WaveFunction& psi, const ModelParams& params, const SplitOptions& opt,
                                    RandomStream& rng, double t = 0.0) {
  CollapseEvent ev;
  ev.t = t;
  ev.seed_cursor = rng.cursor();
  const auto basis = optimize_split(psi, params, opt, rng);
  if (!basis) return ev;
  ev.x0 = basis->x0;
  ev.lambda = basis->lambda;
  ev.wL = basis->wL;
  ev.wR = basis->wR;
  ev.dE = basis->dE;
  ev.dS = basis->dS;
  const double u = rng.uniform();
  const Side side = u * (basis->wL + basis->wR) < basis->wL ? Side::left : Side::right;
  ev.chosen = side == Side::left ? Outcome::L : Outcome::R;
  psi = apply_branch(psi, *basis, side);
  return ev;
}

/// With probability gamma0 dt runs the optimizer and collapses psi in place.
inline std::optional<CollapseEvent> maybe_collapse(WaveFunction& psi, const ModelParams& params, double dt,
                                                   RandomStream& rng, const SplitOptions& opt, double t = 0.0) {
  if (params.gamma0 * dt > 0.1 + 1e-12)
    throw Error(ErrorCode::invalid_config, "gamma0*dt must not exceed 0.1");
  if (params.gamma0 == 0.0) return std::nullopt;
  if (rng.uniform() >= params.gamma0 * dt) return std::nullopt;
  return force_collapse(psi, params, opt, rng, t);
}

enum class CollapseMode { off, stochastic, forced };

/// Everything a single trajectory needs.
struct TrajectorySpec {
  std::string scenario = "custom";
  WaveFunction initial;
  Potential potential;
  ModelParams params;
  SplitOptions split;
  CollapseMode mode = CollapseMode::stochastic;
  double dt = 1e-3;
  double t_end = 0.0;
  std::size_t snapshot_stride = 0;
  double partition_x = 0.0;  // left/right boundary for occupation statistics
};

struct Snapshot {
  double t = 0.0;
  std::vector<double> rho;
};

struct TrajectoryRecord {
  std::string scenario;
  ModelParams params;
  std::uint64_t seed = 0;
  std::vector<Snapshot> snapshots;
  std::vector<CollapseEvent> events;
  WaveFunction final_state;
  Observables final_observables;
  double max_norm_drift = 0.0;
};

/// Fraction of the density at x < partition.
inline double left_occupation(const Grid1D& grid, std::span<const double> rho, double partition) {
  double left = 0.0, total = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double w = grid.weight(i) * rho[i];
    total += w;
    if (grid.x(i) < partition) left += w;
  }
  return total > 0.0 ? left / total : 0.0;
}

/// Interleaves unitary steps and collapse attempts. Bit-reproducible for a fixed seed.
inline TrajectoryRecord run_trajectory(const TrajectorySpec& spec, std::uint64_t seed) {
  if (!(spec.dt > 0.0)) throw Error(ErrorCode::invalid_config, "dt must be positive");
  if (spec.t_end < 0.0) throw Error(ErrorCode::invalid_range, "t_end must be non-negative");
  const bool clock_on = spec.mode != CollapseMode::off && spec.params.gamma0 > 0.0;
  if (clock_on && spec.params.gamma0 * spec.dt > 0.1 + 1e-12)
    throw Error(ErrorCode::invalid_config, "gamma0*dt must not exceed 0.1");

  TrajectoryRecord rec;
  rec.scenario = spec.scenario;
  rec.params = spec.params;
  rec.seed = seed;
  RandomStream rng(seed);
  WaveFunction psi = spec.initial;
  const Grid1D& grid = psi.grid;

  const auto snap = [&](double t) {
    rec.snapshots.push_back({t, psi.density()});
    rec.max_norm_drift = std::max(rec.max_norm_drift, std::abs(psi.norm2() - 1.0));
  };

  if (spec.mode == CollapseMode::forced) rec.events.push_back(force_collapse(psi, spec.params, spec.split, rng, 0.0));
  snap(0.0);

  const auto steps = static_cast<std::size_t>(std::llround(spec.t_end / spec.dt));
  CayleyPropagator prop(grid, spec.params, spec.dt);
  std::vector<double> v = spec.potential.sample(grid, 0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * spec.dt;
    std::optional<CollapseEvent> ev;
    if (clock_on) ev = maybe_collapse(psi, spec.params, spec.dt, rng, spec.split, t);
    if (ev) {
      rec.events.push_back(*ev);
    } else {
      if (spec.potential.time_dependent()) spec.potential.sample(grid, t + 0.5 * spec.dt, v);
      prop.step(psi, v);
    }
    const bool last = k + 1 == steps;
    if (last || (spec.snapshot_stride > 0 && (k + 1) % spec.snapshot_stride == 0))
      snap(static_cast<double>(k + 1) * spec.dt);
  }
  rec.final_observables = observables(psi, spec.potential, spec.t_end, spec.params);
  rec.final_state = std::move(psi);
  return rec;
}

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleOptions {
  std::size_t threads = 0;            // 0 = hardware concurrency
  bool keep_records = false;          // keep full snapshots per seed
  double confine_threshold = 0.99;    // occupation counted as "one side"
};

/// Per-seed summary kept even when records are dropped.
struct TrajectorySummary {
  std::uint64_t seed = 0;
  std::size_t n_events = 0;
  std::size_t n_splits = 0;
  std::size_t n_left = 0;
  std::size_t n_right = 0;
  double first_event_time = -1.0;     // -1: clock never fired
  double first_split_time = -1.0;     // -1: never split
  double final_left = 0.0;
  std::vector<double> left_series;    // left occupation at each snapshot
};

struct EnsembleStats {
  std::size_t trajectories = 0;
  std::size_t events_L = 0;
  std::size_t events_R = 0;
  std::size_t events_nosplit = 0;
  std::size_t final_left = 0;         // confined to x < partition
  std::size_t final_right = 0;        // confined to x >= partition
  std::size_t final_mixed = 0;
  std::vector<double> times;
  std::vector<double> survival;          // trajectories whose clock has not fired yet
  std::vector<double> unsplit_fraction;  // trajectories with no split yet
  std::vector<double> trapped_fraction;  // left occupation >= 1/2
  std::vector<double> mean_left;
  std::vector<std::size_t> occupation_histogram;  // 10 bins of left occupation over all samples
};

struct EnsembleResult {
  std::vector<TrajectorySummary> summaries;
  std::vector<TrajectoryRecord> records;  // empty unless keep_records
  EnsembleStats stats;
};

inline TrajectorySummary summarize(const TrajectoryRecord& rec, double partition) {
  TrajectorySummary s;
  s.seed = rec.seed;
  s.n_events = rec.events.size();
  if (!rec.events.empty()) s.first_event_time = rec.events.front().t;
  for (const auto& e : rec.events) {
    if (!e.split()) continue;
    if (s.n_splits++ == 0) s.first_split_time = e.t;
    (e.chosen == Outcome::L ? s.n_left : s.n_right) += 1;
  }
  const Grid1D& g = rec.final_state.grid;
  s.left_series.reserve(rec.snapshots.size());
  for (const auto& sn : rec.snapshots) s.left_series.push_back(left_occupation(g, sn.rho, partition));
  s.final_left = left_occupation(g, rec.final_state.density(), partition);
  return s;
}

inline EnsembleStats aggregate(const std::vector<TrajectorySummary>& sums, const std::vector<double>& times,
                               double confine_threshold) {
  EnsembleStats st;
  st.trajectories = sums.size();
  st.times = times;
  st.survival.assign(times.size(), 0.0);
  st.unsplit_fraction.assign(times.size(), 0.0);
  st.trapped_fraction.assign(times.size(), 0.0);
  st.mean_left.assign(times.size(), 0.0);
  st.occupation_histogram.assign(10, 0);
  for (const auto& s : sums) {
    st.events_L += s.n_left;
    st.events_R += s.n_right;
    st.events_nosplit += s.n_events - s.n_splits;
    if (s.final_left >= confine_threshold) ++st.final_left;
    else if (1.0 - s.final_left >= confine_threshold) ++st.final_right;
    else ++st.final_mixed;
    for (std::size_t k = 0; k < times.size() && k < s.left_series.size(); ++k) {
      const double occ = s.left_series[k];
      if (s.first_event_time < 0.0 || s.first_event_time >= times[k]) st.survival[k] += 1.0;
      if (s.first_split_time < 0.0 || s.first_split_time >= times[k]) st.unsplit_fraction[k] += 1.0;
      if (occ >= 0.5) st.trapped_fraction[k] += 1.0;
      st.mean_left[k] += occ;
      ++st.occupation_histogram[std::min<std::size_t>(9, static_cast<std::size_t>(occ * 10.0))];
    }
  }
  const double n = std::max<double>(1.0, static_cast<double>(sums.size()));
  for (auto* v : {&st.survival, &st.unsplit_fraction, &st.trapped_fraction, &st.mean_left})
    for (auto& x : *v) x /= n;
  return st;
}

/// Runs one trajectory per seed on a worker pool. Results are merged in seed
/// order, so the output does not depend on the thread count.
inline EnsembleResult run_ensemble(const TrajectorySpec& spec, const std::vector<std::uint64_t>& seeds,
                                   const EnsembleOptions& opt = {}) {
  if (seeds.size() < 2) throw Error(ErrorCode::invalid_config, "an ensemble needs at least 2 seeds");
  std::size_t threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, seeds.size());

  std::vector<TrajectorySummary> sums(seeds.size());
  std::vector<std::optional<TrajectoryRecord>> recs(opt.keep_records ? seeds.size() : 0);
  std::vector<double> times;
  std::mutex times_mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex fail_mu;

  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      try {
        auto rec = run_trajectory(spec, seeds[i]);
        sums[i] = summarize(rec, spec.partition_x);
        if (i == 0) {
          std::lock_guard lk(times_mu);
          for (const auto& s : rec.snapshots) times.push_back(s.t);
        }
        if (opt.keep_records) recs[i] = std::move(rec);
      } catch (...) {
        std::lock_guard lk(fail_mu);
        if (!failure) failure = std::current_exception();
        next = seeds.size();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  EnsembleResult res;
  res.summaries = std::move(sums);
  for (auto& r : recs) res.records.push_back(std::move(*r));
  res.stats = aggregate(res.summaries, times, opt.confine_threshold);
  return res;
}

inline EnsembleResult run_ensemble(const TrajectorySpec& spec, std::size_t n_seeds, std::uint64_t first_seed = 1,
                                   const EnsembleOptions& opt = {}) {
  std::vector<std::uint64_t> seeds(n_seeds);
  for (std::size_t i = 0; i < n_seeds; ++i) seeds[i] = first_seed + i;
  return run_ensemble(spec, seeds, opt);
}

}  // namespace qcollapse
