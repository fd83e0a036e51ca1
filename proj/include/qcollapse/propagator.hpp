#pragma once

// Unitary branch of the dynamics: Cayley (implicit midpoint) steps on the
// tridiagonal 3-point Hamiltonian with hard walls at the grid edges.

#include <qcollapse/core.hpp>

#include <cmath>
#include <algorithm>
#include <functional>
#include <span>
#include <vector>

namespace qcollapse {

struct PropagatorConfig {
  double dt = 1e-3;
  std::size_t snapshot_stride = 0;  // 0 = observer only at start and end
};

/// Largest step giving ~50 steps per period of the fastest grid mode.
inline double default_time_step(const Grid1D& grid, double v_max, const ModelParams& params) {
  const double kmax = params.hbar * params.hbar / (2.0 * params.mass * grid.dx() * grid.dx());
  return params.hbar / (50.0 * (std::abs(v_max) + kmax));
}

class CayleyPropagator {
 public:
  CayleyPropagator(const Grid1D& grid, const ModelParams& params, double dt)
      : grid_(grid), params_(params), dt_(dt) {
    if (!(dt != 0.0) || !std::isfinite(dt))
      throw Error(ErrorCode::invalid_config, "time step must be finite and non-zero");
    if (grid.size() < 3) throw Error(ErrorCode::too_few_points, "propagator needs interior points");
    kin_ = params.hbar * params.hbar / (2.0 * params.mass * grid.dx() * grid.dx());
    alpha_ = cplx(0.0, dt / (2.0 * params.hbar));
  }

  double dt() const noexcept { return dt_; }
  const Grid1D& grid() const noexcept { return grid_; }

  /// psi <- (1 + i H dt/2hbar)^{-1} (1 - i H dt/2hbar) psi for the sampled potential v.
  void step(WaveFunction& psi, std::span<const double> v) {
    const std::size_t n = grid_.size();
    const std::size_t m = n - 2;
    prepare(v);
    const double beta = alpha_.imag();
    const double bk = beta * kin_;
    auto& a = psi.amp;
    // (1 - i beta H) psi fused with the forward sweep; the off-diagonal of
    // the implicit side is -i beta kin.
    cplx prev{};
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = k + 1;
      const cplx h = (2.0 * kin_ + v[i]) * a[i] - kin_ * (a[i - 1] + a[i + 1]);
      const cplx r(a[i].real() + beta * h.imag() - bk * prev.imag(), a[i].imag() - beta * h.real() + bk * prev.real());
      prev = r * inv_denom_[k];
      rhs_[k] = prev;
    }
    for (std::size_t k = m - 1; k-- > 0;) rhs_[k] -= cprime_[k] * rhs_[k + 1];
    a[0] = cplx{};
    a[n - 1] = cplx{};
    std::copy(rhs_.begin(), rhs_.end(), a.begin() + 1);
  }

 private:
  // Refactors from the first sample that differs from the cached potential;
  // the forward sweep before it is unchanged.
  void prepare(std::span<const double> v) {
    const std::size_t m = grid_.size() - 2;
    if (v.size() != grid_.size())
      throw Error(ErrorCode::invalid_config, "potential sample count does not match the grid");
    std::size_t first = 0;
    if (cached_v_.size() == v.size()) {
      const auto diff = std::mismatch(v.begin() + 1, v.end() - 1, cached_v_.begin() + 1);
      if (diff.first == v.end() - 1) return;
      first = static_cast<std::size_t>(diff.first - v.begin()) - 1;
    } else {
      cprime_.resize(m);
      inv_denom_.resize(m);
      rhs_.resize(m);
    }
    cached_v_.assign(v.begin(), v.end());
    const double beta = alpha_.imag();
    const double bk = beta * kin_;
    for (std::size_t k = first; k < m; ++k) {
      // denom = 1 + i beta (2 kin + v) + i beta kin c_{k-1}
      const cplx c = k == 0 ? cplx{} : cprime_[k - 1];
      const double re = 1.0 - bk * c.imag();
      const double im = beta * (2.0 * kin_ + v[k + 1]) + bk * c.real();
      const double mag2 = re * re + im * im;
      if (mag2 < 1e-300) throw Error(ErrorCode::linear_solve_failure, "singular Cayley system");
      const cplx inv(re / mag2, -im / mag2);
      inv_denom_[k] = inv;
      cprime_[k] = cplx(bk * inv.imag(), -bk * inv.real());  // -i beta kin / denom
    }
  }

  Grid1D grid_;
  ModelParams params_;
  double dt_;
  double kin_ = 0.0;
  cplx alpha_{};
  std::vector<double> cached_v_;
  std::vector<cplx> cprime_;
  std::vector<cplx> inv_denom_;
  std::vector<cplx> rhs_;
};

/// One unitary step from t to t + dt; time-dependent potentials are sampled at t + dt/2.
inline WaveFunction step_unitary(WaveFunction psi, const Potential& v, double t, double dt,
                                 const ModelParams& params) {
  CayleyPropagator prop(psi.grid, params, dt);
  prop.step(psi, v.sample(psi.grid, t + 0.5 * dt));
  return psi;
}

using Observer = std::function<void(double t, const WaveFunction& psi)>;

/// Relative energy change over one probe step for a static potential.
inline double probe_energy_drift(const WaveFunction& psi, const Potential& v,
                                 const ModelParams& params, double dt) {
  const auto vs = v.sample(psi.grid, 0.0);
  const double e0 = observables(psi, vs, params).energy;
  WaveFunction probe = psi;
  CayleyPropagator prop(psi.grid, params, dt);
  prop.step(probe, vs);
  const double e1 = observables(probe, vs, params).energy;
  return std::abs(e1 - e0) / std::max(std::abs(e0), 1e-300);
}

/// Deterministic evolution from t0 to t1. The observer sees the initial state,
/// every snapshot_stride-th step, and the final state.
inline WaveFunction evolve(WaveFunction psi, const Potential& v, double t0, double t1,
                           const PropagatorConfig& cfg, const ModelParams& params,
                           const Observer& observer = {}) {
  if (t1 < t0) throw Error(ErrorCode::invalid_range, "evolve needs t1 >= t0");
  if (!(cfg.dt > 0.0)) throw Error(ErrorCode::invalid_config, "dt must be positive");
  const auto steps = static_cast<std::size_t>(std::llround((t1 - t0) / cfg.dt));
  if (observer) observer(t0, psi);
  if (steps == 0) return psi;
  if (!v.time_dependent() && probe_energy_drift(psi, v, params, cfg.dt) > 1e-8)
    throw Error(ErrorCode::invalid_config, "probe step drifts the energy by more than 1e-8");

  CayleyPropagator prop(psi.grid, params, cfg.dt);
  std::vector<double> vs = v.sample(psi.grid, t0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * cfg.dt;
    if (v.time_dependent()) v.sample(psi.grid, t + 0.5 * cfg.dt, vs);
    prop.step(psi, vs);
    const bool last = k + 1 == steps;
    if (observer && (last || (cfg.snapshot_stride > 0 && (k + 1) % cfg.snapshot_stride == 0)))
      observer(t0 + static_cast<double>(k + 1) * cfg.dt, psi);
  }
  return psi;
}

}  // namespace qcollapse
