#pragma once

// Statistical description on small grids: the collapse kernel
// Delta(x, x') = sum_n P_n(x) P_n(x'), the one-shot map rho -> Delta * rho
// (elementwise), and the linear master equation
//   d rho/dt = (i/hbar)[rho, H] - gamma0 (1 - Delta) rho
// with a frozen kernel.

#include <qcollapse/core.hpp>
#include <qcollapse/localization.hpp>
#include <qcollapse/propagator.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>

namespace qcollapse {

inline constexpr std::size_t kMaxDensityMatrixSize = 256;

struct DensityMatrixGrid {
  Grid1D grid;
  Eigen::MatrixXcd rho;  // rho(x_i, x_j); integrals carry the trapezoid weight per index

  /// ∫ rho(x, x) dx.
  double trace() const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < rho.rows(); ++i) s += grid.weight(static_cast<std::size_t>(i)) * rho(i, i).real();
    return s;
  }

  /// ∫∫ |rho(x, x')|^2 dx dx'.
  double purity() const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < rho.cols(); ++j)
      for (Eigen::Index i = 0; i < rho.rows(); ++i)
        s += grid.weight(static_cast<std::size_t>(i)) * grid.weight(static_cast<std::size_t>(j)) * std::norm(rho(i, j));
    return s;
  }

  double hermiticity_error() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }

  /// Smallest eigenvalue of the operator W^(1/2) rho W^(1/2).
  double min_eigenvalue() const {
    const auto n = rho.rows();
    Eigen::VectorXd sw(n);
    for (Eigen::Index i = 0; i < n; ++i) sw(i) = std::sqrt(grid.weight(static_cast<std::size_t>(i)));
    const Eigen::MatrixXcd m = sw.asDiagonal() * rho * sw.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }
};

inline void check_size(const Grid1D& grid) {
  if (grid.size() > kMaxDensityMatrixSize)
    throw Error(ErrorCode::resource_guard,
                "density matrices are limited to 256 grid points, got " + std::to_string(grid.size()));
}

/// |psi><psi|.
inline DensityMatrixGrid pure_state(const WaveFunction& psi) {
  check_size(psi.grid);
  Eigen::Map<const Eigen::VectorXcd> v(psi.amp.data(), static_cast<Eigen::Index>(psi.size()));
  return {psi.grid, v * v.adjoint()};
}

/// rho(x, x') ∝ exp(-pi (x - x')^2 / lambda_T^2), normalized in 1D and zero on the walls.
inline DensityMatrixGrid thermal_state(const Grid1D& grid, double lambda_T) {
  check_size(grid);
  if (!(lambda_T > 0.0)) throw Error(ErrorCode::invalid_range, "thermal length must be positive");
  const auto n = static_cast<Eigen::Index>(grid.size());
  DensityMatrixGrid d{grid, Eigen::MatrixXcd::Zero(n, n)};
  for (Eigen::Index j = 1; j + 1 < n; ++j)
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
      const double u = grid.x(static_cast<std::size_t>(i)) - grid.x(static_cast<std::size_t>(j));
      d.rho(i, j) = std::exp(-std::numbers::pi * u * u / (lambda_T * lambda_T));
    }
  d.rho /= d.trace();
  return d;
}

using DeltaKernel = Eigen::MatrixXd;

inline DeltaKernel delta_kernel(const SplitBasis& basis) {
  const auto n = static_cast<Eigen::Index>(basis.pL.size());
  Eigen::Map<const Eigen::VectorXd> l(basis.pL.data(), n);
  Eigen::Map<const Eigen::VectorXd> r(basis.pR.data(), n);
  return l * l.transpose() + r * r.transpose();
}

/// rho(x, x') -> Delta(x, x') rho(x, x').
inline DensityMatrixGrid collapse_map(const DensityMatrixGrid& d, const DeltaKernel& kernel) {
  return {d.grid, d.rho.cwiseProduct(kernel.cast<cplx>())};
}

struct MasterConfig {
  double dt = 1e-3;
  double t_end = 0.0;
  bool unitary = true;  // false drops H and keeps only the decay term
  Potential potential;
};

using MatrixObserver = std::function<void(double t, const DensityMatrixGrid&)>;

/// Strang splitting: half-step decay, Cayley conjugation rho -> U rho U^dagger, half-step decay.
inline DensityMatrixGrid evolve_master(DensityMatrixGrid d, const DeltaKernel& kernel, const ModelParams& params,
                                       const MasterConfig& cfg, const MatrixObserver& observer = {}) {
  check_size(d.grid);
  if (!(cfg.dt > 0.0)) throw Error(ErrorCode::invalid_config, "dt must be positive");
  const auto n = static_cast<Eigen::Index>(d.grid.size());
  const Eigen::MatrixXd half = (-0.5 * params.gamma0 * cfg.dt * (1.0 - kernel.array())).exp().matrix();
  const auto steps = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));

  CayleyPropagator prop(d.grid, params, cfg.dt);
  WaveFunction col(d.grid);
  std::vector<double> v = cfg.potential.sample(d.grid, 0.0);
  const auto apply_u = [&](Eigen::MatrixXcd& m) {
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) col.amp[static_cast<std::size_t>(i)] = m(i, j);
      prop.step(col, v);
      for (Eigen::Index i = 0; i < n; ++i) m(i, j) = col.amp[static_cast<std::size_t>(i)];
    }
  };

  if (observer) observer(0.0, d);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    d.rho.array() *= half.array().cast<cplx>();
    if (cfg.unitary) {
      if (cfg.potential.time_dependent()) cfg.potential.sample(d.grid, t + 0.5 * cfg.dt, v);
      apply_u(d.rho);
      d.rho.adjointInPlace();
      apply_u(d.rho);
      d.rho.adjointInPlace();
    }
    d.rho.array() *= half.array().cast<cplx>();
    if (observer) observer(t + cfg.dt, d);
  }
  return d;
}

}  // namespace qcollapse
