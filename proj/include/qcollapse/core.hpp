#pragma once

// Uniform 1D grid, wave functions, potentials and the observables shared by
// every other part of the library. Quadrature is trapezoidal throughout and the
// grid edges are hard walls (amplitudes pinned to zero).

#include <qcollapse/error.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace qcollapse {

using cplx = std::complex<double>;

class Grid1D {
 public:
  Grid1D() = default;

  double x_min() const noexcept { return x_min_; }
  double x_max() const noexcept { return x_max_; }
  std::size_t size() const noexcept { return n_; }
  double dx() const noexcept { return dx_; }
  double length() const noexcept { return x_max_ - x_min_; }

  double x(std::size_t i) const noexcept {
    return i + 1 == n_ ? x_max_ : x_min_ + static_cast<double>(i) * dx_;
  }

  std::vector<double> points() const {
    std::vector<double> xs(n_);
    for (std::size_t i = 0; i < n_; ++i) xs[i] = x(i);
    return xs;
  }

  /// Trapezoidal quadrature weight of sample i.
  double weight(std::size_t i) const noexcept {
    return (i == 0 || i + 1 == n_) ? 0.5 * dx_ : dx_;
  }

  /// Nearest sample index to position x (clamped to the grid).
  std::size_t index_of(double pos) const noexcept {
    const double r = std::round((pos - x_min_) / dx_);
    if (r <= 0.0) return 0;
    return std::min(n_ - 1, static_cast<std::size_t>(r));
  }

  bool contains(double pos) const noexcept { return pos >= x_min_ && pos <= x_max_; }

  friend bool operator==(const Grid1D& a, const Grid1D& b) noexcept {
    return a.n_ == b.n_ && a.x_min_ == b.x_min_ && a.x_max_ == b.x_max_;
  }

 private:
  friend Grid1D make_grid(double, double, std::size_t);
  Grid1D(double lo, double hi, std::size_t n)
      : x_min_(lo), x_max_(hi), n_(n), dx_((hi - lo) / static_cast<double>(n - 1)) {}

  double x_min_ = 0.0;
  double x_max_ = 1.0;
  std::size_t n_ = 0;
  double dx_ = 0.0;
};

inline constexpr std::size_t kMinGridPoints = 16;

inline Grid1D make_grid(double x_min, double x_max, std::size_t n) {
  if (!(x_min < x_max) || !std::isfinite(x_min) || !std::isfinite(x_max))
    throw Error(ErrorCode::invalid_range,
                "grid requires x_min < x_max, got [" + std::to_string(x_min) + ", " +
                    std::to_string(x_max) + "]");
  if (n < kMinGridPoints)
    throw Error(ErrorCode::too_few_points,
                "grid needs at least 16 points, got " + std::to_string(n));
  return Grid1D(x_min, x_max, n);
}

/// Trapezoidal integral of sampled values over the grid.
inline double integrate(const Grid1D& grid, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += grid.weight(i) * f[i];
  return s;
}

struct WaveFunction {
  Grid1D grid;
  std::vector<cplx> amp;

  WaveFunction() = default;
  explicit WaveFunction(const Grid1D& g) : grid(g), amp(g.size(), cplx{}) {}
  WaveFunction(const Grid1D& g, std::vector<cplx> a) : grid(g), amp(std::move(a)) {}

  std::size_t size() const noexcept { return amp.size(); }

  std::vector<double> density() const {
    std::vector<double> rho(amp.size());
    for (std::size_t i = 0; i < amp.size(); ++i) rho[i] = std::norm(amp[i]);
    return rho;
  }

  double norm2() const {
    double s = 0.0;
    for (std::size_t i = 0; i < amp.size(); ++i) s += grid.weight(i) * std::norm(amp[i]);
    return s;
  }
};

inline void normalize(WaveFunction& psi) {
  const double n2 = psi.norm2();
  if (!(n2 > 0.0) || !std::isfinite(n2))
    throw Error(ErrorCode::invalid_range, "cannot normalize a state with norm " + std::to_string(n2));
  const double s = 1.0 / std::sqrt(n2);
  for (auto& a : psi.amp) a *= s;
}

/// Physical constants of the model. lambda0 is the thermal de Broglie length at T0.
struct ModelParams {
  double hbar = 1.0;
  double mass = 1.0;
  double T0 = 1.0;
  double gamma0 = 1.0;

  double lambda0() const { return hbar * std::sqrt(2.0 * std::numbers::pi / (mass * T0)); }
  double tau0() const { return 1.0 / gamma0; }
};

/// gamma0 = 0 is accepted: it switches the stochastic branch off.
inline ModelParams make_params(double hbar, double mass, double T0, double gamma0) {
  if (!(hbar > 0.0) || !(mass > 0.0) || !(T0 > 0.0) || !(gamma0 >= 0.0))
    throw Error(ErrorCode::invalid_config, "hbar, mass and T0 must be positive, gamma0 non-negative");
  return ModelParams{hbar, mass, T0, gamma0};
}

/// External potential V(x, t).
struct Potential {
  enum class Kind { free, gaussian_barrier, double_well, half_open_well, growing_bump };

  Kind kind = Kind::free;
  // gaussian_barrier: amplitude * exp(-sharpness * x^2)
  double amplitude = 0.0;
  double sharpness = 1.0;
  // square bump used by the well kinds, centred at bump_center
  double bump_center = 0.0;
  double bump_width = 0.0;
  double bump_height = 0.0;
  double growth_rate = 0.0;  // growing_bump height = growth_rate * t
  double wall_pos = 1.0;     // documentation only: walls are the grid edges

  static Potential free_space() { return {}; }
  static Potential gaussian_barrier(double amplitude, double sharpness) {
    Potential v;
    v.kind = Kind::gaussian_barrier;
    v.amplitude = amplitude;
    v.sharpness = sharpness;
    return v;
  }
  static Potential double_well(double wall_pos, double bump_width, double bump_height) {
    Potential v;
    v.kind = Kind::double_well;
    v.wall_pos = wall_pos;
    v.bump_width = bump_width;
    v.bump_height = bump_height;
    return v;
  }
  static Potential half_open_well(double bump_width, double bump_height) {
    Potential v;
    v.kind = Kind::half_open_well;
    v.bump_width = bump_width;
    v.bump_height = bump_height;
    return v;
  }
  static Potential growing_bump(double rate, double bump_width) {
    Potential v;
    v.kind = Kind::growing_bump;
    v.growth_rate = rate;
    v.bump_width = bump_width;
    return v;
  }

  bool time_dependent() const noexcept { return kind == Kind::growing_bump; }

  double operator()(double x, double t) const noexcept {
    switch (kind) {
      case Kind::free: return 0.0;
      case Kind::gaussian_barrier: return amplitude * std::exp(-sharpness * x * x);
      case Kind::double_well:
      case Kind::half_open_well: return in_bump(x) ? bump_height : 0.0;
      case Kind::growing_bump: return in_bump(x) ? growth_rate * t : 0.0;
    }
    return 0.0;
  }

  /// Samples V on the grid at time t.
  std::vector<double> sample(const Grid1D& grid, double t) const {
    std::vector<double> v;
    sample(grid, t, v);
    return v;
  }

  void sample(const Grid1D& grid, double t, std::vector<double>& out) const {
    out.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = (*this)(grid.x(i), t);
  }

 private:
  bool in_bump(double x) const noexcept {
    // The slack keeps mirror-image grid points on the same side of the edge.
    return std::abs(x - bump_center) <= 0.5 * bump_width * (1.0 + 1e-9) + 1e-12;
  }
};

inline std::string to_string(Potential::Kind k) {
  switch (k) {
    case Potential::Kind::free: return "free";
    case Potential::Kind::gaussian_barrier: return "gaussian_barrier";
    case Potential::Kind::double_well: return "double_well";
    case Potential::Kind::half_open_well: return "half_open_well";
    case Potential::Kind::growing_bump: return "growing_bump";
  }
  return "free";
}

/// Normalized psi(x) ∝ exp(-((x - x_c)/delta)^2) exp(i p0 x), with hard-wall endpoints.
inline WaveFunction gaussian_packet(const Grid1D& grid, double x_c, double delta, double p0,
                                    double hbar = 1.0) {
  if (!(delta > 0.0)) throw Error(ErrorCode::invalid_range, "packet width must be positive");
  const auto envelope = [&](double x) {
    const double u = (x - x_c) / delta;
    return std::exp(-u * u);
  };
  // The envelope peaks at 1 when x_c lies inside the grid.
  const double edge = std::max(envelope(grid.x_min()), envelope(grid.x_max()));
  if (!grid.contains(x_c) || edge >= 1e-10)
    throw Error(ErrorCode::packet_clipped, "packet at x_c=" + std::to_string(x_c) + " with delta=" +
                                               std::to_string(delta) + " is clipped by the grid edge");
  WaveFunction psi(grid);
  for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
    const double x = grid.x(i);
    psi.amp[i] = envelope(x) * std::polar(1.0, p0 * x / hbar);
  }
  normalize(psi);
  return psi;
}

struct Observables {
  double norm = 0.0;
  double kinetic = 0.0;
  double potential = 0.0;
  double energy = 0.0;
  double mean_x = 0.0;
  double var_x = 0.0;
};

/// Kinetic energy with the 3-point Laplacian, written in its summation-by-parts
/// form sum |psi_{i+1} - psi_i|^2 / dx, exact for Dirichlet endpoints.
inline double kinetic_energy(const WaveFunction& psi, const ModelParams& params) {
  const double dx = psi.grid.dx();
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < psi.size(); ++i) s += std::norm(psi.amp[i + 1] - psi.amp[i]);
  return params.hbar * params.hbar / (2.0 * params.mass) * s / dx;
}

inline double potential_energy(const WaveFunction& psi, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) s += psi.grid.weight(i) * v[i] * std::norm(psi.amp[i]);
  return s;
}

inline Observables observables(const WaveFunction& psi, std::span<const double> v,
                               const ModelParams& params) {
  Observables o;
  const auto& g = psi.grid;
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const double w = g.weight(i) * std::norm(psi.amp[i]);
    const double x = g.x(i);
    m0 += w;
    m1 += w * x;
    m2 += w * x * x;
  }
  o.norm = m0;
  o.mean_x = m1 / m0;
  o.var_x = m2 / m0 - o.mean_x * o.mean_x;
  o.kinetic = kinetic_energy(psi, params);
  o.potential = v.empty() ? 0.0 : potential_energy(psi, v);
  o.energy = o.kinetic + o.potential;
  return o;
}

inline Observables observables(const WaveFunction& psi, const Potential& v, double t,
                               const ModelParams& params) {
  const auto vs = v.sample(psi.grid, t);
  return observables(psi, vs, params);
}

/// ∫ rho log rho dx, with rho log rho := 0 where rho < 1e-300.
inline double entropy_integral(const Grid1D& grid, std::span<const double> rho) {
  double s = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (rho[i] >= 1e-300) s += grid.weight(i) * rho[i] * std::log(rho[i]);
  return s;
}

struct Branch {
  double weight = 0.0;
  WaveFunction phi;
};

struct Spread {
  double delta_r2 = 0.0;  // sum_n w_n Var_n(x)
  double s_prime = 0.0;   // sum_n w_n ∫ |Phi_n|^2 log |Phi_n|^2
};

/// Spatial spread and localization entropy S' of a set of collapse outcomes.
inline Spread ensemble_spread(std::span<const Branch> branches) {
  double wsum = 0.0;
  for (const auto& b : branches) wsum += b.weight;
  if (branches.empty() || std::abs(wsum - 1.0) > 1e-10)
    throw Error(ErrorCode::weight_mismatch, "branch weights sum to " + std::to_string(wsum));
  Spread out;
  for (const auto& b : branches) {
    const auto& g = b.phi.grid;
    const auto rho = b.phi.density();
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
      m1 += g.weight(i) * rho[i] * g.x(i);
      m2 += g.weight(i) * rho[i] * g.x(i) * g.x(i);
    }
    out.delta_r2 += b.weight * (m2 - m1 * m1);
    out.s_prime += b.weight * entropy_integral(g, rho);
  }
  return out;
}

}  // namespace qcollapse
