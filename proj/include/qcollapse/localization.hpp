#pragma once

// State-dependent localization functions.
//
// A binary split is a pair (P_L, P_R) with P_L^2 + P_R^2 = 1. Two families are
// provided: the cosine-ramp trial pair optimized over (x0, lambda) by
// minimizing the free-energy change dF = dE - T0 dS, and the angle fields
// theta(x) (P_1 = cos theta, P_2 = sin theta) solving the variational pendulum
// equations.

#include <qcollapse/core.hpp>
#include <qcollapse/rng.hpp>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace qcollapse {

enum class EntropyMode {
  exact_overlap,  // von Neumann entropy of the outcome density matrix (uses p)
  mixing,         // -wL log wL - wR log wR
};

enum class Side { left, right };

struct SplitBasis {
  double x0 = 0.0;
  double lambda = 0.0;
  std::vector<double> pL;
  std::vector<double> pR;
  double wL = 0.0;
  double wR = 0.0;
  double dE = 0.0;
  double dS = 0.0;
  double p_overlap = 0.0;

  double dF(double T0) const { return dE - T0 * dS; }
  double weight(Side s) const { return s == Side::left ? wL : wR; }
  const std::vector<double>& function(Side s) const { return s == Side::left ? pL : pR; }
  std::vector<std::vector<double>> functions() const { return {pL, pR}; }
};

/// Angle field of a binary split: P_1 = cos theta, P_2 = sin theta.
struct ThetaField {
  Grid1D grid;
  std::vector<double> theta;
  double lambda = 0.0;
  double x0 = 0.0;
  double half_width = std::numeric_limits<double>::infinity();  // support edge |x - x0|
};

inline SplitBasis to_basis(const ThetaField& field) {
  SplitBasis b;
  b.x0 = field.x0;
  b.lambda = field.lambda;
  b.pL.resize(field.theta.size());
  b.pR.resize(field.theta.size());
  for (std::size_t i = 0; i < field.theta.size(); ++i) {
    b.pL[i] = std::cos(field.theta[i]);
    b.pR[i] = std::sin(field.theta[i]);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Trial pair

/// Cosine ramp of half-width 2*lambda around x0: P_L = cos a, P_R = sin a with
/// a = pi (x - x0 + 2 lambda) / (8 lambda) clamped to [0, pi/2].
inline SplitBasis trial_pair(const Grid1D& grid, double x0, double lambda) {
  if (!(4.0 * lambda >= 3.0 * grid.dx()))
    throw Error(ErrorCode::ramp_underresolved,
                "ramp 4*lambda=" + std::to_string(4.0 * lambda) + " is below 3 grid spacings");
  if (x0 - 2.0 * lambda < grid.x_min() - 1e-12 || x0 + 2.0 * lambda > grid.x_max() + 1e-12)
    throw Error(ErrorCode::ramp_outside_domain,
                "ramp around x0=" + std::to_string(x0) + " leaves the grid");
  SplitBasis b;
  b.x0 = x0;
  b.lambda = lambda;
  const std::size_t n = grid.size();
  b.pL.resize(n);
  b.pR.resize(n);
  const double k = std::numbers::pi / (8.0 * lambda);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = grid.x(i) - x0;
    if (u <= -2.0 * lambda) {
      b.pL[i] = 1.0;
      b.pR[i] = 0.0;
    } else if (u >= 2.0 * lambda) {
      b.pL[i] = 0.0;
      b.pR[i] = 1.0;
    } else {
      const double a = k * (u + 2.0 * lambda);
      b.pL[i] = std::cos(a);
      b.pR[i] = std::sin(a);
    }
  }
  return b;
}

struct Weights {
  double wL = 0.0;
  double wR = 0.0;
};

inline Weights weights(const WaveFunction& psi, const SplitBasis& basis) {
  Weights w;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const double r = psi.grid.weight(i) * std::norm(psi.amp[i]);
    w.wL += basis.pL[i] * basis.pL[i] * r;
    w.wR += basis.pR[i] * basis.pR[i] * r;
  }
  return w;
}

/// p = <Psi|P_L P_R|Psi>.
inline double overlap_p(const WaveFunction& psi, const SplitBasis& basis) {
  double p = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i)
    p += psi.grid.weight(i) * std::norm(psi.amp[i]) * basis.pL[i] * basis.pR[i];
  return p;
}

/// (hbar^2/2m) ∫ rho sum_n (dP_n/dx)^2 discretized on grid links with
/// sqrt(rho_i rho_{i+1}) as the link density. For a state with constant phase
/// this is exactly the 3-point kinetic energy gained by the collapse.
inline double gradient_energy_cost(const Grid1D& grid, std::span<const double> rho,
                                   std::span<const std::vector<double>> functions,
                                   const ModelParams& params) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < rho.size(); ++i) {
    double g2 = 0.0;
    for (const auto& p : functions) {
      const double d = p[i + 1] - p[i];
      g2 += d * d;
    }
    if (g2 != 0.0) s += std::sqrt(rho[i] * rho[i + 1]) * g2;
  }
  return params.hbar * params.hbar / (2.0 * params.mass) * s / grid.dx();
}

/// ∫_a^b rho dx by the trapezoid rule with linear interpolation at fractional ends.
inline double integrate_interval(const Grid1D& grid, std::span<const double> rho, double a, double b) {
  a = std::max(a, grid.x_min());
  b = std::min(b, grid.x_max());
  if (!(b > a)) return 0.0;
  const double dx = grid.dx();
  const auto interp = [&](double x) {
    const double f = (x - grid.x_min()) / dx;
    const auto i = std::min(static_cast<std::size_t>(f), grid.size() - 2);
    const double t = f - static_cast<double>(i);
    return (1.0 - t) * rho[i] + t * rho[i + 1];
  };
  const auto ia = static_cast<std::size_t>(std::ceil((a - grid.x_min()) / dx - 1e-12));
  const auto ib = static_cast<std::size_t>(std::floor((b - grid.x_min()) / dx + 1e-12));
  if (ia > ib) return 0.5 * (interp(a) + interp(b)) * (b - a);
  double s = 0.5 * (interp(a) + rho[ia]) * (grid.x(ia) - a);
  for (std::size_t i = ia; i < ib; ++i) s += 0.5 * (rho[i] + rho[i + 1]) * dx;
  s += 0.5 * (rho[ib] + interp(b)) * (b - grid.x(ib));
  return s;
}

struct EnergyCost {
  double closed_form = 0.0;  // (1/2m)(pi hbar / 8 lambda)^2 ∫_{x0-2l}^{x0+2l} rho
  double gradient = 0.0;     // general gradient formula on the grid
};

inline EnergyCost energy_cost(const WaveFunction& psi, const SplitBasis& basis, const ModelParams& params) {
  const auto rho = psi.density();
  EnergyCost c;
  const double k = std::numbers::pi * params.hbar / (8.0 * basis.lambda);
  c.closed_form = k * k / (2.0 * params.mass) *
                  integrate_interval(psi.grid, rho, basis.x0 - 2.0 * basis.lambda, basis.x0 + 2.0 * basis.lambda);
  const std::array<std::vector<double>, 2> fs{basis.pL, basis.pR};
  c.gradient = gradient_energy_cost(psi.grid, rho, fs, params);
  return c;
}

inline double xlogx(double v) { return v > 0.0 ? v * std::log(v) : 0.0; }

/// Entropy created by a binary collapse. The exact form diagonalizes the 2x2
/// Gram matrix [[wL, p], [p, wR]] of the unnormalized outcomes; for
/// wL = wR = 1/2 it reduces to -(1/2+p)log(1/2+p) - (1/2-p)log(1/2-p).
inline double entropy_gain(double wL, double wR, double p, EntropyMode mode = EntropyMode::exact_overlap) {
  if (mode == EntropyMode::mixing) return -xlogx(wL) - xlogx(wR);
  const double trace = wL + wR;
  const double disc = std::sqrt((wL - wR) * (wL - wR) + 4.0 * p * p);
  const double hi = std::min(trace, 0.5 * (trace + disc));
  const double lo = std::max(0.0, 0.5 * (trace - disc));
  return -xlogx(hi) - xlogx(lo);
}

/// Fills weights, overlap, energy cost (gradient route) and entropy for the state.
inline void evaluate_split(const WaveFunction& psi, SplitBasis& basis, const ModelParams& params,
                           EntropyMode mode = EntropyMode::exact_overlap) {
  const auto w = weights(psi, basis);
  basis.wL = w.wL;
  basis.wR = w.wR;
  basis.p_overlap = overlap_p(psi, basis);
  basis.dE = energy_cost(psi, basis, params).gradient;
  basis.dS = entropy_gain(basis.wL, basis.wR, basis.p_overlap, mode);
}

// ---------------------------------------------------------------------------
// Optimizer

enum class ScanMode { scan_x0, scan_lambda, scan_both };

struct SplitOptions {
  ScanMode mode = ScanMode::scan_x0;
  double lambda = 0.0;  // fixed width for scan_x0
  double x0 = 0.0;      // fixed centre for scan_lambda
  EntropyMode entropy = EntropyMode::exact_overlap;
  double tol_factor = 1e-9;       // tol_F = tol_factor * T0
  double density_cutoff = 0.9;    // x0 only where rho < cutoff * max rho
  int lambda_per_decade = 16;
  double min_branch_weight = 1e-12;
};

/// Geometric ladder of widths from 3dx/4 up to lambda_max.
inline std::vector<double> lambda_ladder(const Grid1D& grid, double lambda_max, int per_decade = 16) {
  std::vector<double> out;
  const double lo = 0.75 * grid.dx();
  for (int j = 0;; ++j) {
    const double l = lo * std::pow(10.0, static_cast<double>(j) / per_decade);
    if (l > lambda_max * (1.0 + 1e-12)) break;
    out.push_back(l);
  }
  return out;
}

namespace detail {

struct Candidate {
  double x0;
  double lambda;
  double dF;
};

/// Split statistics from the ramp region only, using prefix sums of the
/// trapezoid-weighted density for the flat parts.
class SplitScanner {
 public:
  SplitScanner(const WaveFunction& psi, const ModelParams& params, EntropyMode mode)
      : grid_(psi.grid), params_(params), mode_(mode), rho_(psi.density()), prefix_(rho_.size() + 1, 0.0) {
    for (std::size_t i = 0; i < rho_.size(); ++i) prefix_[i + 1] = prefix_[i] + grid_.weight(i) * rho_[i];
  }

  const std::vector<double>& rho() const { return rho_; }

  bool fits(double x0, double lambda) const {
    return x0 - 2.0 * lambda >= grid_.x_min() - 1e-12 && x0 + 2.0 * lambda <= grid_.x_max() + 1e-12;
  }

  struct Stats {
    double wL, wR, p, dE, dS;
  };

  Stats evaluate(double x0, double lambda) const {
    const double dx = grid_.dx();
    const std::size_t n = rho_.size();
    const double lo = x0 - 2.0 * lambda;
    const double hi = x0 + 2.0 * lambda;
    // first index strictly inside the ramp and last index strictly inside
    auto first = static_cast<std::ptrdiff_t>(std::floor((lo - grid_.x_min()) / dx)) + 1;
    auto last = static_cast<std::ptrdiff_t>(std::ceil((hi - grid_.x_min()) / dx)) - 1;
    first = std::max<std::ptrdiff_t>(first, 0);
    last = std::min<std::ptrdiff_t>(last, static_cast<std::ptrdiff_t>(n) - 1);
    const double k = std::numbers::pi / (8.0 * lambda);
    const auto pl = [&](std::ptrdiff_t i, double& l, double& r) {
      const double u = grid_.x(static_cast<std::size_t>(i)) - x0;
      if (u <= -2.0 * lambda) {
        l = 1.0;
        r = 0.0;
      } else if (u >= 2.0 * lambda) {
        l = 0.0;
        r = 1.0;
      } else {
        const double a = k * (u + 2.0 * lambda);
        l = std::cos(a);
        r = std::sin(a);
      }
    };
    Stats s{};
    s.wL = prefix_[static_cast<std::size_t>(std::max<std::ptrdiff_t>(first, 0))];
    s.wR = prefix_[n] - prefix_[static_cast<std::size_t>(std::max<std::ptrdiff_t>(last + 1, 0))];
    double grad = 0.0;
    double prev_l = 1.0, prev_r = 0.0;
    if (first > 0) pl(first - 1, prev_l, prev_r);
    for (std::ptrdiff_t i = first; i <= last + 1 && i < static_cast<std::ptrdiff_t>(n); ++i) {
      double l, r;
      pl(i, l, r);
      if (i <= last) {
        const double wr = grid_.weight(static_cast<std::size_t>(i)) * rho_[static_cast<std::size_t>(i)];
        s.wL += l * l * wr;
        s.wR += r * r * wr;
        s.p += l * r * wr;
      }
      if (i > 0) {
        const double dl = l - prev_l, dr = r - prev_r;
        grad += std::sqrt(rho_[static_cast<std::size_t>(i - 1)] * rho_[static_cast<std::size_t>(i)]) *
                (dl * dl + dr * dr);
      }
      prev_l = l;
      prev_r = r;
    }
    s.dE = params_.hbar * params_.hbar / (2.0 * params_.mass) * grad / dx;
    s.dS = entropy_gain(s.wL, s.wR, s.p, mode_);
    return s;
  }

 private:
  Grid1D grid_;
  ModelParams params_;
  EntropyMode mode_;
  std::vector<double> rho_;
  std::vector<double> prefix_;
};

}  // namespace detail

/// Binary split minimizing dF = dE - T0 dS over the scan. Returns nullopt
/// (no split) unless the best candidate lowers the free energy by more than
/// tol_F. Candidates within tol_F of the best are tied and one is drawn
/// uniformly; exactly one draw is taken from rng per call.
inline std::optional<SplitBasis> optimize_split(const WaveFunction& psi, const ModelParams& params,
                                                const SplitOptions& opt, RandomStream& rng) {
  const Grid1D& grid = psi.grid;
  detail::SplitScanner scan(psi, params, opt.entropy);
  const auto& rho = scan.rho();

  std::vector<double> x0s;
  if (opt.mode == ScanMode::scan_lambda) {
    x0s.push_back(opt.x0);
  } else {
    const double rmax = *std::max_element(rho.begin(), rho.end());
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (rho[i] < opt.density_cutoff * rmax) x0s.push_back(grid.x(i));
  }
  std::vector<double> lambdas;
  if (opt.mode == ScanMode::scan_x0) {
    if (!(4.0 * opt.lambda >= 3.0 * grid.dx()))
      throw Error(ErrorCode::ramp_underresolved, "fixed lambda is below the grid resolution");
    lambdas.push_back(opt.lambda);
  } else {
    lambdas = lambda_ladder(grid, params.lambda0(), opt.lambda_per_decade);
  }

  std::vector<detail::Candidate> cands;
  cands.reserve(x0s.size() * lambdas.size());
  double best = std::numeric_limits<double>::infinity();
  for (double x0 : x0s)
    for (double l : lambdas) {
      if (!scan.fits(x0, l)) continue;
      const auto s = scan.evaluate(x0, l);
      if (s.wL < opt.min_branch_weight || s.wR < opt.min_branch_weight) continue;
      const double f = s.dE - params.T0 * s.dS;
      cands.push_back({x0, l, f});
      best = std::min(best, f);
    }

  const double tol = opt.tol_factor * params.T0;
  const double u = rng.uniform();
  if (cands.empty() || !(best < -tol)) return std::nullopt;

  std::vector<const detail::Candidate*> tied;
  for (const auto& c : cands)
    if (c.dF <= best + tol) tied.push_back(&c);
  const auto pick = std::min(tied.size() - 1, static_cast<std::size_t>(u * static_cast<double>(tied.size())));
  const auto& c = *tied[pick];

  SplitBasis basis = trial_pair(grid, c.x0, c.lambda);
  evaluate_split(psi, basis, params, opt.entropy);
  if (basis.wL < opt.min_branch_weight || basis.wR < opt.min_branch_weight || !(basis.dF(params.T0) < 0.0))
    return std::nullopt;
  return basis;
}

// ---------------------------------------------------------------------------
// Variational solutions

/// cos 2 theta = -tanh((x - x0)/lambda), i.e. theta = atan(exp((x - x0)/lambda)).
inline ThetaField pendulum_analytic(const Grid1D& grid, double x0, double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorCode::invalid_range, "lambda must be positive");
  ThetaField f{grid, std::vector<double>(grid.size()), lambda, x0};
  for (std::size_t i = 0; i < grid.size(); ++i) f.theta[i] = std::atan(std::exp((grid.x(i) - x0) / lambda));
  return f;
}

/// V(0) - V(theta) for the entropy pendulum 4 lambda^2 theta'' = sin 2theta log cot theta,
/// written as -s log sin(theta) - c log cos(theta) with s = sin^2, c = cos^2 (no cancellation).
inline double entropy_pendulum_gap(double theta) {
  const double t = std::min(theta, std::numbers::pi / 2 - theta);
  const double sn = std::sin(t);
  const double s = sn * sn;
  const double log_sin = std::log(sn);
  const double log_cos = 0.5 * std::log1p(-s);
  return -(s * log_sin + (1.0 - s) * log_cos);
}

/// Default support cutoff: the localization weight sin^2 theta reaches double epsilon.
inline constexpr double kEntropyPendulumCutoff = 0x1.0p-52;

namespace detail {

/// Distance from the centre as a function of s = -log(theta) for theta <= pi/4,
/// tabulated on short panels and refined by Newton inside a panel.
class EntropyPendulumProfile {
 public:
  EntropyPendulumProfile(double lambda, double cutoff) : scale_(lambda * std::numbers::sqrt2) {
    s0_ = -std::log(std::numbers::pi / 4);
    s_end_ = -std::log(std::asin(std::sqrt(cutoff)));
    const int panels = std::max(8, static_cast<int>(std::ceil((s_end_ - s0_) / 0.05)));
    ds_ = (s_end_ - s0_) / panels;
    nodes_.resize(static_cast<std::size_t>(panels) + 1);
    nodes_[0] = 0.0;
    for (int k = 0; k < panels; ++k)
      nodes_[static_cast<std::size_t>(k) + 1] = nodes_[static_cast<std::size_t>(k)] + integral(s_at(k), s_at(k + 1));
  }

  double half_width() const { return nodes_.back(); }

  /// theta at distance d >= 0 from the centre on the theta <= pi/4 side.
  double theta_at(double d) const {
    if (d <= 0.0) return std::numbers::pi / 4;
    if (d >= half_width()) return 0.0;
    const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), d);
    const auto k = static_cast<int>(std::distance(nodes_.begin(), it)) - 1;
    const double sk = s_at(k);
    const double base = nodes_[static_cast<std::size_t>(k)];
    double s = sk + (d - base) / integrand(sk);
    s = std::clamp(s, sk, s_at(k + 1));
    for (int iter = 0; iter < 60; ++iter) {
      const double g = base + integral(sk, s) - d;
      const double step = g / integrand(s);
      s = std::clamp(s - step, sk, s_at(k + 1));
      if (std::abs(step) < 1e-15 * std::max(1.0, s)) return std::exp(-s);
    }
    throw Error(ErrorCode::solver_nonconvergence,
                "Newton inversion of the entropy pendulum profile stalled at d=" + std::to_string(d));
  }

  double integrand(double s) const {
    const double th = std::exp(-s);
    return scale_ * th / std::sqrt(entropy_pendulum_gap(th));
  }

 private:
  double s_at(int k) const { return k == static_cast<int>(nodes_.size()) - 1 ? s_end_ : s0_ + k * ds_; }
  double integral(double a, double b) const {
    if (b <= a) return 0.0;
    return boost::math::quadrature::gauss<double, 15>::integrate([this](double s) { return integrand(s); }, a, b);
  }

  double scale_;
  double s0_ = 0.0;
  double s_end_ = 0.0;
  double ds_ = 0.0;
  std::vector<double> nodes_;
};

}  // namespace detail

/// Support width of the entropy-pendulum transition, |x(pi/2) - x(0)|, with the
/// ends placed where sin^2 theta = cutoff.
inline double entropy_pendulum_width(double lambda, double cutoff = kEntropyPendulumCutoff) {
  return 2.0 * detail::EntropyPendulumProfile(lambda, cutoff).half_width();
}

/// Solution of 4 lambda^2 theta'' = sin 2theta log cot theta rising from 0 to
/// pi/2 around x0, obtained from the first integral 2 lambda^2 theta'^2 =
/// V(0) - V(theta) by quadrature in theta. The integral grows like
/// sqrt(log(1/theta)) at the ends, so the support edge is placed at the cutoff.
inline ThetaField pendulum_entropy(const Grid1D& grid, double x0, double lambda,
                                   double cutoff = kEntropyPendulumCutoff) {
  if (!(lambda > 0.0)) throw Error(ErrorCode::invalid_range, "lambda must be positive");
  const detail::EntropyPendulumProfile profile(lambda, cutoff);
  ThetaField f{grid, std::vector<double>(grid.size()), lambda, x0, profile.half_width()};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double u = grid.x(i) - x0;
    const double th = profile.theta_at(std::abs(u));
    f.theta[i] = u < 0.0 ? th : std::numbers::pi / 2 - th;
  }
  return f;
}

/// theta'(theta) along the entropy-pendulum solution.
inline double entropy_pendulum_slope(double theta, double lambda) {
  return std::sqrt(entropy_pendulum_gap(theta) / 2.0) / lambda;
}

/// x0 with ∫ tanh((x - x0)/lambda) rho dx = 0, the centre that gives w1 = w2 = 1/2
/// for the analytic pendulum solution.
inline double center_condition(const Grid1D& grid, std::span<const double> rho, double lambda) {
  const auto f = [&](double x0) {
    double s = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) s += grid.weight(i) * std::tanh((grid.x(i) - x0) / lambda) * rho[i];
    return s;
  };
  double lo = grid.x_min(), hi = grid.x_max();
  double flo = f(lo), fhi = f(hi);
  if (flo < 0.0 || fhi > 0.0) throw Error(ErrorCode::no_root_in_bracket, "density is not normalizable for centering");
  for (int iter = 0; iter < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if (fm > 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// q(lambda) = ∫ sin^2(2 theta) rho dx for the tanh solution centred at x0,
/// i.e. ∫ sech^2((x - x0)/lambda) rho dx. With it the energy cost of the
/// split is exactly hbar^2 q / (8 m lambda^2).
inline double q_factor(const Grid1D& grid, std::span<const double> rho, double x0, double lambda) {
  double s = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double c = std::cosh((grid.x(i) - x0) / lambda);
    s += grid.weight(i) * rho[i] / (c * c);
  }
  return s;
}

struct LambdaSolution {
  double lambda = 0.0;
  double q = 0.0;
  bool step_function_limit = false;
};

/// Width lambda solving hbar^2 q(lambda) / (8 m lambda^2) = T0 log 2.
inline LambdaSolution lambda_from_constraint(const Grid1D& grid, std::span<const double> rho, double x0,
                                             const ModelParams& params, double lambda_lo = 0.0,
                                             double lambda_hi = 0.0) {
  if (lambda_lo <= 0.0) lambda_lo = 0.75 * grid.dx();
  if (lambda_hi <= 0.0) lambda_hi = grid.length();
  const double target = params.T0 * std::numbers::ln2;
  const auto f = [&](double l) {
    return params.hbar * params.hbar * q_factor(grid, rho, x0, l) / (8.0 * params.mass * l * l) - target;
  };
  const double flo = f(lambda_lo);
  if (flo <= 0.0) return {lambda_lo, q_factor(grid, rho, x0, lambda_lo), true};
  const double fhi = f(lambda_hi);
  if (fhi > 0.0)
    throw Error(ErrorCode::no_root_in_bracket,
                "energy cost exceeds T0 log 2 even at lambda=" + std::to_string(lambda_hi));
  // the cost falls roughly like 1/lambda; solving in log(lambda) keeps toms748 well scaled
  const auto g = [&](double ll) { return f(std::exp(ll)); };
  std::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(g, std::log(lambda_lo), std::log(lambda_hi), flo, fhi,
                                                        boost::math::tools::eps_tolerance<double>(50), iters);
  const double l = std::exp(0.5 * (a + b));
  return {l, q_factor(grid, rho, x0, l), false};
}

/// S' = sum_n w_n ∫ |Phi_n|^2 log |Phi_n|^2 for localization functions P_n.
inline double localization_entropy(const WaveFunction& psi, std::span<const std::vector<double>> functions) {
  const auto rho = psi.density();
  double total = 0.0;
  std::vector<double> part(rho.size());
  for (const auto& p : functions) {
    for (std::size_t i = 0; i < rho.size(); ++i) part[i] = p[i] * p[i] * rho[i];
    const double w = integrate(psi.grid, part);
    if (w <= 0.0) continue;
    for (auto& v : part) v /= w;
    total += w * entropy_integral(psi.grid, part);
  }
  return total;
}

struct ProductEntropy {
  double joint = 0.0;
  double sum = 0.0;
};

inline constexpr std::size_t kMaxProductAxis = 64;

/// S' of the product state psiA(x1) psiB(x2) with product localization functions,
/// by direct 2D quadrature, next to S'_A + S'_B.
inline ProductEntropy s_prime_product_factorization(const WaveFunction& psiA, const WaveFunction& psiB,
                                                    std::span<const std::vector<double>> funcsA,
                                                    std::span<const std::vector<double>> funcsB) {
  const std::size_t na = psiA.size(), nb = psiB.size();
  if (na > kMaxProductAxis || nb > kMaxProductAxis)
    throw Error(ErrorCode::grid_too_large, "joint grid limited to 64 points per axis");
  const auto ra = psiA.density();
  const auto rb = psiB.density();
  ProductEntropy out;
  std::vector<double> joint(na * nb);
  for (const auto& pa : funcsA)
    for (const auto& pb : funcsB) {
      double w = 0.0;
      for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j) {
          const double v = pa[i] * pa[i] * ra[i] * pb[j] * pb[j] * rb[j];
          joint[i * nb + j] = v;
          w += psiA.grid.weight(i) * psiB.grid.weight(j) * v;
        }
      if (w <= 0.0) continue;
      double s = 0.0;
      for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j) {
          const double v = joint[i * nb + j] / w;
          if (v >= 1e-300) s += psiA.grid.weight(i) * psiB.grid.weight(j) * v * std::log(v);
        }
      out.joint += w * s;
    }
  out.sum = localization_entropy(psiA, funcsA) + localization_entropy(psiB, funcsB);
  return out;
}

}  // namespace qcollapse
