#include <qcollapse/qcollapse.hpp>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace qc = qcollapse;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) { return qc::format_g9(v); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool within_3_sigma(double k, double n, double p) {
  return std::abs(k - n * p) <= 3.0 * std::sqrt(n * p * (1.0 - p));
}

qc::WaveFunction two_gaussians(const qc::Grid1D& g, double R, double sigma, double w_plus) {
  qc::WaveFunction psi(g);
  const double cp = std::sqrt(w_plus), cm = std::sqrt(1.0 - w_plus);
  for (std::size_t i = 1; i + 1 < g.size(); ++i) {
    const double a = (g.x(i) - R) / sigma, b = (g.x(i) + R) / sigma;
    psi.amp[i] = cp * std::exp(-a * a) + cm * std::exp(-b * b);
  }
  qc::normalize(psi);
  return psi;
}

// A few random bumps on a floor, so the density never vanishes inside.
qc::WaveFunction random_positive(const qc::Grid1D& g, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> pos(g.x_min() * 0.6, g.x_max() * 0.6), width(0.5, 2.0), amp(0.2, 1.0);
  std::vector<std::array<double, 3>> bumps(4);
  for (auto& b : bumps) b = {pos(gen), width(gen), amp(gen)};
  qc::WaveFunction psi(g);
  for (std::size_t i = 1; i + 1 < g.size(); ++i) {
    double s = 0.02;
    for (const auto& b : bumps) s += b[2] * std::exp(-std::pow((g.x(i) - b[0]) / b[1], 2));
    psi.amp[i] = s;
  }
  qc::normalize(psi);
  return psi;
}

double variance(const qc::WaveFunction& psi) {
  return qc::observables(psi, std::vector<double>{}, {}).var_x;
}

Verdict unitarity_and_energy() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = qc::preset("free");
  const auto g = qc::make_grid(c.grid.x_min, c.grid.x_max, c.grid.n);
  const auto psi0 = qc::make_initial(c, g);
  const std::size_t steps = 10000;
  const qc::PropagatorConfig cfg{c.dt, 100};
  const double t_end = static_cast<double>(steps) * c.dt;

  double norm_drift = 0.0;
  const auto track = [&](double, const qc::WaveFunction& psi) {
    norm_drift = std::max(norm_drift, std::abs(psi.norm2() - 1.0));
  };
  const auto free_end = qc::evolve(psi0, c.potential, 0.0, t_end, cfg, c.params, track);
  const double e0 = qc::observables(psi0, c.potential, 0.0, c.params).energy;
  const double e1 = qc::observables(free_end, c.potential, 0.0, c.params).energy;
  double e_drift = std::abs(e1 - e0) / e0;
  const double runtime = seconds_since(t0);

  // same check with a static barrier in the way
  const auto barrier = qc::Potential::gaussian_barrier(1.0, 1.0);
  const auto moving = qc::gaussian_packet(g, -6.0, c.initial.delta, 1.5);
  const auto bar_end = qc::evolve(moving, barrier, 0.0, t_end, cfg, c.params, track);
  const double b0 = qc::observables(moving, barrier, 0.0, c.params).energy;
  const double b1 = qc::observables(bar_end, barrier, 0.0, c.params).energy;
  e_drift = std::max(e_drift, std::abs(b1 - b0) / b0);

  return {norm_drift < 1e-10 && e_drift < 1e-6 && runtime < 30.0,
          "norm drift " + fmt(norm_drift) + ", energy drift " + fmt(e_drift) + ", free run " + fmt(runtime) + " s"};
}

Verdict dispersion() {
  auto c = qc::preset("free");
  const auto g = qc::make_grid(c.grid.x_min, c.grid.x_max, c.grid.n);
  const auto psi0 = qc::make_initial(c, g);
  const double s0 = c.initial.delta * c.initial.delta / 4.0;
  const double t_char = 2.0 * c.params.mass * s0 / c.params.hbar;
  double worst = 0.0;
  qc::evolve(psi0, c.potential, 0.0, 5.0 * t_char, {t_char / 200.0, 20}, c.params,
             [&](double t, const qc::WaveFunction& psi) {
               const double u = t / t_char;
               worst = std::max(worst, std::abs(variance(psi) / (s0 * (1.0 + u * u)) - 1.0));
             });
  return {worst < 5e-3, "max relative variance error " + fmt(worst) + " over 5 spreading times"};
}

Verdict energy_identity() {
  const auto g = qc::make_grid(-8.0, 8.0, 801);
  const auto p = qc::make_params(1.0, 0.5, 1.0, 1.0);
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> x0(-3.0, 3.0), lam(0.05, 1.0), phase(-std::numbers::pi, std::numbers::pi),
      kick(-1e-3, 1e-3);
  double worst = 0.0, min_de = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 100; ++k) {
    auto psi = random_positive(g, gen);
    const double theta = phase(gen), p0 = kick(gen) / g.dx();
    for (std::size_t i = 0; i < psi.size(); ++i) psi.amp[i] *= std::polar(1.0, theta + p0 * g.x(i));
    const auto basis = qc::trial_pair(g, x0(gen), lam(gen));
    const double dE = qc::energy_cost(psi, basis, p).gradient;
    const auto w = qc::weights(psi, basis);
    const double direct = w.wL * qc::kinetic_energy(qc::apply_branch(psi, basis, qc::Side::left), p) +
                          w.wR * qc::kinetic_energy(qc::apply_branch(psi, basis, qc::Side::right), p) -
                          qc::kinetic_energy(psi, p);
    worst = std::max(worst, std::abs(dE - direct) / std::abs(direct));
    min_de = std::min(min_de, dE);
  }
  return {worst < 1e-6 && min_de >= 0.0, "max relative gap " + fmt(worst) + ", min dE " + fmt(min_de)};
}

Verdict born_rule() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto g = qc::make_grid(-10.0, 10.0, 512);
  const auto p = qc::make_params(1.0, 1.0, 1.0, 1.0);
  qc::SplitOptions opt;
  opt.lambda = p.lambda0() / 8.0;
  bool ok = true;
  double worst_overlap = 0.0;
  std::ostringstream os;
  const std::size_t n = 2000;
  for (double wp : {0.5, 0.64, 0.9}) {
    const auto psi0 = two_gaussians(g, 4.0, 1.0, wp);
    std::size_t right = 0, nosplit = 0;
    for (std::uint64_t seed = 1; seed <= n; ++seed) {
      auto psi = psi0;
      qc::RandomStream rng(seed);
      const auto ev = qc::force_collapse(psi, p, opt, rng);
      if (!ev.split()) {
        ++nosplit;
        continue;
      }
      if (ev.chosen == qc::Outcome::R) ++right;
      const auto basis = qc::trial_pair(g, ev.x0, ev.lambda);
      worst_overlap = std::max(worst_overlap, qc::overlap_p(psi0, basis) / std::sqrt(ev.wL * ev.wR));
    }
    const bool pass = nosplit == 0 && within_3_sigma(static_cast<double>(right), static_cast<double>(n), wp);
    ok = ok && pass;
    os << "w+=" << wp << ": " << right << "/" << n << " right; ";
  }
  const double runtime = seconds_since(t0);
  os << "max overlap " << fmt(worst_overlap) << ", " << fmt(runtime) << " s";
  return {ok && worst_overlap < 1e-8 && runtime < 120.0, os.str()};
}

Verdict survival() {
  auto c = qc::preset("free");
  c.grid.n = 256;
  c.dt = 0.01;
  c.t_end = c.params.tau0();
  c.snapshot_stride = 50;
  const auto spec = qc::make_trajectory_spec(c);
  const std::size_t n = 10000;
  const auto res = qc::run_ensemble(spec, n);
  const double s = res.stats.survival.back();
  const double e = std::exp(-1.0);
  const double sigma = std::sqrt(e * (1.0 - e) / static_cast<double>(n));
  return {std::abs(s - e) <= 3.0 * sigma,
          "uncollapsed fraction " + fmt(s) + " vs " + fmt(e) + " (3 sigma " + fmt(3.0 * sigma) + ")"};
}

Verdict analytic_pendulum() {
  const double lam = 0.8, x0 = 0.3;
  const auto g = qc::make_grid(-8.0, 8.0, 1601);
  const auto f = qc::pendulum_analytic(g, x0, lam);
  const double h = g.dx();
  double res = 0.0, fi = 0.0;
  for (std::size_t i = 2; i + 2 < g.size(); ++i) {
    const auto& t = f.theta;
    const double d2 = (-t[i - 2] + 16.0 * t[i - 1] - 30.0 * t[i] + 16.0 * t[i + 1] - t[i + 2]) / (12.0 * h * h);
    const double d1 = (t[i - 2] - 8.0 * t[i - 1] + 8.0 * t[i + 1] - t[i + 2]) / (12.0 * h);
    res = std::max(res, std::abs(4.0 * lam * lam * d2 - std::sin(4.0 * t[i])));
    fi = std::max(fi, std::abs(2.0 * lam * lam * d1 * d1 + std::cos(4.0 * t[i]) / 4.0 - 0.25));
  }

  const auto fine = qc::make_grid(-10.0, 10.0, 20001);
  const auto p = qc::make_params(1.0, 0.5, 1.0, 1.0);
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> centre(-2.0, 2.0), width(0.3, 1.5);
  double q_gap = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto rho = random_positive(fine, gen).density();
    const double c = centre(gen), l = width(gen);
    const auto fs = qc::to_basis(qc::pendulum_analytic(fine, c, l)).functions();
    const double dE = qc::gradient_energy_cost(fine, rho, fs, p);
    const double q = qc::q_factor(fine, rho, c, l);
    q_gap = std::max(q_gap, std::abs(dE / (p.hbar * p.hbar * q / (8.0 * p.mass * l * l)) - 1.0));
  }
  return {res < 1e-8 && fi < 1e-8 && q_gap < 1e-6,
          "residual " + fmt(res) + ", first integral " + fmt(fi) + ", q identity " + fmt(q_gap)};
}

Verdict entropy_pendulum() {
  const double tc = std::asin(std::sqrt(qc::kEntropyPendulumCutoff));
  boost::math::quadrature::tanh_sinh<double> ts;
  double worst = 0.0, slope = 0.0;
  for (double lam : {0.5, 1.0, 2.0}) {
    const double half = ts.integrate(
        [lam](double th) { return lam * std::numbers::sqrt2 / std::sqrt(qc::entropy_pendulum_gap(th)); }, tc,
        std::numbers::pi / 4);
    worst = std::max(worst, std::abs(qc::entropy_pendulum_width(lam) / (2.0 * half) - 1.0));
    slope = std::max(slope, qc::entropy_pendulum_slope(tc, lam));
    slope = std::max(slope, qc::entropy_pendulum_slope(std::numbers::pi / 2 - tc, lam));
  }
  return {worst < 1e-4 && slope < 1e-6, "width error " + fmt(worst) + ", endpoint slope " + fmt(slope)};
}

Verdict lambda_scaling() {
  // cold enough that the ramp stays well inside the trough
  const auto g = qc::make_grid(-12.0, 12.0, 24001);
  const auto p = qc::make_params(1.0, 1.0, 0.05, 1.0);
  std::vector<double> lx, ly;
  for (double R = 2.8; R <= 3.6 + 1e-9; R += 0.1) {
    const auto rho = two_gaussians(g, R, 2.0, 0.5).density();
    const auto sol = qc::lambda_from_constraint(g, rho, 0.0, p);
    if (sol.step_function_limit) return {false, "step-function limit at R=" + fmt(R)};
    lx.push_back(std::log(rho[g.index_of(0.0)]));
    ly.push_back(std::log(sol.lambda));
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    mx += lx[k] / n;
    my += ly[k] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  const double slope = sxy / sxx;
  const double decades = (lx.back() - lx.front()) / std::log(10.0);
  return {std::abs(slope - 1.0) <= 0.15 && std::abs(decades) >= 1.0,
          "slope " + fmt(slope) + " over " + fmt(std::abs(decades)) + " decades"};
}

Verdict stable_packet() {
  const auto c = qc::preset("free");
  const auto g = qc::make_grid(c.grid.x_min, c.grid.x_max, c.grid.n);
  const auto psi = qc::gaussian_packet(g, 0.0, c.params.lambda0() / 3.0, 0.0);
  qc::SplitOptions opt;
  opt.lambda = c.params.lambda0() / 8.0;
  std::size_t nosplit = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    qc::RandomStream rng(seed);
    if (!qc::optimize_split(psi, c.params, opt, rng)) ++nosplit;
  }
  return {nosplit >= 990, std::to_string(nosplit) + "/1000 NoSplit"};
}

Verdict zeno() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = qc::preset("double_well");
  auto spec = qc::make_trajectory_spec(c);
  spec.snapshot_stride = 1;

  auto off = spec;
  off.mode = qc::CollapseMode::off;
  const auto free_run = qc::summarize(qc::run_trajectory(off, 1), spec.partition_x);
  const auto [lo, hi] = std::minmax_element(free_run.left_series.begin(), free_run.left_series.end());
  const bool oscillates = *lo < 0.1 && *hi > 0.9;

  const auto res = qc::run_ensemble(spec, 50);
  std::size_t samples = 0, near_pole = 0, switches = 0;
  for (const auto& s : res.summaries) {
    for (std::size_t k = 0; k < s.left_series.size(); ++k) {
      const double occ = s.left_series[k];
      ++samples;
      if (occ <= 0.2 || occ >= 0.8) ++near_pole;
      if (k > 0) {
        const double prev = s.left_series[k - 1];
        if ((prev >= 0.8 && occ <= 0.2) || (prev <= 0.2 && occ >= 0.8)) ++switches;
      }
    }
  }
  const double frac = static_cast<double>(near_pole) / static_cast<double>(samples);
  const double runtime = seconds_since(t0);
  return {oscillates && frac >= 0.8 && switches >= 1 && runtime < 300.0,
          "uncollapsed range [" + fmt(*lo) + ", " + fmt(*hi) + "], near 0 or 1 " + fmt(frac) + ", one-step switches " +
              std::to_string(switches) + ", " + fmt(runtime) + " s"};
}

Verdict wall_insertion() {
  const auto spec = qc::make_trajectory_spec(qc::preset("wall_insertion"));
  const auto res = qc::run_ensemble(spec, 400);
  const auto& s = res.stats;
  const double confined = static_cast<double>(s.final_left + s.final_right);
  const bool fair = within_3_sigma(static_cast<double>(s.final_left), confined, 0.5);
  return {confined >= 0.99 * 400.0 && fair, std::to_string(s.final_left) + " left, " + std::to_string(s.final_right) +
                                                " right, " + std::to_string(s.final_mixed) + " unconfined of 400"};
}

Verdict master_equation() {
  const auto g = qc::make_grid(-8.0, 8.0, 64);
  const auto p = qc::make_params(1.0, 1.0, 1.0, 1.5);
  const auto basis = qc::trial_pair(g, 0.3, 1.2);
  const auto k = qc::delta_kernel(basis);
  const auto psi = two_gaussians(g, 1.5, 1.0, 0.4);
  const auto d0 = qc::pure_state(psi);

  // H = 0: closed form and monotone purity
  qc::MasterConfig decay{0.01, 0.8, false};
  double prev = d0.purity();
  bool monotone = true;
  const auto out = qc::evolve_master(d0, k, p, decay, [&](double, const qc::DensityMatrixGrid& d) {
    monotone = monotone && d.purity() <= prev + 1e-15;
    prev = d.purity();
  });
  const Eigen::MatrixXd f = (-p.gamma0 * decay.t_end * (1.0 - k.array())).exp().matrix();
  const double closed = (out.rho - d0.rho.cwiseProduct(f.cast<qc::cplx>())).cwiseAbs().maxCoeff();

  // Delta = 1: unitary only
  qc::MasterConfig unitary{0.01, 1.0};
  unitary.potential = qc::Potential::gaussian_barrier(1.0, 1.0);
  double purity_dev = 0.0;
  qc::evolve_master(d0, qc::DeltaKernel::Ones(64, 64), p, unitary, [&](double, const qc::DensityMatrixGrid& d) {
    purity_dev = std::max(purity_dev, std::abs(d.purity() - 1.0));
  });

  // sampled branches against the collapse map
  const auto expect = qc::collapse_map(d0, k).rho;
  const auto w = qc::weights(psi, basis);
  const std::size_t n = 4000;
  Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(64, 64);
  Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(64, 64);
  qc::RandomStream rng(12);
  for (std::size_t s = 0; s < n; ++s) {
    const auto side = rng.uniform() * (w.wL + w.wR) < w.wL ? qc::Side::left : qc::Side::right;
    const auto r = qc::pure_state(qc::apply_branch(psi, basis, side)).rho;
    sum += r;
    sum2 += r.cwiseAbs2();
  }
  const double nn = static_cast<double>(n);
  const Eigen::MatrixXcd mean = sum / nn;
  const Eigen::MatrixXd var = (sum2 / nn - mean.cwiseAbs2()).cwiseMax(0.0);
  const Eigen::ArrayXXd sigma = (var / nn).cwiseSqrt().array().max(1e-14);
  const double worst_z = ((mean - expect).cwiseAbs().array() / sigma).maxCoeff();

  return {closed < 1e-8 && purity_dev < 1e-8 && monotone && worst_z <= 3.0,
          "closed form " + fmt(closed) + ", unitary purity " + fmt(purity_dev) + ", monotone " +
              (monotone ? "yes" : "no") + ", sampled max " + fmt(worst_z) + " sigma"};
}

Verdict product_entropy() {
  const auto g = qc::make_grid(-8.0, 8.0, 64);
  const auto a = two_gaussians(g, 3.0, 1.0, 0.5);
  const auto b = two_gaussians(g, 2.5, 1.2, 0.6);
  const auto fa = qc::trial_pair(g, 0.0, 0.6).functions();
  const auto fb = qc::trial_pair(g, 0.2, 0.9).functions();
  const auto r = qc::s_prime_product_factorization(a, b, fa, fb);
  const double gap = std::abs(r.joint - r.sum);
  return {gap < 1e-8, "joint " + fmt(r.joint) + ", sum " + fmt(r.sum) + ", gap " + fmt(gap)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  auto c = qc::preset("free");
  c.grid.n = 256;
  c.dt = 0.01;
  c.t_end = 5.0;
  c.seed = 2718;
  const auto root = fs::temp_directory_path() / "qcollapse_acceptance";
  fs::remove_all(root);
  qc::run(c, root / "a");
  qc::run(c, root / "b");
  qc::run(qc::load_config(root / "a" / "meta.json"), root / "c");
  const auto a = slurp(root / "a" / "events.json");
  const bool same = a == slurp(root / "b" / "events.json") && a == slurp(root / "c" / "events.json");
  const auto n = qc::json::parse(a).size();
  fs::remove_all(root);
  return {same && n > 0, std::to_string(n) + " events, " + (same ? "identical" : "different") + " across 3 runs"};
}

}  // namespace

// With arguments, runs only the listed criterion numbers.
int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"unitarity and energy", unitarity_and_energy},
      {"free dispersion", dispersion},
      {"energy cost identity", energy_identity},
      {"Born rule", born_rule},
      {"survival law", survival},
      {"analytic pendulum", analytic_pendulum},
      {"entropy pendulum", entropy_pendulum},
      {"lambda scaling", lambda_scaling},
      {"stable packet", stable_packet},
      {"Zeno suppression", zeno},
      {"wall insertion", wall_insertion},
      {"master equation", master_equation},
      {"product entropy", product_entropy},
      {"determinism", determinism},
  };
  int failed = 0;
  std::vector<std::size_t> picked;
  for (int a = 1; a < argc; ++a) picked.push_back(std::stoul(argv[a]) - 1);
  if (picked.empty())
    for (std::size_t k = 0; k < criteria.size(); ++k) picked.push_back(k);
  for (const std::size_t k : picked) {
    if (k >= criteria.size()) {
      std::cerr << "no criterion " << k + 1 << "\n";
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Verdict r;
    try {
      r = criteria[k].second();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    failed += !r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << " " << k + 1 << " " << criteria[k].first << ": " << r.detail << " ["
              << fmt(seconds_since(t0)) << " s]" << std::endl;
  }
  std::cout << picked.size() - static_cast<std::size_t>(failed) << "/" << picked.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
