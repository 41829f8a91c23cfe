#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include "kinetic/collision.hpp"
#include "kinetic/error.hpp"
#include "kinetic/geometry.hpp"
#include "kinetic/rng.hpp"
#include "kinetic/solver.hpp"
#include "kinetic/velocity.hpp"

namespace kinetic {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Fits

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y = slope·x + intercept.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw Error(ErrorKind::fit_undefined, "least squares needs >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error(ErrorKind::fit_undefined, "least squares with constant abscissa");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.points = n;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (f.slope * x[i] + f.intercept);
    ss_res += r * r;
  }
  f.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Decay of ‖wf‖∞

struct DecayReport {
  double fitted_rate = 0.0;
  double prefactor = 0.0;
  double t_a = 0.0;
  double t_b = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
  double nu0 = 0.0;
  double theta1 = 0.0;
  std::optional<double> below_delta_time;
  // Envelope e^{-ν₀t/2} of the linear homogeneous problem.
  double envelope_rate = 0.0;
  double envelope_prefactor = 0.0;
  bool envelope_rate_met = false;

  json to_json() const {
    json j{{"fitted_rate", fitted_rate}, {"prefactor", prefactor},  {"fit_window", {t_a, t_b}},
           {"r_squared", r_squared},     {"points", points},        {"nu0", nu0},
           {"theta1_formula", theta1},   {"envelope_rate", envelope_rate},
           {"envelope_prefactor", envelope_prefactor}, {"envelope_rate_met", envelope_rate_met}};
    j["below_delta_time"] = below_delta_time ? json(*below_delta_time) : json(nullptr);
    return j;
  }
};

/// Least-squares rate of ln‖wf‖∞ over [t_a, t_b]. `rate_tolerance` is the
/// slack allowed when comparing against the linear envelope rate ν₀/2.
inline DecayReport fit_decay_rate(std::span<const DiagnosticsRow> rows, double t_a, double t_b, double nu0,
                                  std::optional<double> below_delta_time = std::nullopt,
                                  double rate_tolerance = 0.1) {
  std::vector<double> t, y;
  for (const auto& r : rows) {
    if (r.t < t_a - 1e-12 || r.t > t_b + 1e-12) continue;
    if (!(r.winf > 0.0)) throw Error(ErrorKind::fit_undefined, "non-positive norm inside the fit window");
    t.push_back(r.t);
    y.push_back(std::log(r.winf));
  }
  const auto fit = least_squares(t, y);
  DecayReport rep;
  rep.fitted_rate = -fit.slope;
  rep.prefactor = std::exp(fit.intercept);
  rep.t_a = t_a;
  rep.t_b = t_b;
  rep.r_squared = fit.r_squared;
  rep.points = fit.points;
  rep.nu0 = nu0;
  rep.theta1 = std::min(rep.fitted_rate, nu0 / 16.0);
  rep.below_delta_time = below_delta_time;
  rep.envelope_rate = 0.5 * nu0;
  for (std::size_t i = 0; i < t.size(); ++i)
    rep.envelope_prefactor = std::max(rep.envelope_prefactor, std::exp(y[i] + rep.envelope_rate * t[i]));
  rep.envelope_rate_met = rep.fitted_rate >= rep.envelope_rate - rate_tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// L² growth

struct L2GrowthReport {
  double fitted_growth_constant = 0.0;
  double Mbar = 0.0;
  bool violated = false;      // bound with twice the fitted constant fails somewhere
  bool solver_defect = false;  // zero initial L² but nonzero later

  json to_json() const {
    return {{"fitted_growth_constant", fitted_growth_constant},
            {"Mbar", Mbar},
            {"violated", violated},
            {"solver_defect", solver_defect}};
  }
};

/// Smallest c ≥ 0 with ‖f(t)‖ ≤ exp(c M̄ t)‖f₀‖, M̄ = sup_t ‖wf(t)‖∞. Norms at
/// or below `zero_level` count as zero.
inline L2GrowthReport check_l2_growth(std::span<const DiagnosticsRow> rows, double zero_level = 1e-12) {
  if (rows.empty()) throw Error(ErrorKind::incomplete_run, "no diagnostics rows");
  L2GrowthReport rep;
  for (const auto& r : rows) rep.Mbar = std::max(rep.Mbar, r.winf);
  const double t0 = rows.front().t;
  const double l0 = rows.front().l2;
  if (l0 <= zero_level) {
    for (const auto& r : rows)
      if (r.l2 > zero_level) rep.solver_defect = true;
    rep.violated = rep.solver_defect;
    return rep;
  }
  for (const auto& r : rows) {
    const double dt = r.t - t0;
    if (dt <= 0.0) continue;
    const double g = std::log(r.l2 / l0);
    if (g <= 0.0) continue;
    if (rep.Mbar <= 0.0) {
      rep.fitted_growth_constant = std::numeric_limits<double>::infinity();
      continue;
    }
    rep.fitted_growth_constant = std::max(rep.fitted_growth_constant, g / (rep.Mbar * dt));
  }
  const double c2 = 2.0 * rep.fitted_growth_constant;
  for (const auto& r : rows) {
    const double bound = l0 * std::exp(c2 * rep.Mbar * (r.t - t0));
    if (r.l2 > bound * (1.0 + 1e-12)) rep.violated = true;
  }
  if (!std::isfinite(rep.fitted_growth_constant)) rep.violated = true;
  return rep;
}

// ---------------------------------------------------------------------------
// Lower bound of R(f)/ν after t̃

struct RLowerBoundReport {
  double t_tilde = 0.0;
  double M0 = 0.0;
  double min_ratio_after = 0.0;
  double min_ratio_overall = 0.0;
  double threshold = 0.5;
  bool passed = false;
  double gauss_threshold = 0.0;
  bool gauss_below_by_t_tilde = false;
  std::vector<std::pair<double, double>> gauss_trace;

  json to_json() const {
    json trace = json::array();
    for (const auto& [t, g] : gauss_trace) trace.push_back({t, g});
    return {{"t_tilde", t_tilde},
            {"M0", M0},
            {"min_ratio_after_t_tilde", min_ratio_after},
            {"min_ratio_overall", min_ratio_overall},
            {"threshold", threshold},
            {"passed", passed},
            {"gauss_threshold", gauss_threshold},
            {"gauss_below_by_t_tilde", gauss_below_by_t_tilde},
            {"gauss_l1v_sup_trace", trace}};
  }
};

/// t̃ = (2/ν₀) ln(c·M₀) with M₀ = ‖wf₀‖∞ from the first row.
inline RLowerBoundReport check_R_lower_bound(std::span<const DiagnosticsRow> rows, double nu0, double c = 4.0,
                                             double threshold = 0.5, double gauss_threshold = 1.0) {
  if (rows.empty()) throw Error(ErrorKind::incomplete_run, "no diagnostics rows");
  RLowerBoundReport rep;
  rep.M0 = rows.front().winf;
  rep.t_tilde = rep.M0 * c > 1.0 ? 2.0 / nu0 * std::log(c * rep.M0) : 0.0;
  rep.threshold = threshold;
  rep.gauss_threshold = gauss_threshold;
  rep.min_ratio_after = std::numeric_limits<double>::infinity();
  rep.min_ratio_overall = std::numeric_limits<double>::infinity();
  bool any_after = false;
  for (const auto& r : rows) {
    rep.gauss_trace.emplace_back(r.t, r.gauss_l1v_sup);
    rep.min_ratio_overall = std::min(rep.min_ratio_overall, r.min_R_over_nu);
    if (r.t <= rep.t_tilde && r.gauss_l1v_sup < gauss_threshold) rep.gauss_below_by_t_tilde = true;
    if (r.t >= rep.t_tilde) {
      any_after = true;
      rep.min_ratio_after = std::min(rep.min_ratio_after, r.min_R_over_nu);
    }
  }
  if (!any_after) throw Error(ErrorKind::incomplete_run, "run ends before t_tilde");
  rep.passed = rep.min_ratio_after >= threshold;
  return rep;
}

// ---------------------------------------------------------------------------
// Kernel bounds

/// The (2.3)-type integral around v in spherical coordinates η = v + r e,
/// cos∠(e, v) = c, which removes the 1/|v-η| singularity:
///   2π ∫₀^∞ ∫₋₁¹ (r³ + r) e^{-r²/16} e^{-(2|v|c + r)²/16} e^{-ϖ(2r|v|c + r²)} (1+|η|)^{-α} dc dr.
inline double kernel_weighted_integral(double speed, double alpha, double varpi) {
  using boost::math::quadrature::gauss_kronrod;
  auto inner = [&](double r) {
    auto f = [&](double c) {
      const double eta2 = speed * speed + 2.0 * r * speed * c + r * r;
      const double q = 2.0 * speed * c + r;
      return std::exp(-r * r / 16.0 - q * q / 16.0 - varpi * (2.0 * r * speed * c + r * r)) *
             std::pow(1.0 + std::sqrt(std::max(0.0, eta2)), -alpha);
    };
    return (r * r * r + r) * gauss_kronrod<double, 31>::integrate(f, -1.0, 1.0, 12, 1e-12);
  };
  return 2.0 * std::numbers::pi * gauss_kronrod<double, 31>::integrate(inner, 0.0, 60.0, 12, 1e-12);
}

struct AlphaFit {
  double alpha = 0.0;
  double C_alpha = 0.0;
  double max_violation = 0.0;  // max over the dense sweep of value/bound - 1, floored at 0
  std::vector<std::pair<double, double>> values;  // (|v|, integral) on the fit nodes
  bool decays = false;                             // value at the last node below value at 0

  json to_json() const {
    json vals = json::array();
    for (const auto& [s, v] : values) vals.push_back({s, v});
    return {{"alpha", alpha}, {"C_alpha", C_alpha}, {"max_violation", max_violation}, {"decays", decays},
            {"values", vals}};
  }
};

/// Fits C_α = max over |v| ∈ fit_speeds of I(|v|)(1+|v|)^{1+α}, then checks
/// the bound on the dense sweep.
inline AlphaFit fit_alpha_bound(double alpha, double varpi, std::span<const double> fit_speeds,
                                std::span<const double> sweep_speeds) {
  AlphaFit out;
  out.alpha = alpha;
  for (double s : fit_speeds) {
    const double v = kernel_weighted_integral(s, alpha, varpi);
    out.values.emplace_back(s, v);
    out.C_alpha = std::max(out.C_alpha, v * std::pow(1.0 + s, 1.0 + alpha));
  }
  for (double s : sweep_speeds) {
    const double v = kernel_weighted_integral(s, alpha, varpi);
    const double bound = out.C_alpha * std::pow(1.0 + s, -1.0 - alpha);
    out.max_violation = std::max(out.max_violation, v / bound - 1.0);
  }
  out.decays = out.values.size() >= 2 && out.values.back().second < out.values.front().second;
  return out;
}

struct KernelBoundsReport {
  double sup_ratio_22 = 0.0;
  double sup_ratio_22_refined = 0.0;
  double refinement_drift = 0.0;
  std::size_t pairs = 0;
  std::vector<AlphaFit> alpha_fits;
  double violation_bound = 0.05;
  bool passed = false;

  json to_json() const {
    json fits = json::array();
    for (const auto& f : alpha_fits) fits.push_back(f.to_json());
    return {{"sup_ratio_22", sup_ratio_22},
            {"sup_ratio_22_refined", sup_ratio_22_refined},
            {"refinement_drift", refinement_drift},
            {"pairs", pairs},
            {"fitted_C_alpha_23", fits},
            {"violation_bound", violation_bound},
            {"passed", passed}};
  }
};

/// Normalised Gaussian bump of width σ centred at c, tabulated on the grid.
inline std::vector<double> gaussian_bump(const VelocityGrid& grid, const Vec3& c, double sigma) {
  const double norm = std::pow(2.0 * std::numbers::pi * sigma * sigma, -1.5);
  return grid.tabulate([&](const Vec3& v) { return norm * std::exp(-norm2(v - c) / (2.0 * sigma * sigma)); });
}

/// Symmetrised probe of the discrete K kernel: ½[(Kφ_η)(v) + (Kφ_v)(η)] with
/// unit-mass bumps φ of width σ standing in for point masses.
inline double probe_kernel(const CollisionOperator& op, std::size_t v_node, std::size_t eta_node, double sigma) {
  const auto& g = op.grid();
  const auto phi_eta = gaussian_bump(g, g.node(eta_node), sigma);
  const auto phi_v = gaussian_bump(g, g.node(v_node), sigma);
  return 0.5 * (op.K_gather_at(phi_eta, v_node) + op.K_gather_at(phi_v, eta_node));
}

/// (a) samples |k(v,η)| / envelope on pairs of lattice nodes shared by the
/// grid and its halving; (b) fits C_α of the weighted integral for α ∈ alphas.
inline KernelBoundsReport check_kernel_bounds(const KernelSpec& kernel, const WeightSpec& weight, double radius,
                                              double spacing, std::size_t sample_count, std::uint64_t seed,
                                              bool refine = true, std::span<const double> alphas = {},
                                              double probe_sigma = 0.75, double violation_bound = 0.05) {
  if (weight.varpi > 1.0 / 64.0) throw Error(ErrorKind::invalid_input, "kernel bounds need varpi <= 1/64");
  KernelBoundsReport rep;
  rep.violation_bound = violation_bound;
  const VelocityGrid coarse(radius, spacing);
  RandomStream rng(seed, 0);
  std::vector<std::pair<Vec3, Vec3>> pairs;
  const double h = spacing;
  auto snap = [&](double x) { return std::round(std::clamp(x, -4.0, 4.0) / h) * h; };
  while (pairs.size() < sample_count) {
    Vec3 v{snap(1.5 * rng.normal()), snap(1.5 * rng.normal()), snap(1.5 * rng.normal())};
    Vec3 e{snap(1.5 * rng.normal()), snap(1.5 * rng.normal()), snap(1.5 * rng.normal())};
    if (norm(v) > 4.0 || norm(e) > 4.0 || norm(v - e) < 1.5) continue;
    pairs.emplace_back(v, e);
  }
  rep.pairs = pairs.size();
  auto sup_on = [&](const VelocityGrid& g) {
    const CollisionOperator op(g, kernel);
    auto node_of = [&](const Vec3& p) {
      auto idx = [&](double x) { return static_cast<int>(std::lround((x + g.radius()) / g.spacing())); };
      return g.index(idx(p.x), idx(p.y), idx(p.z));
    };
    double sup = 0.0;
    for (const auto& [v, e] : pairs) {
      const double k = probe_kernel(op, node_of(v), node_of(e), probe_sigma);
      sup = std::max(sup, std::abs(k) / kernel_envelope(v, e));
    }
    return sup;
  };
  if (sample_count > 0) {
    rep.sup_ratio_22 = sup_on(coarse);
    if (refine) {
      rep.sup_ratio_22_refined = sup_on(VelocityGrid(radius, 0.5 * spacing));
      rep.refinement_drift = std::abs(rep.sup_ratio_22_refined - rep.sup_ratio_22) / rep.sup_ratio_22;
    }
  }
  std::vector<double> fit_speeds, sweep;
  for (int s = 0; s <= 6; ++s) fit_speeds.push_back(s);
  for (int s = 0; s <= 24; ++s) sweep.push_back(0.25 * s);
  const std::vector<double> default_alphas{0.0, 2.0};
  if (alphas.empty()) alphas = default_alphas;
  rep.passed = true;
  for (double a : alphas) {
    rep.alpha_fits.push_back(fit_alpha_bound(a, weight.varpi, fit_speeds, sweep));
    const auto& f = rep.alpha_fits.back();
    if (!(std::isfinite(f.C_alpha) && f.max_violation <= violation_bound)) rep.passed = false;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Pointwise gain bound

struct GainBoundReport {
  double sup_ratio = 0.0;
  double sup_ratio_refined = 0.0;
  double refinement_drift = 0.0;
  double drift_bound = 0.1;
  double sqrt_mu_sup_ratio = 0.0;
  std::size_t fields = 0;
  std::size_t nodes = 0;
  std::size_t skipped = 0;
  double argmax_speed = 0.0;
  bool passed = false;

  json to_json() const {
    return {{"sup_ratio", sup_ratio},
            {"sup_ratio_refined", sup_ratio_refined},
            {"refinement_drift", refinement_drift},
            {"drift_bound", drift_bound},
            {"sqrt_mu_sup_ratio", sqrt_mu_sup_ratio},
            {"fields", fields},
            {"nodes", nodes},
            {"skipped", skipped},
            {"argmax_speed", argmax_speed},
            {"passed", passed}};
  }
};

namespace detail {

struct GainBoundSetup {
  std::vector<Vec3> centres;
  double sigma = 1.0;
  std::vector<std::vector<double>> coefficients;
};

/// sup_v |h(v)| for h = Σ a_k ψ_k, refined off the lattice: gradient ascent of
/// s·h (s the sign of h there) from every lattice node where |h| is a local max.
/// The result is a property of the continuous field, not of the grid.
inline double continuous_sup(const GainBoundSetup& setup, std::span<const double> a, const VelocityGrid& grid,
                             std::span<const double> h_on_grid) {
  const double s2 = 2.0 * setup.sigma * setup.sigma;
  auto h_at = [&](const Vec3& v, Vec3* grad) {
    double val = 0.0;
    Vec3 g{};
    for (std::size_t k = 0; k < setup.centres.size(); ++k) {
      const double e = a[k] * std::exp(-norm2(v - setup.centres[k]) / s2);
      val += e;
      g = g + (setup.centres[k] - v) * (2.0 * e / s2);
    }
    if (grad) *grad = g;
    return val;
  };
  const int n = grid.per_axis();
  double best = 0.0;
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const double x = std::abs(h_on_grid[idx]);
    best = std::max(best, x);
    const auto ax = grid.axes(idx);
    bool local_max = true;
    for (int d = 0; d < 3 && local_max; ++d)
      for (int off : {-1, 1}) {
        auto nb = ax;
        nb[d] += off;
        if (nb[d] < 0 || nb[d] >= n) continue;
        if (std::abs(h_on_grid[grid.index(nb[0], nb[1], nb[2])]) > x) {
          local_max = false;
          break;
        }
      }
    if (!local_max || x == 0.0) continue;
    const double sign = h_on_grid[idx] > 0.0 ? 1.0 : -1.0;
    Vec3 v = grid.node(idx), g;
    double f = sign * h_at(v, &g);
    double step = 0.25 * s2;
    for (int it = 0; it < 100 && step > 1e-14; ++it) {
      const Vec3 trial = v + (g * sign) * step;
      Vec3 gt;
      const double ft = sign * h_at(trial, &gt);
      if (ft > f) {
        v = trial;
        f = ft;
        g = gt;
        step *= 1.5;
      } else {
        step *= 0.5;
      }
    }
    best = std::max(best, f);
  }
  return best;
}

/// Sup over fields and sampled nodes of |wΓ₊(f,f)(v)|(1+|v|) / (‖wf‖∞ ‖(1+|η|)²e^{ϖ|η|²}f‖_{L²}),
/// for f = h/w with h = Σ a_k ψ_k. Nodes are lattice points of the coarsest
/// grid (shared by every refinement) inside the ball of radius `node_radius`.
inline std::pair<double, double> gain_bound_sup(const KernelSpec& kernel, const WeightSpec& weight,
                                                const VelocityGrid& grid, double coarse_spacing,
                                                double node_radius, const GainBoundSetup& setup,
                                                std::size_t& skipped, std::size_t& node_count) {
  const std::size_t K = setup.centres.size();
  const double s2 = 2.0 * setup.sigma * setup.sigma;
  auto psi = [&](std::size_t k, const Vec3& v) { return std::exp(-norm2(v - setup.centres[k]) / s2); };
  auto basis_value = [&](std::size_t k, const Vec3& v) { return sqrt_maxwellian(v) * psi(k, v) / weight(v); };
  std::vector<std::vector<double>> G(K), H(K);
  for (std::size_t k = 0; k < K; ++k) {
    G[k] = grid.tabulate([&](const Vec3& v) { return basis_value(k, v); });
    H[k] = grid.tabulate([&](const Vec3& v) { return psi(k, v); });
  }
  const int stride = static_cast<int>(std::lround(coarse_spacing / grid.spacing()));
  std::vector<std::size_t> nodes;
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const auto ax = grid.axes(a);
    if (ax[0] % stride || ax[1] % stride || ax[2] % stride) continue;
    if (norm(grid.node(a)) <= node_radius + 1e-9) nodes.push_back(a);
  }
  node_count = nodes.size();
  // Gains are taken with the solver's equilibrium correction μν/Q₊ʰ(μ,μ),
  // evaluated by the same quadrature as the fields.
  std::vector<std::vector<double>> M, Mmu;
  const auto mu_values = grid.maxwellian_values();
  const std::vector<std::vector<double>> mu_basis{std::vector<double>(mu_values.begin(), mu_values.end())};
  if (kernel.kappa == 1.0) {
    const FactorizedGain fg(grid, kernel);
    M = fg.gram_exact_lines(G, basis_value, nodes);
    Mmu = fg.gram_exact_lines(mu_basis, [](std::size_t, const Vec3& v) { return maxwellian(v); }, nodes);
  } else {
    const CollisionOperator op(grid, kernel);
    for (std::size_t n : nodes) {
      M.push_back(op.gain_gram(G, n));
      Mmu.push_back(op.gain_gram(mu_basis, n));
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Vec3& v = grid.node(nodes[i]);
    const double c = maxwellian(v) * nu_of_v(grid, kernel, v) / Mmu[i][0];
    for (double& x : M[i]) x *= c;
  }
  // Gram of the weighted L² factor.
  const double dv3 = grid.cell_volume();
  std::vector<double> N(K * K, 0.0), lw(grid.size());
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const Vec3& v = grid.node(a);
    const double e = std::pow(1.0 + norm(v), 2.0) * std::exp(weight.varpi * norm2(v)) / weight(v);
    lw[a] = e * e;
  }
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t l = k; l < K; ++l) {
      const double s = dv3 * pairwise_sum(grid.size(), [&](std::size_t a) { return lw[a] * H[k][a] * H[l][a]; });
      N[k * K + l] = N[l * K + k] = s;
    }
  std::vector<double> scale(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Vec3& v = grid.node(nodes[i]);
    scale[i] = weight(v) / grid.sqrt_maxwellian()[nodes[i]] * (1.0 + norm(v));
  }
  double sup = 0.0, arg = 0.0;
  std::vector<double> h(grid.size());
  for (const auto& a : setup.coefficients) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t x = 0; x < grid.size(); ++x) h[x] += a[k] * H[k][x];
    const double hinf = continuous_sup(setup, a, grid, h);
    double l2 = 0.0;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = 0; l < K; ++l) l2 += a[k] * a[l] * N[k * K + l];
    l2 = std::sqrt(std::max(0.0, l2));
    if (hinf == 0.0 || l2 == 0.0) {
      ++skipped;
      continue;
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      double q = 0.0;
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t l = 0; l < K; ++l) q += a[k] * a[l] * M[i][k * K + l];
      const double r = scale[i] * std::abs(q) / (hinf * l2);
      if (r > sup) {
        sup = r;
        arg = norm(grid.node(nodes[i]));
      }
    }
  }
  return {sup, arg};
}

}  // namespace detail

/// Random fields f = h/w with h = Σ a_k ψ_k: ψ_k Gaussian bumps (width σ,
/// random centres) and a_k standard normal, both from the seed. The same
/// continuous fields are sampled on the grid and on its halving.
inline GainBoundReport check_gain_bound(const KernelSpec& kernel, const WeightSpec& weight, double radius,
                                        double spacing, std::size_t sample_count, std::uint64_t seed,
                                        std::size_t basis_size = 12, double drift_bound = 0.1,
                                        bool refine = true) {
  GainBoundReport rep;
  rep.drift_bound = drift_bound;
  detail::GainBoundSetup setup;
  RandomStream centres(seed, 0), coeffs(seed, 1);
  for (std::size_t k = 0; k < basis_size; ++k)
    setup.centres.push_back({1.2 * centres.normal(), 1.2 * centres.normal(), 1.2 * centres.normal()});
  setup.coefficients.assign(sample_count, std::vector<double>(basis_size));
  for (auto& a : setup.coefficients)
    for (double& x : a) x = coeffs.normal();
  rep.fields = sample_count;
  const VelocityGrid coarse(radius, spacing);
  std::size_t skipped = 0;
  auto [sup, arg] = detail::gain_bound_sup(kernel, weight, coarse, spacing, radius, setup, skipped, rep.nodes);
  rep.sup_ratio = sup;
  rep.argmax_speed = arg;
  rep.skipped = skipped;
  if (refine) {
    std::size_t skipped_f = 0, nodes_f = 0;
    const VelocityGrid fine(radius, 0.5 * spacing);
    rep.sup_ratio_refined =
        detail::gain_bound_sup(kernel, weight, fine, spacing, radius, setup, skipped_f, nodes_f).first;
    rep.refinement_drift = std::abs(rep.sup_ratio_refined - rep.sup_ratio) / rep.sup_ratio;
  }
  // f = √μ: LHS = w√μν from Q₊(μ,μ) = μν; RHS from lattice sums.
  {
    const auto& g = coarse;
    double winf = 0.0, l2 = 0.0;
    for (std::size_t a = 0; a < g.size(); ++a) {
      const Vec3& v = g.node(a);
      const double f = g.sqrt_maxwellian()[a];
      winf = std::max(winf, weight(v) * f);
      const double e = std::pow(1.0 + norm(v), 2.0) * std::exp(weight.varpi * norm2(v)) * f;
      l2 += e * e * g.cell_volume();
    }
    l2 = std::sqrt(l2);
    for (std::size_t a = 0; a < g.size(); ++a) {
      const Vec3& v = g.node(a);
      const double lhs = weight(v) * g.sqrt_maxwellian()[a] * nu_of_v(g, kernel, v);
      rep.sqrt_mu_sup_ratio = std::max(rep.sqrt_mu_sup_ratio, lhs * (1.0 + norm(v)) / (winf * l2));
    }
  }
  rep.passed = std::isfinite(rep.sup_ratio) && rep.sup_ratio > 0.0 &&
               (!refine || rep.refinement_drift <= drift_bound);
  return rep;
}

// ---------------------------------------------------------------------------
// Back-time cycles

struct CycleStart {
  double t = 0.0;
  Vec3 x;
  Vec3 v;
};

struct CycleStartReport {
  CycleStart start;
  std::vector<EscapeEstimate> profile;  // k = 1..k_max
  bool monotone = true;
  std::optional<std::size_t> first_k_below;  // smallest k with p_k < level
  std::optional<LinearFit> log_fit;          // over the resolvable range
  std::size_t resolvable = 0;
};

struct CycleBoundReport {
  double T0 = 0.0;
  std::size_t k_max = 0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double level = 0.01;
  double r2_bound = 0.9;
  std::vector<CycleStartReport> starts;
  std::vector<double> sup_profile;
  bool monotone = true;
  std::optional<std::size_t> first_k_below;
  double min_r_squared = 1.0;
  double max_slope = -std::numeric_limits<double>::infinity();
  bool passed = false;

  json to_json() const {
    json js = json::array();
    for (const auto& s : starts) {
      json p = json::array(), e = json::array();
      for (const auto& est : s.profile) {
        p.push_back(est.p);
        e.push_back(est.std_err);
      }
      json item{{"t", s.start.t},
                {"x", {s.start.x.x, s.start.x.y, s.start.x.z}},
                {"v", {s.start.v.x, s.start.v.y, s.start.v.z}},
                {"p_k", p},
                {"std_err", e},
                {"monotone", s.monotone},
                {"resolvable_points", s.resolvable}};
      item["first_k_below"] = s.first_k_below ? json(*s.first_k_below) : json(nullptr);
      if (s.log_fit)
        item["log_linear"] = {{"slope", s.log_fit->slope}, {"r_squared", s.log_fit->r_squared}};
      js.push_back(item);
    }
    json j{{"T0", T0},         {"k_max", k_max},           {"samples", samples},
           {"seed", seed},     {"level", level},           {"r2_bound", r2_bound},
           {"starts", js},     {"sup_p_k", sup_profile},   {"monotone", monotone},
           {"min_r_squared", min_r_squared}, {"max_slope", max_slope}, {"passed", passed}};
    j["first_k_below"] = first_k_below ? json(*first_k_below) : json(nullptr);
    return j;
  }
};

/// Starts on a fixed grid in the unit ball at time T0: positions on the
/// x₁ axis, velocities of several speeds and directions.
inline std::vector<CycleStart> default_cycle_starts(double T0) {
  std::vector<CycleStart> s;
  for (double x : {0.0, 0.5, 0.9})
    for (const Vec3& v : {Vec3{1.0, 0.0, 0.0}, Vec3{0.0, 1.0, 0.0}, Vec3{0.25, 0.0, 0.0}, Vec3{-2.0, 0.0, 0.0}})
      s.push_back({T0, {x, 0.0, 0.0}, v});
  return s;
}

inline CycleBoundReport check_cycle_bound(const Domain& domain, double T0, std::size_t k_max,
                                          std::size_t n_samples, std::uint64_t seed,
                                          std::vector<CycleStart> starts = {}, unsigned threads = 1,
                                          double level = 0.01, double r2_bound = 0.9) {
  if (!(T0 > 0.0)) throw Error(ErrorKind::invalid_input, "cycle check needs T0 > 0");
  if (starts.empty()) starts = default_cycle_starts(T0);
  CycleBoundReport rep;
  rep.T0 = T0;
  rep.k_max = k_max;
  rep.samples = n_samples;
  rep.seed = seed;
  rep.level = level;
  rep.r2_bound = r2_bound;
  rep.sup_profile.assign(k_max, 0.0);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    CycleStartReport s;
    s.start = starts[i];
    s.profile = escape_profile(domain, starts[i].t, starts[i].x, starts[i].v, k_max, n_samples, seed + i, threads);
    std::vector<double> ks, logs;
    for (std::size_t k = 0; k < k_max; ++k) {
      const auto& e = s.profile[k];
      rep.sup_profile[k] = std::max(rep.sup_profile[k], e.p);
      if (k + 1 < k_max && s.profile[k + 1].p > e.p + 3.0 * s.profile[k + 1].std_err) s.monotone = false;
      if (!s.first_k_below && e.p < level) s.first_k_below = k + 1;
      // Resolvable: a genuine Monte-Carlo estimate (0 < p < 1) well above its error.
      if (e.std_err > 0.0 && e.p > 10.0 * e.std_err) {
        ks.push_back(static_cast<double>(k + 1));
        logs.push_back(std::log(e.p));
      }
    }
    s.resolvable = ks.size();
    if (ks.size() >= 3) {
      s.log_fit = least_squares(ks, logs);
      rep.min_r_squared = std::min(rep.min_r_squared, s.log_fit->r_squared);
      rep.max_slope = std::max(rep.max_slope, s.log_fit->slope);
    }
    rep.monotone = rep.monotone && s.monotone;
    rep.starts.push_back(std::move(s));
  }
  for (std::size_t k = 0; k < k_max; ++k)
    if (rep.sup_profile[k] < level) {
      rep.first_k_below = k + 1;
      break;
    }
  const bool slopes_ok = rep.max_slope < 0.0 && rep.min_r_squared >= r2_bound;
  rep.passed = rep.monotone && rep.first_k_below.has_value() && slopes_ok;
  return rep;
}

// ---------------------------------------------------------------------------
// Null space of L = ν - K and symmetry of K

struct NullspaceReport {
  std::vector<std::pair<std::string, double>> residuals;
  double random_residual = 0.0;
  double tolerance = 1e-3;
  bool passed = false;

  json to_json() const {
    json r = json::object();
    for (const auto& [name, v] : residuals) r[name] = v;
    return {{"residuals", r}, {"random_residual", random_residual}, {"tolerance", tolerance}, {"passed", passed}};
  }
};

/// ‖(ν - K)g‖/‖g‖ for the collision invariants and one random function.
inline NullspaceReport check_equilibrium_nullspace(const CollisionOperator& op, std::uint64_t seed,
                                                   double tolerance = 1e-3) {
  const auto& g = op.grid();
  const auto smu = g.sqrt_maxwellian();
  std::vector<std::vector<double>> fs;
  const std::vector<std::string> names{"sqrt_mu", "v1_sqrt_mu", "v2_sqrt_mu", "v3_sqrt_mu", "v2norm_sqrt_mu"};
  fs.push_back(std::vector<double>(smu.begin(), smu.end()));
  for (int c = 0; c < 3; ++c) fs.push_back(g.tabulate([&](const Vec3& v) { return v[c] * sqrt_maxwellian(v); }));
  fs.push_back(g.tabulate([&](const Vec3& v) { return norm2(v) * sqrt_maxwellian(v); }));
  RandomStream rng(seed, 0);
  fs.push_back(g.tabulate([&](const Vec3& v) { return rng.normal() * std::exp(-norm2(v) / 8.0); }));
  const auto Kf = op.K_apply_batch(fs);
  NullspaceReport rep;
  rep.tolerance = tolerance;
  rep.passed = true;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t a = 0; a < g.size(); ++a) {
      const double r = op.nu()[a] * fs[i][a] - Kf[i][a];
      num += r * r;
      den += fs[i][a] * fs[i][a];
    }
    const double res = std::sqrt(num / den);
    if (i < names.size()) {
      rep.residuals.emplace_back(names[i], res);
      if (!(res <= tolerance)) rep.passed = false;
    } else {
      rep.random_residual = res;
    }
  }
  return rep;
}

/// max over random pairs of |⟨Kf,g⟩ - ⟨f,Kg⟩| / (‖f‖‖g‖) using the dense K.
inline double K_symmetry_defect(const CollisionOperator& op, std::size_t pairs, std::uint64_t seed) {
  const auto& g = op.grid();
  const std::size_t nv = g.size();
  const auto K = op.K_matrix();
  RandomStream rng(seed, 0);
  double worst = 0.0;
  std::vector<double> f(nv), h(nv), Kf(nv), Kh(nv);
  for (std::size_t p = 0; p < pairs; ++p) {
    for (std::size_t a = 0; a < nv; ++a) {
      f[a] = rng.normal();
      h[a] = rng.normal();
    }
    for (std::size_t i = 0; i < nv; ++i) {
      double s1 = 0.0, s2 = 0.0;
      const double* row = K.data() + i * nv;
      for (std::size_t j = 0; j < nv; ++j) {
        s1 += row[j] * f[j];
        s2 += row[j] * h[j];
      }
      Kf[i] = s1;
      Kh[i] = s2;
    }
    double a1 = 0.0, a2 = 0.0, nf = 0.0, nh = 0.0;
    for (std::size_t a = 0; a < nv; ++a) {
      a1 += Kf[a] * h[a];
      a2 += f[a] * Kh[a];
      nf += f[a] * f[a];
      nh += h[a] * h[a];
    }
    worst = std::max(worst, std::abs(a1 - a2) / std::sqrt(nf * nh));
  }
  return worst;
}

}  // namespace kinetic
