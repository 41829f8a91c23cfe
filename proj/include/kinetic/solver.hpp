#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kinetic/collision.hpp"
#include "kinetic/error.hpp"
#include "kinetic/kernel.hpp"
#include "kinetic/parallel.hpp"
#include "kinetic/summation.hpp"
#include "kinetic/velocity.hpp"

namespace kinetic {

/// Slab (-a, a) in x₁ split into N uniform cells. Point 0 and point N+1 are the
/// walls; points 1..N are cell centres. Walls carry full velocity slices but
/// zero volume.
class SlabMesh {
 public:
  SlabMesh(double half_width, int cells) : a_(half_width), n_(cells) {
    if (!(half_width > 0.0) || cells < 2) throw Error(ErrorKind::invalid_input, "slab mesh needs a > 0 and >= 2 cells");
  }

  double half_width() const noexcept { return a_; }
  int cells() const noexcept { return n_; }
  std::size_t points() const noexcept { return static_cast<std::size_t>(n_) + 2; }
  double dx() const noexcept { return 2.0 * a_ / n_; }
  bool is_wall(std::size_t p) const noexcept { return p == 0 || p == points() - 1; }

  double position(std::size_t p) const noexcept {
    if (p == 0) return -a_;
    if (p == points() - 1) return a_;
    return -a_ + (static_cast<double>(p) - 0.5) * dx();
  }

  std::vector<double> volumes() const {
    std::vector<double> v(points(), dx());
    v.front() = v.back() = 0.0;
    return v;
  }

  struct Segment {
    std::size_t lo = 0;
    std::size_t hi = 0;
    double t = 0.0;  // weight of hi
  };

  /// Linear interpolation segment on the point grid for y in [-a, a].
  Segment locate(double y) const noexcept {
    const double h = dx();
    const std::size_t last = points() - 1;
    if (y <= -a_ + 0.5 * h) return {0, 1, std::clamp((y + a_) / (0.5 * h), 0.0, 1.0)};
    if (y >= a_ - 0.5 * h) return {last - 1, last, std::clamp((y - (a_ - 0.5 * h)) / (0.5 * h), 0.0, 1.0)};
    const double s = (y + a_) / h + 0.5;
    auto i = static_cast<std::size_t>(s);
    i = std::clamp<std::size_t>(i, 1, static_cast<std::size_t>(n_) - 1);
    return {i, i + 1, s - static_cast<double>(i)};
  }

  bool operator==(const SlabMesh&) const = default;

 private:
  double a_;
  int n_;
};

/// F(x, v) on mesh points × velocity lattice, row-major by point.
struct DistributionField {
  SlabMesh mesh;
  std::size_t velocity_size = 0;
  std::vector<double> values;
  double time = 0.0;

  DistributionField(SlabMesh m, std::size_t nv)
      : mesh(m), velocity_size(nv), values(m.points() * nv, 0.0) {}

  std::span<double> at(std::size_t p) { return {values.data() + p * velocity_size, velocity_size}; }
  std::span<const double> at(std::size_t p) const { return {values.data() + p * velocity_size, velocity_size}; }
};

enum class CollisionMode { nonlinear, linear };

struct SolverConfig {
  double dt = 0.0;  // 0: derived from t̂₀ and the transit cap
  double picard_tol = 1e-10;
  int picard_max_iters = 30;
  double C_hat_rho = 10.0;
  double delta_target = 0.05;
  double M0_cap = 1e6;
  double T_end = 1.0;
  bool conservation_projection = true;
  double transit_fraction = 0.5;
  int max_halvings = 6;
  CollisionMode mode = CollisionMode::nonlinear;
  bool equilibrium_correction = true;
  bool collision_mass_fix = true;
  bool use_symmetry = true;
  double gain_line_step = 1.0;  // line-integral step of the κ = 1 gain, in units of Δv
  unsigned threads = 1;

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (dt < 0.0) out.push_back("solver.dt must be >= 0");
    if (!(picard_tol > 0.0)) out.push_back("solver.picard_tol must be > 0");
    if (picard_max_iters < 1) out.push_back("solver.picard_max_iters must be >= 1");
    if (!(C_hat_rho > 0.0)) out.push_back("solver.C_hat_rho must be > 0");
    if (!(delta_target > 0.0)) out.push_back("solver.delta_target must be > 0");
    if (!(M0_cap > 0.0)) out.push_back("solver.M0_cap must be > 0");
    if (!(T_end > 0.0)) out.push_back("solver.T_end must be > 0");
    if (!(transit_fraction > 0.0 && transit_fraction < 1.0)) out.push_back("solver.transit_fraction must be in (0, 1)");
    if (max_halvings < 0) out.push_back("solver.max_halvings must be >= 0");
    if (!(gain_line_step > 0.0 && gain_line_step <= 2.0)) out.push_back("solver.gain_line_step must be in (0, 2]");
    return out;
  }

  double t_hat0(double winf) const { return 1.0 / (C_hat_rho * (1.0 + winf)); }

  bool operator==(const SolverConfig&) const = default;
};

/// Velocity reflections v₂ → -v₂ and v₃ → -v₃. Fields invariant under this
/// group need collision terms only at one node per orbit.
class VelocitySymmetry {
 public:
  explicit VelocitySymmetry(const VelocityGrid& grid) : orbit_(grid.size()) {
    const int n = grid.per_axis();
    const int half = (n - 1) / 2;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const auto ax = grid.axes(a);
      if (ax[1] >= n - 1 - half && ax[2] >= n - 1 - half) reps_.push_back(a);
    }
    std::vector<std::size_t> slot(grid.size(), 0);
    for (std::size_t r = 0; r < reps_.size(); ++r) slot[reps_[r]] = r;
    sizes_.assign(reps_.size(), 0.0);
    for (std::size_t a = 0; a < grid.size(); ++a) {
      auto ax = grid.axes(a);
      ax[1] = std::max(ax[1], n - 1 - ax[1]);
      ax[2] = std::max(ax[2], n - 1 - ax[2]);
      orbit_[a] = slot[grid.index(ax[0], ax[1], ax[2])];
      sizes_[orbit_[a]] += 1.0;
    }
  }

  std::span<const std::size_t> representatives() const noexcept { return reps_; }
  std::size_t orbit(std::size_t node) const noexcept { return orbit_[node]; }
  double orbit_size(std::size_t r) const noexcept { return sizes_[r]; }

  static bool invariant(const VelocityGrid& grid, std::span<const double> F) {
    for (std::size_t a = 0; a < grid.size(); ++a)
      if (F[a] != F[grid.reflect(a, 1)] || F[a] != F[grid.reflect(a, 2)]) return false;
    return true;
  }

 private:
  std::vector<std::size_t> reps_;
  std::vector<std::size_t> orbit_;
  std::vector<double> sizes_;
};

/// Frequency R and gain source S on every mesh point.
struct CollisionState {
  std::vector<double> R;
  std::vector<double> S;
};

/// Evaluates R(F) = Σ_u A(v-u)F(u)Δv³ and the gain source per spatial point.
///
/// The source is c(v)·Q₊(F, F)(v) with c = μν / Q₊(μ, μ) on the lattice (when
/// equilibrium_correction is on), so μ is an exact discrete fixed point. With
/// collision_mass_fix the source is further scaled per point so that
/// Σ_v (S - R F) Δv³ = 0. Both factors are nonnegative.
class CollisionEngine {
 public:
  CollisionEngine(const VelocityGrid& grid, const KernelSpec& kernel, const SolverConfig& config)
      : op_(std::make_shared<CollisionOperator>(grid, kernel)),
        symmetry_(grid),
        mode_(config.mode),
        mass_fix_(config.collision_mass_fix) {
    if (kernel.kappa == 1.0)
      factorized_ = std::make_shared<FactorizedGain>(grid, kernel, icosahedral32(), config.gain_line_step);
    const auto reps = symmetry_.representatives();
    const std::size_t nr = reps.size();
    fold_.assign(nr * nr, 0.0);
    const double dv3 = grid.cell_volume();
    for (std::size_t i = 0; i < nr; ++i) {
      const auto vi = grid.axes(reps[i]);
      for (std::size_t u = 0; u < grid.size(); ++u) {
        const auto ui = grid.axes(u);
        fold_[i * nr + symmetry_.orbit(u)] += op_->speed_table(ui[0] - vi[0], ui[1] - vi[1], ui[2] - vi[2]) * dv3;
      }
    }
    correction_.assign(grid.size(), 1.0);
    if (config.equilibrium_correction && mode_ == CollisionMode::nonlinear) {
      const auto mu = grid.maxwellian_values();
      std::vector<double> q(reps.size());
      gain_at(mu, reps, q);
      for (std::size_t a = 0; a < grid.size(); ++a) {
        const std::size_t r = symmetry_.orbit(a);
        correction_[a] = mu[a] * op_->nu()[a] / q[r];
      }
    }
  }

  const VelocityGrid& grid() const noexcept { return op_->grid(); }
  const CollisionOperator& op() const noexcept { return *op_; }
  const VelocitySymmetry& symmetry() const noexcept { return symmetry_; }
  std::span<const double> nu() const noexcept { return op_->nu(); }
  double nu0() const noexcept { return op_->nu0(); }
  CollisionMode mode() const noexcept { return mode_; }
  std::span<const double> correction() const noexcept { return correction_; }

  /// R and S at one point; `symmetric` selects the orbit-reduced path.
  void evaluate_point(std::span<const double> F, bool symmetric, std::span<double> R, std::span<double> S) const {
    const auto& g = grid();
    const std::size_t nv = g.size();
    if (mode_ == CollisionMode::linear) {
      const auto mu = g.maxwellian_values();
      for (std::size_t a = 0; a < nv; ++a) {
        R[a] = op_->nu()[a];
        S[a] = op_->nu()[a] * mu[a];
      }
      return;
    }
    if (symmetric) {
      const auto reps = symmetry_.representatives();
      const std::size_t nr = reps.size();
      std::vector<double> Fr(nr), Rr(nr), Qr(nr);
      for (std::size_t r = 0; r < nr; ++r) Fr[r] = F[reps[r]];
      for (std::size_t i = 0; i < nr; ++i) {
        const double* row = fold_.data() + i * nr;
        double acc = 0.0;
        for (std::size_t j = 0; j < nr; ++j) acc += row[j] * Fr[j];
        Rr[i] = acc;
      }
      gain_at(F, reps, Qr);
      for (std::size_t a = 0; a < nv; ++a) {
        const std::size_t r = symmetry_.orbit(a);
        R[a] = Rr[r];
        S[a] = correction_[a] * Qr[r];
      }
    } else {
      const auto r = op_->frequency(F);
      std::copy(r.begin(), r.end(), R.begin());
      std::vector<std::size_t> all(nv);
      for (std::size_t a = 0; a < nv; ++a) all[a] = a;
      std::vector<double> q(nv);
      gain_at(F, all, q);
      for (std::size_t a = 0; a < nv; ++a) S[a] = correction_[a] * q[a];
    }
    if (mass_fix_) {
      const double loss = pairwise_sum(nv, [&](std::size_t a) { return R[a] * F[a]; });
      const double gain = pairwise_sum(nv, [&](std::size_t a) { return S[a]; });
      if (gain > 0.0) {
        const double lambda = loss / gain;
        for (std::size_t a = 0; a < nv; ++a) S[a] *= lambda;
      }
    }
  }

  CollisionState evaluate(const DistributionField& field, bool symmetric, unsigned threads) const {
    const std::size_t nv = grid().size();
    CollisionState st{std::vector<double>(field.values.size()), std::vector<double>(field.values.size())};
    parallel_for(field.mesh.points(), threads, [&](std::size_t p) {
      evaluate_point(field.at(p), symmetric, {st.R.data() + p * nv, nv}, {st.S.data() + p * nv, nv});
    });
    return st;
  }

 private:
  void gain_at(std::span<const double> F, std::span<const std::size_t> nodes, std::span<double> out) const {
    if (factorized_) {
      factorized_->gain(F, F, nodes, out);
    } else {
      op_->gain(F, F, nodes, out);
    }
  }

  std::shared_ptr<CollisionOperator> op_;
  std::shared_ptr<FactorizedGain> factorized_;
  VelocitySymmetry symmetry_;
  CollisionMode mode_;
  bool mass_fix_;
  std::vector<double> fold_;
  std::vector<double> correction_;
};

/// Discrete diffuse-reflection constant 1 / Σ_{v·n>0} μ(v)(v·n)Δv³, the
/// lattice counterpart of c_μ = √(2π). It makes F = μ reflect to exactly μ.
inline double discrete_wall_constant(const VelocityGrid& grid) {
  return 1.0 / half_space_flux(grid, grid.maxwellian_values(), {1.0, 0.0, 0.0});
}

/// Outward normal sign of a wall point: -1 at x = -a, +1 at x = a.
inline double wall_normal(const SlabMesh& mesh, std::size_t p) { return p == 0 ? -1.0 : 1.0; }

/// Overwrites the incoming half (v·n < 0) of a wall slice with
/// c_h μ(v) Σ_{v·n>0} F(v)(v·n)Δv³ and returns the outgoing flux.
inline double apply_diffuse_bc(const VelocityGrid& grid, double c_wall, double normal_sign, std::span<double> F) {
  const double flux = half_space_flux(grid, F, {normal_sign, 0.0, 0.0});
  const auto mu = grid.maxwellian_values();
  for (std::size_t a = 0; a < grid.size(); ++a)
    if (grid.node(a).x * normal_sign < 0.0) F[a] = c_wall * mu[a] * flux;
  return flux;
}

struct TransportStats {
  double min_factor = 1.0;  // range of the integrating factor e^{-∫R}
  double max_factor = 0.0;
};

/// One exponential-integrator step of ∂ₜF + v₁∂ₓF = -R F + S along backward
/// characteristics:
///
///   F(t+dt, x, v) = e^{-R̄τ} F(t+dt-τ, x - τv) + (1 - e^{-R̄τ})/R̄ · S̄,
///
/// with τ = dt, or the wall hit time when the ray reaches a wall first. R̄ and
/// S̄ are taken at the spatial midpoint of the ray and at the midpoint time,
/// interpolating between the collision states at t (`now`) and t+dt (`next`).
/// Foot values use linear interpolation on the point grid; wall values use the
/// diffuse reflection of the freshly computed outgoing slices, interpolated
/// in time.
inline DistributionField transport_duhamel_step(const VelocityGrid& grid, const DistributionField& Fn,
                                                const CollisionState& now, const CollisionState& next, double dt,
                                                double c_wall, unsigned threads = 1,
                                                TransportStats* stats = nullptr) {
  if (!(dt > 0.0)) throw Error(ErrorKind::invalid_input, "transport step needs dt > 0");
  const SlabMesh& mesh = Fn.mesh;
  const double a = mesh.half_width();
  const std::size_t nv = grid.size();
  const std::size_t np = mesh.points();
  const int n = grid.per_axis();
  const std::size_t plane = static_cast<std::size_t>(n) * n;
  if (dt * grid.radius() >= 2.0 * a)
    throw Error(ErrorKind::invalid_input, "transport step crosses the slab; reduce dt");
  for (double r : next.R)
    if (r < 0.0) throw Error(ErrorKind::contract_violation, "negative collision frequency");

  DistributionField out(mesh, nv);
  out.time = Fn.time + dt;
  std::vector<double> fmin(np, 1.0), fmax(np, 0.0);

  // Wall incoming values at t (already in Fn) and at t+dt (filled below).
  auto integrate = [&](std::size_t p, bool walls_ready) {
    const double X = mesh.position(p);
    const bool wall = mesh.is_wall(p);
    auto dst = out.at(p);
    for (int i = 0; i < n; ++i) {
      const double c = grid.coordinate(i);
      if (wall && c * wall_normal(mesh, p) < 0.0) continue;  // incoming: set by the wall
      double tau = dt;
      int hit = 0;  // -1 left wall, +1 right wall
      const double y = X - c * dt;
      if (y < -a) {
        tau = (X + a) / c;
        hit = -1;
      } else if (y > a) {
        tau = (X - a) / c;
        hit = 1;
      }
      if (hit != 0 && !walls_ready) throw Error(ErrorKind::contract_violation, "wall ray from a wall point");
      const auto foot = mesh.locate(X - c * tau);
      const auto mid = mesh.locate(X - 0.5 * c * tau);
      const double theta = 1.0 - 0.5 * tau / dt;  // midpoint time as a fraction of the step
      const std::size_t wp = hit < 0 ? 0 : np - 1;
      const double lam = tau / dt;                // weight of the wall value at t
      for (std::size_t k = 0; k < plane; ++k) {
        const std::size_t v = static_cast<std::size_t>(i) * plane + k;
        const auto pick = [&](const std::vector<double>& arr) {
          return (1.0 - mid.t) * arr[mid.lo * nv + v] + mid.t * arr[mid.hi * nv + v];
        };
        const double Rbar = (1.0 - theta) * pick(now.R) + theta * pick(next.R);
        const double Sbar = (1.0 - theta) * pick(now.S) + theta * pick(next.S);
        double Ffoot;
        if (hit == 0) {
          Ffoot = (1.0 - foot.t) * Fn.values[foot.lo * nv + v] + foot.t * Fn.values[foot.hi * nv + v];
        } else {
          Ffoot = lam * Fn.values[wp * nv + v] + (1.0 - lam) * out.values[wp * nv + v];
        }
        const double x = Rbar * tau;
        const double decay = std::exp(-x);
        const double growth = x > 1e-8 ? -std::expm1(-x) / Rbar : tau * (1.0 - 0.5 * x);
        dst[v] = decay * Ffoot + growth * Sbar;
        fmin[p] = std::min(fmin[p], decay);
        fmax[p] = std::max(fmax[p], decay);
      }
    }
  };

  integrate(0, false);
  integrate(np - 1, false);
  apply_diffuse_bc(grid, c_wall, -1.0, out.at(0));
  apply_diffuse_bc(grid, c_wall, 1.0, out.at(np - 1));
  parallel_for(np - 2, threads, [&](std::size_t q) { integrate(q + 1, true); });

  if (stats) {
    stats->min_factor = *std::min_element(fmin.begin(), fmin.end());
    stats->max_factor = *std::max_element(fmax.begin(), fmax.end());
  }
  return out;
}

/// Rescales F by target/current mass. Mass is Σ_cells Δx Σ_v F Δv³.
inline double field_mass(const VelocityGrid& grid, const DistributionField& F) {
  const auto vol = F.mesh.volumes();
  const double dv3 = grid.cell_volume();
  return pairwise_sum(F.mesh.points(), [&](std::size_t p) {
    if (vol[p] == 0.0) return 0.0;
    const auto s = F.at(p);
    return vol[p] * dv3 * pairwise_sum(s);
  });
}

inline void conservation_projection(const VelocityGrid& grid, DistributionField& F, double target_mass) {
  const double m = field_mass(grid, F);
  if (!(m > 0.0)) throw Error(ErrorKind::degenerate_state, "projection of a field with zero mass");
  const double s = target_mass / m;
  for (double& x : F.values) x *= s;
}

struct StepReport {
  double t = 0.0;
  double dt = 0.0;
  int iteration_count = 0;
  double final_contraction_ratio = 0.0;
  double max_contraction_ratio = 0.0;
  double max_ratio_of_ratios = 0.0;
  std::vector<double> differences;
  double mass_drift = 0.0;  // relative, before any projection
  double min_F = 0.0;
  std::size_t clipped = 0;
  double min_R_over_nu = 0.0;
  NormRecord norms;
  double min_integrating_factor = 1.0;
  double max_integrating_factor = 0.0;
};

struct PicardResult {
  DistributionField field;
  CollisionState state;
  StepReport report;
};

/// Weighted sup distance sup w|F - G|/√μ over all points.
inline double weighted_sup_distance(std::span<const double> scale, const DistributionField& F,
                                    const DistributionField& G) {
  const std::size_t nv = scale.size();
  double d = 0.0;
  for (std::size_t i = 0; i < F.values.size(); ++i) d = std::max(d, scale[i % nv] * std::abs(F.values[i] - G.values[i]));
  return d;
}

/// Picard iteration for one step: F^{m+1} solves the linear transport problem
/// with frequency R(F^m) and source S(F^m) at the new time level, starting
/// from F^0 = F_n. Stops when the weighted sup difference of successive
/// iterates falls to picard_tol.
inline PicardResult picard_iterate(const CollisionEngine& engine, const WeightSpec& weight,
                                   const DistributionField& Fn, const CollisionState& state_n, double dt,
                                   const SolverConfig& cfg, bool symmetric, double c_wall) {
  const auto& grid = engine.grid();
  const std::size_t nv = grid.size();
  std::vector<double> scale(nv);
  for (std::size_t a = 0; a < nv; ++a) scale[a] = weight(grid.node(a)) / grid.sqrt_maxwellian()[a];

  DistributionField Fm = Fn;
  CollisionState state_m = state_n;
  StepReport rep;
  rep.dt = dt;
  rep.t = Fn.time + dt;
  TransportStats ts;
  bool converged = false;
  for (int m = 1; m <= cfg.picard_max_iters; ++m) {
    DistributionField Fnew = transport_duhamel_step(grid, Fn, state_n, state_m, dt, c_wall, cfg.threads, &ts);
    for (double& x : Fnew.values) {
      if (x < -1e-12) throw Error(ErrorKind::positivity_violation, "negative distribution value in Picard iterate");
      if (x < 0.0) {
        x = 0.0;
        ++rep.clipped;
      }
    }
    const double diff = weighted_sup_distance(scale, Fnew, Fm);
    if (!std::isfinite(diff)) throw Error(ErrorKind::step_rejected, "Picard iterate is not finite");
    rep.differences.push_back(diff);
    rep.iteration_count = m;
    Fm = std::move(Fnew);
    state_m = engine.evaluate(Fm, symmetric, cfg.threads);
    if (diff <= cfg.picard_tol) {
      converged = true;
      break;
    }
  }
  if (!converged) throw Error(ErrorKind::step_rejected, "Picard iteration did not reach tolerance");

  const auto& d = rep.differences;
  double prev_ratio = -1.0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (d[i - 1] == 0.0) continue;
    const double r = d[i] / d[i - 1];
    rep.max_contraction_ratio = std::max(rep.max_contraction_ratio, r);
    rep.final_contraction_ratio = r;
    if (prev_ratio > 0.0) rep.max_ratio_of_ratios = std::max(rep.max_ratio_of_ratios, r / prev_ratio);
    prev_ratio = r;
  }
  rep.min_integrating_factor = ts.min_factor;
  rep.max_integrating_factor = ts.max_factor;
  return {std::move(Fm), std::move(state_m), std::move(rep)};
}

/// Per-step summary that feeds the diagnostics CSV.
struct DiagnosticsRow {
  double t = 0.0;
  double mass = 0.0;
  double l2 = 0.0;
  double winf = 0.0;
  double gauss_l1v_sup = 0.0;
  double min_F = 0.0;
  double min_R_over_nu = 0.0;
  double contraction_ratio = 0.0;
};

struct MarchSummary {
  std::vector<DiagnosticsRow> rows;
  std::vector<StepReport> steps;
  std::optional<double> below_delta_time;
  double sup_winf = 0.0;
  double initial_mass = 0.0;
  std::size_t clipped = 0;
  std::size_t local_solves = 0;
  std::size_t rejected_steps = 0;
  double dt_cap = 0.0;
};

/// Time integrator for a slab scenario: owns the engine and the current state.
class SlabSolver {
 public:
  SlabSolver(VelocityGrid grid, KernelSpec kernel, WeightSpec weight, SolverConfig cfg)
      : engine_(grid, kernel, cfg), weight_(weight), cfg_(cfg), c_wall_(discrete_wall_constant(grid)) {
    if (auto v = cfg.violations(); !v.empty()) throw Error(ErrorKind::invalid_input, v.front());
  }

  const CollisionEngine& engine() const noexcept { return engine_; }
  const VelocityGrid& grid() const noexcept { return engine_.grid(); }
  const SolverConfig& config() const noexcept { return cfg_; }
  double wall_constant() const noexcept { return c_wall_; }

  /// Largest step keeping every backward ray within one wall interaction.
  double dt_cap(const SlabMesh& mesh) const {
    double cap = cfg_.transit_fraction * 2.0 * mesh.half_width() / grid().radius();
    if (cfg_.dt > 0.0) cap = std::min(cap, cfg_.dt);
    return cap;
  }

  /// Makes the incoming wall halves consistent with diffuse reflection.
  void enforce_walls(DistributionField& F) const {
    apply_diffuse_bc(grid(), c_wall_, -1.0, F.at(0));
    apply_diffuse_bc(grid(), c_wall_, 1.0, F.at(F.mesh.points() - 1));
  }

  NormRecord norms(const DistributionField& F) const {
    return distribution_norms(grid(), weight_, F.values, F.mesh.volumes());
  }

  double min_R_over_nu(const CollisionState& st) const {
    const auto nu = engine_.nu();
    const std::size_t nv = nu.size();
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < st.R.size(); ++i) m = std::min(m, st.R[i] / nu[i % nv]);
    return m;
  }

  bool symmetric(const DistributionField& F) const {
    if (!cfg_.use_symmetry) return false;
    for (std::size_t p = 0; p < F.mesh.points(); ++p)
      if (!VelocitySymmetry::invariant(grid(), F.at(p))) return false;
    return true;
  }

  /// Advances by dt, splitting the step in halves when Picard fails.
  std::vector<PicardResult> advance(const DistributionField& F, const CollisionState& st, double dt, bool sym,
                                    int depth, std::size_t& rejected) const {
    try {
      std::vector<PicardResult> out;
      out.push_back(picard_iterate(engine_, weight_, F, st, dt, cfg_, sym, c_wall_));
      return out;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::step_rejected || depth >= cfg_.max_halvings) throw;
      ++rejected;
      auto first = advance(F, st, 0.5 * dt, sym, depth + 1, rejected);
      auto second = advance(first.back().field, first.back().state, 0.5 * dt, sym, depth + 1, rejected);
      for (auto& r : second) first.push_back(std::move(r));
      return first;
    }
  }

  using RowSink = std::function<void(const DiagnosticsRow&, const StepReport*)>;

  /// Local solve over t̂₀ = 1/(C_hat_rho(1 + ‖wf‖∞)) from the current field,
  /// truncated at T_end, in equal substeps no longer than the transit cap.
  void solve_local(DistributionField& F, CollisionState& st, bool sym, double target_mass, MarchSummary& sum,
                   const RowSink& sink) const {
    const double M = norms(F).winf;
    const double horizon = std::min(cfg_.t_hat0(M), cfg_.T_end - F.time);
    const double cap = dt_cap(F.mesh);
    const auto n_sub = static_cast<std::size_t>(std::ceil(horizon / cap - 1e-12));
    const double dt = horizon / static_cast<double>(std::max<std::size_t>(n_sub, 1));
    const double t_end = F.time + horizon;
    ++sum.local_solves;
    for (std::size_t s = 0; s < std::max<std::size_t>(n_sub, 1); ++s) {
      const double h = (s + 1 == n_sub) ? t_end - F.time : dt;
      const double mass_before = field_mass(grid(), F);
      auto results = advance(F, st, h, sym, 0, sum.rejected_steps);
      for (auto& r : results) {
        StepReport rep = std::move(r.report);
        DistributionField next = std::move(r.field);
        const double m_after = field_mass(grid(), next);
        rep.mass_drift = (m_after - mass_before) / mass_before;
        if (cfg_.conservation_projection) {
          conservation_projection(grid(), next, target_mass);
          if (engine_.mode() == CollisionMode::nonlinear) {
            // R is linear and S quadratic in F (the mass-fix factor is scale-free).
            const double s = target_mass / m_after;
            for (double& x : r.state.R) x *= s;
            for (double& x : r.state.S) x *= s * s;
          }
        }
        F = std::move(next);
        st = std::move(r.state);
        rep.norms = norms(F);
        rep.min_F = rep.norms.min_value;
        rep.min_R_over_nu = min_R_over_nu(st);
        sum.clipped += rep.clipped;
        DiagnosticsRow row{F.time,         rep.norms.mass,    rep.norms.l2,        rep.norms.winf,
                           rep.norms.gauss_l1v_sup, rep.min_F, rep.min_R_over_nu, rep.max_contraction_ratio};
        record(row, sum);
        sum.steps.push_back(rep);
        if (sink) sink(row, &sum.steps.back());
      }
    }
  }

  /// Chains local solves to T_end, recording one diagnostics row per step.
  MarchSummary march_global(DistributionField F, const RowSink& sink = {}) const {
    MarchSummary sum;
    sum.dt_cap = dt_cap(F.mesh);
    enforce_walls(F);
    const bool sym = symmetric(F);
    CollisionState st = engine_.evaluate(F, sym, cfg_.threads);
    sum.initial_mass = field_mass(grid(), F);
    const auto n0 = norms(F);
    DiagnosticsRow row0{F.time, n0.mass, n0.l2, n0.winf, n0.gauss_l1v_sup, n0.min_value, min_R_over_nu(st), 0.0};
    record(row0, sum);
    if (sink) sink(row0, nullptr);
    const double target = sum.initial_mass;
    try {
      while (F.time < cfg_.T_end * (1.0 - 1e-12)) solve_local(F, st, sym, target, sum, sink);
    } catch (...) {
      final_field_ = std::move(F);  // last accepted state, for post-mortem dumps
      throw;
    }
    final_field_ = std::move(F);
    return sum;
  }

  /// Field at the end of the most recent march (the last accepted one if it aborted).
  const std::optional<DistributionField>& final_field() const noexcept { return final_field_; }

 private:
  void record(const DiagnosticsRow& row, MarchSummary& sum) const {
    sum.rows.push_back(row);
    sum.sup_winf = std::max(sum.sup_winf, row.winf);
    if (!sum.below_delta_time && row.winf < cfg_.delta_target) sum.below_delta_time = row.t;
  }

  CollisionEngine engine_;
  WeightSpec weight_;
  SolverConfig cfg_;
  double c_wall_;
  mutable std::optional<DistributionField> final_field_;
};

// ---------------------------------------------------------------------------
// Initial data.

enum class Recipe { equilibrium, small_perturbation, large_amplitude, vacuum_hole };

struct RecipeParams {
  double amplitude = 0.1;    // target ‖wf₀‖∞ (small-perturbation) or density swing (large-amplitude)
  double hole_radius = 0.3;  // vacuum-hole half width
  double fill_fraction = 0.0;  // F₀ = fill·λμ inside the hole (0: true vacuum)

  bool operator==(const RecipeParams&) const = default;
};

inline std::optional<Recipe> recipe_from_string(const std::string& s) {
  if (s == "equilibrium") return Recipe::equilibrium;
  if (s == "small-perturbation") return Recipe::small_perturbation;
  if (s == "large-amplitude") return Recipe::large_amplitude;
  if (s == "vacuum-hole") return Recipe::vacuum_hole;
  return std::nullopt;
}

inline std::string to_string(Recipe r) {
  switch (r) {
    case Recipe::equilibrium: return "equilibrium";
    case Recipe::small_perturbation: return "small-perturbation";
    case Recipe::large_amplitude: return "large-amplitude";
    case Recipe::vacuum_hole: return "vacuum-hole";
  }
  return "unknown";
}

/// Builds F₀ on the mesh. Profiles are functions of x₁ times μ, so every
/// recipe is invariant under the velocity reflections.
///  - equilibrium: F₀ = μ.
///  - small-perturbation: f₀ = ε√μ cos(πx₁/a) with the discrete cell mean
///    removed, ε chosen so ‖wf₀‖∞ equals the amplitude.
///  - large-amplitude: F₀ = (1 + A cos(πx₁/a))μ, A < 1.
///  - vacuum-hole: F₀ = λμ for |x₁| ≥ r and fill·λμ inside, λ restoring the
///    equilibrium mass.
inline DistributionField make_initial_field(const VelocityGrid& grid, const WeightSpec& weight, const SlabMesh& mesh,
                                            Recipe recipe, const RecipeParams& prm) {
  DistributionField F(mesh, grid.size());
  const auto mu = grid.maxwellian_values();
  const std::size_t np = mesh.points();
  std::vector<double> profile(np, 1.0);
  const double pi = std::numbers::pi;
  const double a = mesh.half_width();
  switch (recipe) {
    case Recipe::equilibrium: break;
    case Recipe::small_perturbation: {
      double ws = 0.0;
      for (std::size_t k = 0; k < grid.size(); ++k) ws = std::max(ws, weight(grid.node(k)) * grid.sqrt_maxwellian()[k]);
      std::vector<double> c(np);
      double mean = 0.0;
      for (std::size_t p = 1; p + 1 < np; ++p) {
        c[p] = std::cos(pi * mesh.position(p) / a);
        mean += c[p];
      }
      mean /= mesh.cells();
      double cmax = 0.0;
      for (std::size_t p = 0; p < np; ++p) {
        if (!mesh.is_wall(p)) c[p] -= mean;
        else c[p] = std::cos(pi * mesh.position(p) / a) - mean;
        cmax = std::max(cmax, std::abs(c[p]));
      }
      const double eps = prm.amplitude / (ws * cmax);
      // F = μ + √μ f = μ(1 + ε c(x)).
      for (std::size_t p = 0; p < np; ++p) profile[p] = 1.0 + eps * c[p];
      break;
    }
    case Recipe::large_amplitude:
      if (!(prm.amplitude >= 0.0 && prm.amplitude < 1.0))
        throw Error(ErrorKind::invalid_input, "large-amplitude swing must be in [0, 1)");
      for (std::size_t p = 0; p < np; ++p) profile[p] = 1.0 + prm.amplitude * std::cos(pi * mesh.position(p) / a);
      break;
    case Recipe::vacuum_hole: {
      if (!(prm.hole_radius > 0.0 && prm.hole_radius < a))
        throw Error(ErrorKind::invalid_input, "vacuum hole radius must be in (0, a)");
      double inside = 0.0;
      for (std::size_t p = 0; p < np; ++p) {
        const bool in = std::abs(mesh.position(p)) < prm.hole_radius;
        profile[p] = in ? prm.fill_fraction : 1.0;
        if (!mesh.is_wall(p)) inside += profile[p];
      }
      const double lambda = mesh.cells() / inside;
      for (double& x : profile) x *= lambda;
      break;
    }
  }
  for (std::size_t p = 0; p < np; ++p) {
    auto s = F.at(p);
    for (std::size_t k = 0; k < grid.size(); ++k) s[k] = profile[p] * mu[k];
  }
  return F;
}

}  // namespace kinetic
