#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "kinetic/error.hpp"
#include "kinetic/kernel.hpp"
#include "kinetic/summation.hpp"
#include "kinetic/vec3.hpp"

namespace kinetic {

inline constexpr double kMaxwellianPrefactor = 0.063493635934240969;  // (2π)^{-3/2}

inline double maxwellian(const Vec3& v) { return kMaxwellianPrefactor * std::exp(-0.5 * norm2(v)); }

/// Velocity weight w(v) = (1 + ρ²|v|²)^β e^{ϖ|v|²}.
struct WeightSpec {
  double rho = 2.0;
  double beta = 2.5;
  double varpi = 1.0 / 64.0;

  double operator()(const Vec3& v) const {
    const double v2 = norm2(v);
    return std::pow(1.0 + rho * rho * v2, beta) * std::exp(varpi * v2);
  }

  /// With `theorem_mode` the ranges are those under which the large-amplitude
  /// theory holds; otherwise only the weaker small-amplitude ranges apply.
  std::vector<std::string> violations(bool theorem_mode = true) const {
    std::vector<std::string> out;
    if (theorem_mode) {
      if (!(rho > 1.0)) out.push_back("weight.rho must be > 1");
      if (!(beta >= 2.5)) out.push_back("weight.beta must be >= 5/2");
      if (!(varpi >= 0.0 && varpi <= 1.0 / 64.0)) out.push_back("weight.varpi must lie in [0, 1/64]");
    } else {
      if (!(rho > 0.0)) out.push_back("weight.rho must be > 0");
      if (!(beta > 1.5)) out.push_back("weight.beta must be > 3/2");
      if (!(varpi >= 0.0 && varpi < 0.25)) out.push_back("weight.varpi must lie in [0, 1/4)");
    }
    return out;
  }

  friend bool operator==(const WeightSpec&, const WeightSpec&) = default;
};

inline double weight_w(const WeightSpec& spec, const Vec3& v) { return spec(v); }

/// Cubic velocity lattice {v : |v|_∞ ≤ R} with spacing Δv, node k on each axis at
/// -R + kΔv. Immutable after construction.
class VelocityGrid {
 public:
  struct Stencil {
    std::array<std::size_t, 8> index{};
    std::array<double, 8> weight{};
    int count = 0;
  };

  VelocityGrid(double radius, double spacing) : radius_(radius), spacing_(spacing) {
    if (!(radius > 0.0) || !(spacing > 0.0)) {
      throw Error(ErrorKind::invalid_input, "velocity grid needs positive radius and spacing");
    }
    const double cells = 2.0 * radius / spacing;
    const double rounded = std::round(cells);
    if (std::abs(cells - rounded) > 1e-9 * cells || rounded < 2.0) {
      throw Error(ErrorKind::invalid_input, "2*radius must be a positive multiple of spacing");
    }
    n_ = static_cast<int>(rounded) + 1;
    volume_ = spacing * spacing * spacing;
    nodes_.reserve(size());
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) nodes_.push_back({coordinate(i), coordinate(j), coordinate(k)});
    mu_.resize(size());
    sqrt_mu_.resize(size());
    for (std::size_t a = 0; a < size(); ++a) {
      mu_[a] = maxwellian(nodes_[a]);
      sqrt_mu_[a] = std::sqrt(mu_[a]);
    }
    mu_mass_ = pairwise_sum(size(), [&](std::size_t a) { return mu_[a] * volume_; });
  }

  double radius() const noexcept { return radius_; }
  double spacing() const noexcept { return spacing_; }
  int per_axis() const noexcept { return n_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(n_) * n_ * n_; }
  double cell_volume() const noexcept { return volume_; }

  double coordinate(int i) const noexcept {
    // Symmetric construction keeps v ↦ -v exact on the lattice.
    const int half = n_ - 1;
    return spacing_ * 0.5 * static_cast<double>(2 * i - half);
  }
  std::size_t index(int i, int j, int k) const noexcept {
    return (static_cast<std::size_t>(i) * n_ + j) * n_ + k;
  }
  std::array<int, 3> axes(std::size_t a) const noexcept {
    const int k = static_cast<int>(a % n_);
    const int j = static_cast<int>((a / n_) % n_);
    const int i = static_cast<int>(a / (static_cast<std::size_t>(n_) * n_));
    return {i, j, k};
  }
  /// Index of the node with component `axis` negated.
  std::size_t reflect(std::size_t a, int axis) const noexcept {
    auto ijk = axes(a);
    ijk[axis] = n_ - 1 - ijk[axis];
    return index(ijk[0], ijk[1], ijk[2]);
  }

  const Vec3& node(std::size_t a) const noexcept { return nodes_[a]; }
  std::span<const Vec3> nodes() const noexcept { return nodes_; }
  std::span<const double> maxwellian_values() const noexcept { return mu_; }
  std::span<const double> sqrt_maxwellian() const noexcept { return sqrt_mu_; }

  double maxwellian_mass() const noexcept { return mu_mass_; }
  double mass_defect() const noexcept { return std::abs(mu_mass_ - 1.0); }

  /// Trilinear stencil at p; empty outside the lattice box (values there are 0).
  Stencil stencil(const Vec3& p) const noexcept {
    Stencil s;
    int base[3];
    double frac[3];
    for (int d = 0; d < 3; ++d) {
      const double t = (p[d] + radius_) / spacing_;
      if (!(t >= 0.0 && t <= n_ - 1)) return s;
      int i0 = static_cast<int>(t);
      if (i0 > n_ - 2) i0 = n_ - 2;
      base[d] = i0;
      frac[d] = t - i0;
    }
    int c = 0;
    for (int dx = 0; dx < 2; ++dx)
      for (int dy = 0; dy < 2; ++dy)
        for (int dz = 0; dz < 2; ++dz) {
          s.index[c] = index(base[0] + dx, base[1] + dy, base[2] + dz);
          s.weight[c] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                        (dz ? frac[2] : 1.0 - frac[2]);
          ++c;
        }
    s.count = 8;
    return s;
  }

  double interpolate(std::span<const double> values, const Vec3& p) const noexcept {
    const double tx = (p.x + radius_) / spacing_;
    const double ty = (p.y + radius_) / spacing_;
    const double tz = (p.z + radius_) / spacing_;
    const double top = n_ - 1;
    if (!(tx >= 0.0 && tx <= top && ty >= 0.0 && ty <= top && tz >= 0.0 && tz <= top)) return 0.0;
    int i = static_cast<int>(tx), j = static_cast<int>(ty), k = static_cast<int>(tz);
    if (i > n_ - 2) i = n_ - 2;
    if (j > n_ - 2) j = n_ - 2;
    if (k > n_ - 2) k = n_ - 2;
    const double fx = tx - i, fy = ty - j, fz = tz - k;
    const std::size_t sj = static_cast<std::size_t>(n_);
    const std::size_t si = sj * sj;
    const double* p0 = values.data() + index(i, j, k);
    const double c00 = p0[0] + fz * (p0[1] - p0[0]);
    const double c01 = p0[sj] + fz * (p0[sj + 1] - p0[sj]);
    const double c10 = p0[si] + fz * (p0[si + 1] - p0[si]);
    const double c11 = p0[si + sj] + fz * (p0[si + sj + 1] - p0[si + sj]);
    const double c0 = c00 + fy * (c01 - c00);
    const double c1 = c10 + fy * (c11 - c10);
    return c0 + fx * (c1 - c0);
  }

  template <class Fn>
  std::vector<double> tabulate(Fn&& fn) const {
    std::vector<double> out(size());
    for (std::size_t a = 0; a < size(); ++a) out[a] = fn(nodes_[a]);
    return out;
  }

 private:
  double radius_;
  double spacing_;
  int n_ = 0;
  double volume_ = 0.0;
  double mu_mass_ = 0.0;
  std::vector<Vec3> nodes_;
  std::vector<double> mu_;
  std::vector<double> sqrt_mu_;
};

/// ∫_{v·n>0} F(v) (v·n) dv on the lattice.
inline double half_space_flux(const VelocityGrid& grid, std::span<const double> F, const Vec3& n) {
  if (F.size() != grid.size()) throw Error(ErrorKind::invalid_input, "velocity slice size mismatch");
  if (std::abs(norm(n) - 1.0) > 1e-12) throw Error(ErrorKind::invalid_input, "normal must be a unit vector");
  const double dv3 = grid.cell_volume();
  return pairwise_sum(grid.size(), [&](std::size_t a) {
    const double vn = dot(grid.node(a), n);
    return vn > 0.0 ? F[a] * vn * dv3 : 0.0;
  });
}

/// Quadrature defects of a lattice: μ-mass and the diffuse-wall normalisation
/// √(2π)·∫_{v₁>0} μ v₁ dv. The flux defect is O(Δv²) because v₁μ has a kink at
/// the wall plane.
struct GridTolerance {
  double mass_defect = 0.0;
  double flux_defect = 0.0;
  double value() const { return std::max(mass_defect, flux_defect); }
};

inline GridTolerance grid_tolerance(const VelocityGrid& grid) {
  const double flux = half_space_flux(grid, grid.maxwellian_values(), {1.0, 0.0, 0.0});
  return {grid.mass_defect(), std::abs(std::sqrt(2.0 * std::numbers::pi) * flux - 1.0)};
}

/// ν(v) = ∫∫ B(v-u, ω) μ(u) dω du evaluated at an arbitrary velocity by lattice
/// quadrature in u; the ω-integral is exact (2π b0).
inline double nu_of_v(const VelocityGrid& grid, const KernelSpec& kernel, const Vec3& v) {
  if (grid.size() == 0) throw Error(ErrorKind::invalid_input, "empty velocity grid");
  const auto mu = grid.maxwellian_values();
  const double c = kernel.angular_integral() * grid.cell_volume();
  return pairwise_sum(grid.size(), [&](std::size_t a) {
    return c * kernel.speed_factor(norm(v - grid.node(a))) * mu[a];
  });
}

struct CollisionFrequency {
  std::vector<double> values;  // ν at each lattice node
  double nu0 = 0.0;            // min over nodes
};

inline CollisionFrequency nu_table(const VelocityGrid& grid, const KernelSpec& kernel) {
  CollisionFrequency out;
  out.values.resize(grid.size());
  for (std::size_t a = 0; a < grid.size(); ++a) out.values[a] = nu_of_v(grid, kernel, grid.node(a));
  out.nu0 = *std::min_element(out.values.begin(), out.values.end());
  return out;
}

struct NormRecord {
  double l2 = 0.0;             // ‖f‖_{L²(Ω×R³)}
  double winf = 0.0;           // ‖w f‖_{L∞}
  double gauss_l1v_sup = 0.0;  // sup_x ∫ e^{-|v|²/8} |w f| dv
  double mass = 0.0;
  double min_value = 0.0;
  double min_density = 0.0;  // min over cells of ∫F dv
};

namespace detail {

inline NormRecord accumulate_norms(const VelocityGrid& grid, const WeightSpec& weight,
                                   std::span<const double> values, std::span<const double> point_volume,
                                   bool values_are_distribution) {
  const std::size_t nv = grid.size();
  const std::size_t np = point_volume.size();
  if (values.size() != np * nv) throw Error(ErrorKind::invalid_input, "field size does not match grid");
  for (double x : values)
    if (!std::isfinite(x)) throw Error(ErrorKind::data_corrupt, "non-finite value in field");
  const auto mu = grid.maxwellian_values();
  const auto smu = grid.sqrt_maxwellian();
  const double dv3 = grid.cell_volume();
  std::vector<double> w(nv), gauss(nv);
  for (std::size_t a = 0; a < nv; ++a) {
    w[a] = weight(grid.node(a));
    gauss[a] = std::exp(-norm2(grid.node(a)) / 8.0);
  }
  auto pert = [&](std::size_t p, std::size_t a) {
    const double x = values[p * nv + a];
    return values_are_distribution ? (x - mu[a]) / smu[a] : x;
  };

  NormRecord r;
  r.min_value = std::numeric_limits<double>::infinity();
  for (double x : values) r.min_value = std::min(r.min_value, x);
  const double l2sq = pairwise_sum(np, [&](std::size_t p) {
    if (point_volume[p] <= 0.0) return 0.0;
    return point_volume[p] * dv3 * pairwise_sum(nv, [&](std::size_t a) {
             const double f = pert(p, a);
             return f * f;
           });
  });
  r.l2 = std::sqrt(l2sq);
  r.mass = pairwise_sum(np, [&](std::size_t p) {
    if (point_volume[p] <= 0.0) return 0.0;
    return point_volume[p] * dv3 * pairwise_sum(nv, [&](std::size_t a) {
             const double x = values[p * nv + a];
             return values_are_distribution ? x : smu[a] * x;
           });
  });
  r.min_density = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < np; ++p) {
    if (point_volume[p] <= 0.0) continue;
    r.min_density = std::min(r.min_density, dv3 * pairwise_sum(nv, [&](std::size_t a) {
                                              const double x = values[p * nv + a];
                                              return values_are_distribution ? x : mu[a] + smu[a] * x;
                                            }));
    for (std::size_t a = 0; a < nv; ++a) r.winf = std::max(r.winf, w[a] * std::abs(pert(p, a)));
    const double g = dv3 * pairwise_sum(nv, [&](std::size_t a) { return gauss[a] * w[a] * std::abs(pert(p, a)); });
    r.gauss_l1v_sup = std::max(r.gauss_l1v_sup, g);
  }
  return r;
}

}  // namespace detail

/// Norms of a perturbation f sampled on points × lattice; `point_volume` gives
/// the spatial quadrature weight of each point (0 excludes a point).
inline NormRecord perturbation_norms(const VelocityGrid& grid, const WeightSpec& weight, std::span<const double> f,
                                     std::span<const double> point_volume) {
  return detail::accumulate_norms(grid, weight, f, point_volume, false);
}

/// Same norms for f = (F - μ)/√μ given the distribution F; mass and min_value
/// refer to F itself.
inline NormRecord distribution_norms(const VelocityGrid& grid, const WeightSpec& weight, std::span<const double> F,
                                     std::span<const double> point_volume) {
  return detail::accumulate_norms(grid, weight, F, point_volume, true);
}

}  // namespace kinetic
