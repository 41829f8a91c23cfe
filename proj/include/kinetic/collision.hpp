#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "kinetic/error.hpp"
#include "kinetic/kernel.hpp"
#include "kinetic/sphere_quadrature.hpp"
#include "kinetic/summation.hpp"
#include "kinetic/vec3.hpp"
#include "kinetic/velocity.hpp"

namespace kinetic {

/// Grad-type envelope {|v-η| + |v-η|^{-1}} e^{-|v-η|²/8} e^{-||v|²-|η|²|²/(8|v-η|²)}.
inline double kernel_envelope(const Vec3& v, const Vec3& eta) {
  const double d2 = norm2(v - eta);
  if (d2 == 0.0) throw Error(ErrorKind::singular_input, "kernel envelope is singular at v = eta");
  const double d = std::sqrt(d2);
  const double e = norm2(v) - norm2(eta);
  return (d + 1.0 / d) * std::exp(-d2 / 8.0) * std::exp(-e * e / (8.0 * d2));
}

inline double sqrt_maxwellian(const Vec3& v) { return 0.25197943553838073 * std::exp(-0.25 * norm2(v)); }

/// Discrete collision operator on a velocity lattice.
///
/// Pairs (v, u) run over lattice nodes and ω over a symmetric sphere rule.
/// Post-collision velocities v' = v + sω, u' = u - sω with s = (u - v)·ω are
/// generally off-lattice; their values come from trilinear interpolation
/// (zero outside the lattice box). The angular weights are renormalised per
/// relative-velocity direction so that Σ_ω B(z, ω) = 2π b0 |z|^κ exactly, which
/// makes the loss part and ν independent of the sphere rule.
class CollisionOperator {
 public:
  struct GainLoss {
    double gain = 0.0;
    double loss = 0.0;
  };
  struct GammaPair {
    std::vector<double> plus;
    std::vector<double> minus;
  };

  CollisionOperator(VelocityGrid grid, KernelSpec kernel, const SphereQuadrature& sphere = icosahedral32())
      : grid_(std::move(grid)), kernel_(kernel), half_(sphere.half()) {
    if (auto v = kernel.violations(); !v.empty()) throw Error(ErrorKind::invalid_input, v.front());
    const int n = grid_.per_axis();
    span_ = 2 * n - 1;
    const double h = grid_.spacing();
    const std::size_t count = static_cast<std::size_t>(span_) * span_ * span_;
    speed_.assign(count, 0.0);
    gain_scale_.assign(count, 0.0);
    for (int di = -(n - 1); di <= n - 1; ++di)
      for (int dj = -(n - 1); dj <= n - 1; ++dj)
        for (int dk = -(n - 1); dk <= n - 1; ++dk) {
          const Vec3 z{di * h, dj * h, dk * h};
          const double len = norm(z);
          const std::size_t o = offset(di, dj, dk);
          speed_[o] = kernel_.angular_integral() * kernel_.speed_factor(len);
          if (len == 0.0) continue;
          double angular = 0.0;
          for (std::size_t d = 0; d < sphere.size(); ++d)
            angular += sphere.weights[d] * std::abs(dot(z, sphere.directions[d])) / len;
          gain_scale_[o] = kernel_.b0 * kernel_.speed_factor(len) / len * kernel_.angular_integral() /
                           (kernel_.b0 * angular);
        }
    nu_ = frequency(grid_.maxwellian_values());
    nu0_ = *std::min_element(nu_.begin(), nu_.end());
  }

  const VelocityGrid& grid() const noexcept { return grid_; }
  const KernelSpec& kernel() const noexcept { return kernel_; }
  const SphereQuadrature& half_sphere() const noexcept { return half_; }

  /// ν on the lattice (the loss rate against μ) and its minimum.
  const std::vector<double>& nu() const noexcept { return nu_; }
  double nu0() const noexcept { return nu0_; }

  /// Σ_u 2π b0 |v-u|^κ F(u) Δv³ at one node.
  double frequency_at(std::span<const double> F, std::size_t node) const {
    check_size(F);
    const auto vi = grid_.axes(node);
    const double dv3 = grid_.cell_volume();
    return dv3 * pairwise_sum(grid_.size(), [&](std::size_t a) {
             const auto ui = grid_.axes(a);
             return speed_[offset(ui[0] - vi[0], ui[1] - vi[1], ui[2] - vi[2])] * F[a];
           });
  }

  std::vector<double> frequency(std::span<const double> F) const {
    std::vector<double> out(grid_.size());
    for (std::size_t a = 0; a < out.size(); ++a) out[a] = frequency_at(F, a);
    return out;
  }

  /// Relative-speed factor 2π b0 |z|^κ for a lattice offset (in node units).
  double speed_table(int di, int dj, int dk) const { return speed_[offset(di, dj, dk)]; }

  /// Q₊(F1, F2)(v) = Σ_u Σ_ω B F1(u') F2(v') Δv³ w_ω at one node.
  double gain_at(std::span<const double> F1, std::span<const double> F2, std::size_t node) const {
    check_size(F1);
    check_size(F2);
    const Vec3 v = grid_.node(node);
    const auto vi = grid_.axes(node);
    const double dv3 = grid_.cell_volume();
    const std::size_t nd = half_.size();
    const double total = pairwise_sum(grid_.size(), [&](std::size_t a) {
      const auto ui = grid_.axes(a);
      if (a == node) return kernel_.kappa == 0.0 ? kernel_.angular_integral() * F1[a] * F2[a] : 0.0;
      const Vec3 z = grid_.node(a) - v;
      const double scale = gain_scale_[offset(ui[0] - vi[0], ui[1] - vi[1], ui[2] - vi[2])];
      double acc = 0.0;
      for (std::size_t d = 0; d < nd; ++d) {
        const Vec3& w = half_.directions[d];
        const double s = dot(z, w);
        if (s == 0.0) continue;
        const double g1 = grid_.interpolate(F1, grid_.node(a) - w * s);
        if (g1 == 0.0) continue;
        acc += half_.weights[d] * std::abs(s) * g1 * grid_.interpolate(F2, v + w * s);
      }
      return scale * acc;
    });
    return dv3 * total;
  }

  void gain(std::span<const double> F1, std::span<const double> F2, std::span<const std::size_t> nodes,
            std::span<double> out) const {
    for (std::size_t i = 0; i < nodes.size(); ++i) out[i] = gain_at(F1, F2, nodes[i]);
  }

  std::vector<double> gain(std::span<const double> F1, std::span<const double> F2) const {
    std::vector<double> out(grid_.size());
    for (std::size_t a = 0; a < out.size(); ++a) out[a] = gain_at(F1, F2, a);
    return out;
  }

  /// Q₋(F1, F2)(v) = F2(v) Σ_u Σ_ω B F1(u) Δv³.
  std::vector<double> loss(std::span<const double> F1, std::span<const double> F2) const {
    check_size(F2);
    auto out = frequency(F1);
    for (std::size_t a = 0; a < out.size(); ++a) out[a] *= F2[a];
    return out;
  }

  GainLoss collide(std::span<const double> F1, std::span<const double> F2, std::size_t node) const {
    check_finite(F1);
    check_finite(F2);
    return {gain_at(F1, F2, node), F2[node] * frequency_at(F1, node)};
  }

  /// Γ±(f, f) = μ^{-1/2} Q±(√μ f, √μ f).
  GammaPair gamma(std::span<const double> f) const {
    check_finite(f);
    const auto smu = grid_.sqrt_maxwellian();
    std::vector<double> g(grid_.size());
    for (std::size_t a = 0; a < g.size(); ++a) g[a] = smu[a] * f[a];
    GammaPair out;
    out.plus = gain(g, g);
    out.minus = frequency(g);
    for (std::size_t a = 0; a < g.size(); ++a) {
      out.plus[a] /= smu[a];
      out.minus[a] *= f[a];
    }
    return out;
  }

  /// R(f) = Σ_u Σ_ω B [μ(u) + √μ(u) f(u)] Δv³.
  std::vector<double> R_of_f(std::span<const double> f) const {
    check_finite(f);
    const auto mu = grid_.maxwellian_values();
    const auto smu = grid_.sqrt_maxwellian();
    std::vector<double> F(grid_.size());
    for (std::size_t a = 0; a < F.size(); ++a) F[a] = mu[a] + smu[a] * f[a];
    return frequency(F);
  }

  /// K = K₂ - K₁ applied to a batch of functions. K₁ is the loss-type part
  /// √μ(v) Σ B √μ(u) f(u); K₂ the two gain-type terms. K₂ is replaced by the
  /// average of its gather and scatter (transpose) forms, which makes the
  /// discrete K exactly symmetric in the Δv³ inner product.
  std::vector<std::vector<double>> K_apply_batch(std::span<const std::vector<double>> fs) const {
    const std::size_t nv = grid_.size();
    const std::size_t nf = fs.size();
    for (const auto& f : fs) {
      check_size(f);
      check_finite(f);
    }
    const auto smu = grid_.sqrt_maxwellian();
    const double dv3 = grid_.cell_volume();
    std::vector<std::vector<double>> gather(nf, std::vector<double>(nv, 0.0));
    std::vector<std::vector<double>> scatter(nf, std::vector<double>(nv, 0.0));
    std::vector<double> acc(nf);
    for (std::size_t v = 0; v < nv; ++v) {
      const Vec3 vv = grid_.node(v);
      const auto vi = grid_.axes(v);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t u = 0; u < nv; ++u) {
        if (u == v) continue;
        const auto ui = grid_.axes(u);
        const Vec3 uu = grid_.node(u);
        const Vec3 z = uu - vv;
        const double scale = gain_scale_[offset(ui[0] - vi[0], ui[1] - vi[1], ui[2] - vi[2])] * smu[u] * dv3;
        for (std::size_t d = 0; d < half_.size(); ++d) {
          const Vec3& w = half_.directions[d];
          const double s = dot(z, w);
          if (s == 0.0) continue;
          const double b = scale * half_.weights[d] * std::abs(s);
          const Vec3 vp = vv + w * s;
          const Vec3 up = uu - w * s;
          const double a_vp = b * sqrt_maxwellian(up);  // multiplies f(v')
          const double a_up = b * sqrt_maxwellian(vp);  // multiplies f(u')
          const auto sv = grid_.stencil(vp);
          const auto su = grid_.stencil(up);
          for (std::size_t k = 0; k < nf; ++k) {
            const auto& f = fs[k];
            double val = 0.0;
            for (int c = 0; c < sv.count; ++c) val += a_vp * sv.weight[c] * f[sv.index[c]];
            for (int c = 0; c < su.count; ++c) val += a_up * su.weight[c] * f[su.index[c]];
            acc[k] += val;
            const double fv = f[v];
            if (fv == 0.0) continue;
            auto& out = scatter[k];
            for (int c = 0; c < sv.count; ++c) out[sv.index[c]] += a_vp * sv.weight[c] * fv;
            for (int c = 0; c < su.count; ++c) out[su.index[c]] += a_up * su.weight[c] * fv;
          }
        }
      }
      for (std::size_t k = 0; k < nf; ++k) gather[k][v] = acc[k];
    }
    std::vector<std::vector<double>> out(nf);
    for (std::size_t k = 0; k < nf; ++k) {
      std::vector<double> g(nv);
      for (std::size_t a = 0; a < nv; ++a) g[a] = smu[a] * fs[k][a];
      const auto k1 = frequency(g);
      out[k].resize(nv);
      for (std::size_t a = 0; a < nv; ++a) out[k][a] = 0.5 * (gather[k][a] + scatter[k][a]) - smu[a] * k1[a];
    }
    return out;
  }

  std::vector<double> K_apply(std::span<const double> f) const {
    std::vector<std::vector<double>> one{std::vector<double>(f.begin(), f.end())};
    return std::move(K_apply_batch(one).front());
  }

  /// Dense row-major K (N_v × N_v) in the same symmetrised discretisation as
  /// K_apply_batch. Memory is N_v² doubles; meant for the reference grid.
  std::vector<double> K_matrix() const {
    const std::size_t nv = grid_.size();
    const auto smu = grid_.sqrt_maxwellian();
    const double dv3 = grid_.cell_volume();
    std::vector<double> G(nv * nv, 0.0);
    for (std::size_t v = 0; v < nv; ++v) {
      const Vec3 vv = grid_.node(v);
      const auto vi = grid_.axes(v);
      double* row = G.data() + v * nv;
      for (std::size_t u = 0; u < nv; ++u) {
        if (u == v) continue;
        const auto ui = grid_.axes(u);
        const Vec3 uu = grid_.node(u);
        const Vec3 z = uu - vv;
        const double scale = gain_scale_[offset(ui[0] - vi[0], ui[1] - vi[1], ui[2] - vi[2])] * smu[u] * dv3;
        for (std::size_t d = 0; d < half_.size(); ++d) {
          const Vec3& w = half_.directions[d];
          const double s = dot(z, w);
          if (s == 0.0) continue;
          const double b = scale * half_.weights[d] * std::abs(s);
          const Vec3 vp = vv + w * s;
          const Vec3 up = uu - w * s;
          const auto sv = grid_.stencil(vp);
          const auto su = grid_.stencil(up);
          if (sv.count) {
            const double c = b * sqrt_maxwellian(up);
            for (int k = 0; k < 8; ++k) row[sv.index[k]] += c * sv.weight[k];
          }
          if (su.count) {
            const double c = b * sqrt_maxwellian(vp);
            for (int k = 0; k < 8; ++k) row[su.index[k]] += c * su.weight[k];
          }
        }
      }
    }
    for (std::size_t i = 0; i < nv; ++i) {
      const auto ii = grid_.axes(i);
      for (std::size_t j = i; j < nv; ++j) {
        const auto jj = grid_.axes(j);
        const double k1 = smu[i] * speed_[offset(jj[0] - ii[0], jj[1] - ii[1], jj[2] - ii[2])] * smu[j] * dv3;
        const double sym = 0.5 * (G[i * nv + j] + G[j * nv + i]) - k1;
        G[i * nv + j] = sym;
        G[j * nv + i] = sym;
      }
    }
    return G;
  }

  /// Gather form of (K f)(v) at a single node, without symmetrisation. Used to
  /// probe the discrete kernel k(v, η) pointwise.
  double K_gather_at(std::span<const double> f, std::size_t node) const {
    check_size(f);
    const auto smu = grid_.sqrt_maxwellian();
    const double dv3 = grid_.cell_volume();
    const Vec3 vv = grid_.node(node);
    const auto vi = grid_.axes(node);
    const double k2 = pairwise_sum(grid_.size(), [&](std::size_t u) {
      if (u == node) return 0.0;
      const auto ui = grid_.axes(u);
      const Vec3 uu = grid_.node(u);
      const Vec3 z = uu - vv;
      const double scale = gain_scale_[offset(ui[0] - vi[0], ui[1] - vi[1], ui[2] - vi[2])] * smu[u];
      double acc = 0.0;
      for (std::size_t d = 0; d < half_.size(); ++d) {
        const Vec3& w = half_.directions[d];
        const double s = dot(z, w);
        if (s == 0.0) continue;
        const Vec3 vp = vv + w * s;
        const Vec3 up = uu - w * s;
        acc += half_.weights[d] * std::abs(s) *
               (sqrt_maxwellian(up) * grid_.interpolate(f, vp) + sqrt_maxwellian(vp) * grid_.interpolate(f, up));
      }
      return scale * acc;
    });
    const double k1 = pairwise_sum(grid_.size(), [&](std::size_t u) {
      const auto ui = grid_.axes(u);
      return speed_[offset(ui[0] - vi[0], ui[1] - vi[1], ui[2] - vi[2])] * smu[u] * f[u];
    });
    return dv3 * (k2 - smu[node] * k1);
  }

  /// M_kl = Q₊(G_k, G_l)(v) for a family of lattice functions, so that
  /// Q₊(Σ a_k G_k, Σ a_l G_l)(v) = aᵀ M a. Row-major K×K.
  std::vector<double> gain_gram(std::span<const std::vector<double>> basis, std::size_t node) const {
    const std::size_t K = basis.size();
    for (const auto& g : basis) check_size(g);
    std::vector<double> M(K * K, 0.0);
    std::vector<double> at_u(K), at_v(K);
    const Vec3 v = grid_.node(node);
    const auto vi = grid_.axes(node);
    const double dv3 = grid_.cell_volume();
    for (std::size_t a = 0; a < grid_.size(); ++a) {
      if (a == node) {
        if (kernel_.kappa == 0.0)
          for (std::size_t k = 0; k < K; ++k)
            for (std::size_t l = 0; l < K; ++l)
              M[k * K + l] += dv3 * kernel_.angular_integral() * basis[k][a] * basis[l][a];
        continue;
      }
      const auto ui = grid_.axes(a);
      const Vec3 z = grid_.node(a) - v;
      const double scale = dv3 * gain_scale_[offset(ui[0] - vi[0], ui[1] - vi[1], ui[2] - vi[2])];
      for (std::size_t d = 0; d < half_.size(); ++d) {
        const Vec3& w = half_.directions[d];
        const double s = dot(z, w);
        if (s == 0.0) continue;
        const auto su = grid_.stencil(grid_.node(a) - w * s);
        const auto sv = grid_.stencil(v + w * s);
        if (su.count == 0 || sv.count == 0) continue;
        const double b = scale * half_.weights[d] * std::abs(s);
        for (std::size_t k = 0; k < K; ++k) {
          double x = 0.0, y = 0.0;
          for (int c = 0; c < 8; ++c) {
            x += su.weight[c] * basis[k][su.index[c]];
            y += sv.weight[c] * basis[k][sv.index[c]];
          }
          at_u[k] = b * x;
          at_v[k] = y;
        }
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t l = 0; l < K; ++l) M[k * K + l] += at_u[k] * at_v[l];
      }
    }
    return M;
  }

 private:
  std::size_t offset(int di, int dj, int dk) const noexcept {
    const int n = grid_.per_axis();
    return (static_cast<std::size_t>(di + n - 1) * span_ + (dj + n - 1)) * span_ + (dk + n - 1);
  }
  void check_size(std::span<const double> F) const {
    if (F.size() != grid_.size()) throw Error(ErrorKind::invalid_input, "velocity function size mismatch");
  }
  static void check_finite(std::span<const double> F) {
    for (double x : F)
      if (!std::isfinite(x)) throw Error(ErrorKind::data_corrupt, "non-finite velocity function");
  }

  VelocityGrid grid_;
  KernelSpec kernel_;
  SphereQuadrature half_;
  int span_ = 0;
  std::vector<double> speed_;
  std::vector<double> gain_scale_;
  std::vector<double> nu_;
  double nu0_ = 0.0;
};

/// Gain term for κ = 1, where B = b0 |(u - v)·ω| no longer depends on |v - u|.
/// Substituting u = y + sω with y in the plane through v orthogonal to ω gives
///
///   Q₊(F1, F2)(v) = b0 ∫_{S²} Π_ω F1(v·ω) ∫_R |s| F2(v + sω) ds dω,
///
/// with Π_ω F1(p) the integral of F1 over the plane {y·ω = p}. Plane integrals
/// come from a linear-weight projection of the lattice onto each direction;
/// the line integral samples F2 by trilinear interpolation. Cost is
/// O(N_ω (N_v + N_nodes N_s)) instead of O(N_nodes N_v N_ω). The ω weights are
/// the raw sphere rule (no per-direction renormalisation).
class FactorizedGain {
 public:
  FactorizedGain(VelocityGrid grid, KernelSpec kernel, const SphereQuadrature& sphere = icosahedral32(),
                 double line_step = 0.5, double bin_width = 0.5)
      : grid_(std::move(grid)), b0_(kernel.b0), half_(sphere.half()) {
    if (kernel.kappa != 1.0) throw Error(ErrorKind::invalid_input, "factorized gain requires kappa = 1");
    h_s_ = line_step * grid_.spacing();
    const double R = grid_.radius();
    // Bins are laid out symmetrically about p = 0 so the projection commutes
    // with the lattice reflections.
    for (const Vec3& w : half_.directions) {
      const double pmax = R * (std::abs(w.x) + std::abs(w.y) + std::abs(w.z));
      const double count = std::ceil(2.0 * pmax / (bin_width * grid_.spacing()));
      p_min_.push_back(-pmax);
      h_p_.push_back(2.0 * pmax / count);
      bins_.push_back(static_cast<std::size_t>(count) + 2);
    }
  }

  const VelocityGrid& grid() const noexcept { return grid_; }

  void gain(std::span<const double> F1, std::span<const double> F2, std::span<const std::size_t> nodes,
            std::span<double> out) const {
    const auto plane = plane_integrals(F1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const Vec3 v = grid_.node(nodes[i]);
      double total = 0.0;
      for (std::size_t d = 0; d < half_.size(); ++d) {
        const auto [k, frac] = bin_of(d, v);
        const double pi_val = (1.0 - frac) * plane[d][k] + frac * plane[d][k + 1];
        if (pi_val == 0.0) continue;
        total += half_.weights[d] * pi_val * line_integral(F2, d, v);
      }
      out[i] = b0_ * total;
    }
  }

  /// M_kl(v) = Q₊(G_k, G_l)(v) for each requested node, row-major K×K blocks.
  std::vector<std::vector<double>> gram(std::span<const std::vector<double>> basis,
                                        std::span<const std::size_t> nodes) const {
    const std::size_t K = basis.size();
    const std::size_t nd = half_.size();
    std::vector<std::vector<std::vector<double>>> planes(K);
    for (std::size_t k = 0; k < K; ++k) planes[k] = plane_integrals(basis[k]);
    std::vector<std::vector<double>> out(nodes.size(), std::vector<double>(K * K, 0.0));
    std::vector<double> pi(K), line(K);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const Vec3 v = grid_.node(nodes[i]);
      for (std::size_t d = 0; d < nd; ++d) {
        const auto [k0, frac] = bin_of(d, v);
        for (std::size_t k = 0; k < K; ++k) {
          pi[k] = (1.0 - frac) * planes[k][d][k0] + frac * planes[k][d][k0 + 1];
          line[k] = line_integral(basis[k], d, v);
        }
        const double wgt = b0_ * half_.weights[d];
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t l = 0; l < K; ++l) out[i][k * K + l] += wgt * pi[k] * line[l];
      }
    }
    return out;
  }

  /// Gram blocks for continuous basis functions: plane integrals come from
  /// their lattice samples, line integrals sample the functions themselves
  /// (step h_s) instead of interpolating. Fn: double(std::size_t k, const Vec3&).
  template <class Fn>
  std::vector<std::vector<double>> gram_exact_lines(std::span<const std::vector<double>> basis, Fn&& eval,
                                                    std::span<const std::size_t> nodes) const {
    const std::size_t K = basis.size();
    const std::size_t nd = half_.size();
    std::vector<std::vector<std::vector<double>>> planes(K);
    for (std::size_t k = 0; k < K; ++k) planes[k] = plane_integrals(basis[k]);
    std::vector<std::vector<double>> out(nodes.size(), std::vector<double>(K * K, 0.0));
    std::vector<double> pi(K), line(K);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const Vec3 v = grid_.node(nodes[i]);
      for (std::size_t d = 0; d < nd; ++d) {
        const Vec3& w = half_.directions[d];
        const auto [k0, frac] = bin_of(d, v);
        const auto [s_lo, s_hi] = box_chord(d, v);
        const long j_lo = static_cast<long>(std::ceil(s_lo / h_s_));
        const long j_hi = static_cast<long>(std::floor(s_hi / h_s_));
        for (std::size_t k = 0; k < K; ++k) {
          pi[k] = (1.0 - frac) * planes[k][d][k0] + frac * planes[k][d][k0 + 1];
          double acc = 0.0;
          for (long j = j_lo; j <= j_hi; ++j) {
            if (j == 0) continue;
            const double s = static_cast<double>(j) * h_s_;
            acc += std::abs(s) * eval(k, v + w * s);
          }
          line[k] = acc * h_s_;
        }
        const double wgt = b0_ * half_.weights[d];
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t l = 0; l < K; ++l) out[i][k * K + l] += wgt * pi[k] * line[l];
      }
    }
    return out;
  }

  std::vector<double> gain(std::span<const double> F1, std::span<const double> F2) const {
    std::vector<std::size_t> all(grid_.size());
    for (std::size_t a = 0; a < all.size(); ++a) all[a] = a;
    std::vector<double> out(all.size());
    gain(F1, F2, all, out);
    return out;
  }

 private:
  std::pair<std::size_t, double> bin_of(std::size_t d, const Vec3& v) const {
    const double t = (dot(v, half_.directions[d]) - p_min_[d]) / h_p_[d];
    const auto k = static_cast<std::size_t>(t);
    return {k, t - static_cast<double>(k)};
  }

  /// Π_ω F on the bin grid of every direction, by linear deposit of lattice mass.
  std::vector<std::vector<double>> plane_integrals(std::span<const double> F) const {
    const double dv3 = grid_.cell_volume();
    std::vector<std::vector<double>> plane(half_.size());
    for (std::size_t d = 0; d < half_.size(); ++d) {
      auto& H = plane[d];
      H.assign(bins_[d], 0.0);
      for (std::size_t a = 0; a < grid_.size(); ++a) {
        if (F[a] == 0.0) continue;
        const auto [k, frac] = bin_of(d, grid_.node(a));
        H[k] += (1.0 - frac) * F[a];
        H[k + 1] += frac * F[a];
      }
      for (double& x : H) x *= dv3 / h_p_[d];
    }
    return plane;
  }

  /// ∫ |s| F(v + sω) ds over the part of the line inside the lattice box.
  /// Parameter range of the line v + sω inside the lattice box.
  std::pair<double, double> box_chord(std::size_t d, const Vec3& v) const {
    const Vec3& w = half_.directions[d];
    const double R = grid_.radius();
    double s_lo = -1e300, s_hi = 1e300;
    for (int c = 0; c < 3; ++c) {
      if (w[c] == 0.0) continue;
      double a = (-R - v[c]) / w[c], b = (R - v[c]) / w[c];
      if (a > b) std::swap(a, b);
      s_lo = std::max(s_lo, a);
      s_hi = std::min(s_hi, b);
    }
    return {s_lo, s_hi};
  }

  double line_integral(std::span<const double> F, std::size_t d, const Vec3& v) const {
    const Vec3& w = half_.directions[d];
    const auto [s_lo, s_hi] = box_chord(d, v);
    const long j_lo = static_cast<long>(std::ceil(s_lo / h_s_));
    const long j_hi = static_cast<long>(std::floor(s_hi / h_s_));
    double line = 0.0;
    for (long j = j_lo; j <= j_hi; ++j) {
      if (j == 0) continue;
      const double s = static_cast<double>(j) * h_s_;
      line += std::abs(s) * grid_.interpolate(F, v + w * s);
    }
    return line * h_s_;
  }

  VelocityGrid grid_;
  double b0_;
  SphereQuadrature half_;
  double h_s_ = 0.0;
  std::vector<double> h_p_;
  std::vector<double> p_min_;
  std::vector<std::size_t> bins_;
};

}  // namespace kinetic
