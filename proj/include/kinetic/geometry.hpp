#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include "kinetic/error.hpp"
#include "kinetic/rng.hpp"
#include "kinetic/vec3.hpp"

namespace kinetic {

enum class Shape { unit_ball, slab };

/// Convex domain {ξ < 0}. The slab is {|x₁| < a} with the other two
/// coordinates unbounded.
struct Domain {
  Shape shape = Shape::unit_ball;
  double half_width = 1.0;

  static Domain unit_ball() { return {Shape::unit_ball, 1.0}; }
  static Domain slab(double half_width) {
    if (!(half_width > 0.0)) throw Error(ErrorKind::invalid_input, "slab half width must be positive");
    return {Shape::slab, half_width};
  }

  double xi(const Vec3& x) const {
    return shape == Shape::unit_ball ? norm2(x) - 1.0 : std::abs(x.x) - half_width;
  }

  double convexity_constant() const { return shape == Shape::unit_ball ? 2.0 : 0.0; }

  /// Outward unit normal; x is expected on (or near) the boundary.
  Vec3 normal(const Vec3& x) const {
    if (shape == Shape::slab) return {x.x >= 0.0 ? 1.0 : -1.0, 0.0, 0.0};
    const double r = norm(x);
    if (r == 0.0) throw Error(ErrorKind::domain_violation, "normal requested at the ball centre");
    return x * (1.0 / r);
  }

  double tolerance(const Vec3& x) const { return 1e-10 * (1.0 + norm2(x)); }
  bool in_closure(const Vec3& x) const { return xi(x) <= tolerance(x); }
  bool on_boundary(const Vec3& x) const { return std::abs(xi(x)) <= tolerance(x); }

  bool operator==(const Domain&) const = default;
};

struct Exit {
  double t_b = 0.0;
  Vec3 x_b;
};

/// Backward exit time t_b = sup{τ ≥ 0 : x - sv ∈ Ω̄ for s ∈ [0, τ]} and the exit
/// point x_b = x - t_b v. In the slab a velocity parallel to the walls never
/// exits: t_b = +∞ and x_b = x.
inline Exit backward_exit(const Domain& domain, const Vec3& x, const Vec3& v) {
  const double v2 = norm2(v);
  if (v2 == 0.0) throw Error(ErrorKind::invalid_input, "backward exit needs a nonzero velocity");
  if (!domain.in_closure(x)) throw Error(ErrorKind::domain_violation, "backward exit from a point outside the domain");
  double t = 0.0;
  if (domain.shape == Shape::unit_ball) {
    // |x - tv|² = 1, larger root, written to avoid cancellation.
    const double b = dot(x, v);
    const double c = std::max(0.0, 1.0 - norm2(x));
    const double disc = std::sqrt(b * b + v2 * c);
    t = b >= 0.0 ? (b + disc) / v2 : c / (disc - b);
  } else {
    const double a = domain.half_width;
    if (v.x > 0.0) {
      t = (x.x + a) / v.x;
    } else if (v.x < 0.0) {
      t = (a - x.x) / -v.x;
    } else {
      return {std::numeric_limits<double>::infinity(), x};
    }
    t = std::max(0.0, t);
  }
  return {t, x - v * t};
}

/// Velocity from the wall measure c_μ μ(v)(v·n) on {v·n > 0}: the normal
/// component from its inverse CDF u = √(-2 ln U), tangentials standard normal.
inline Vec3 sample_diffuse_velocity(const Domain& domain, const Vec3& x, RandomStream& rng) {
  if (!domain.on_boundary(x)) throw Error(ErrorKind::domain_violation, "diffuse sampling away from the boundary");
  const Vec3 n = domain.normal(x);
  // Orthonormal tangent pair built from the coordinate axis least aligned with n.
  Vec3 e = std::abs(n.x) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
  Vec3 t1 = e - n * dot(e, n);
  t1 = t1 * (1.0 / norm(t1));
  const Vec3 t2{n.y * t1.z - n.z * t1.y, n.z * t1.x - n.x * t1.z, n.x * t1.y - n.y * t1.x};
  const double u = std::sqrt(-2.0 * std::log(rng.uniform()));
  const double g1 = rng.normal();
  const double g2 = rng.normal();
  return n * u + t1 * g1 + t2 * g2;
}

struct CycleNode {
  double t = 0.0;
  Vec3 x;
  Vec3 v;
};

/// Node 0 is the start (t, x, v). Node k ≥ 1 sits at the k-th backward wall
/// hit with t_k = t_{k-1} - t_b(x_{k-1}, v_{k-1}); its velocity is drawn from
/// the wall measure. A terminal node with t_k ≤ 0 carries no velocity.
struct BackTimeCycle {
  std::vector<CycleNode> nodes;
  bool terminated_at_initial = false;

  /// Number of wall nodes reached with positive time.
  std::size_t bounces() const {
    std::size_t k = 0;
    for (std::size_t i = 1; i < nodes.size(); ++i)
      if (nodes[i].t > 0.0) ++k;
    return k;
  }
};

inline BackTimeCycle build_cycle(const Domain& domain, double t, const Vec3& x, const Vec3& v, std::size_t k_max,
                                 RandomStream& rng) {
  if (!(t > 0.0)) throw Error(ErrorKind::invalid_input, "cycle start time must be positive");
  const double speed = norm(v);
  if (speed == 0.0) throw Error(ErrorKind::invalid_input, "cycle needs a nonzero velocity");
  if (!domain.in_closure(x)) throw Error(ErrorKind::domain_violation, "cycle start outside the domain");
  if (domain.on_boundary(x)) {
    const double vn = dot(v, domain.normal(x));
    if (std::abs(vn) < 1e-8 * speed) throw Error(ErrorKind::grazing_rejected, "grazing cycle start");
    if (vn < 0.0) throw Error(ErrorKind::invalid_input, "incoming cycle start on the boundary");
  }
  BackTimeCycle cycle;
  cycle.nodes.push_back({t, x, v});
  while (cycle.nodes.size() <= k_max) {
    const CycleNode& last = cycle.nodes.back();
    const Exit ex = backward_exit(domain, last.x, last.v);
    const double tk = last.t - ex.t_b;
    if (tk <= 0.0) {
      cycle.nodes.push_back({tk, ex.x_b, Vec3{}});
      cycle.terminated_at_initial = true;
      break;
    }
    cycle.nodes.push_back({tk, ex.x_b, sample_diffuse_velocity(domain, ex.x_b, rng)});
  }
  return cycle;
}

struct EscapeEstimate {
  double p = 0.0;
  double std_err = 0.0;
};

/// p_k = P(t_k > 0) for k = 1..k_max under the product wall measure, from
/// n_samples independent cycles. Sample i draws from stream i of the seed, so
/// the estimate does not depend on how samples are split across threads.
inline std::vector<EscapeEstimate> escape_profile(const Domain& domain, double t, const Vec3& x, const Vec3& v,
                                                  std::size_t k_max, std::size_t n_samples, std::uint64_t seed,
                                                  unsigned threads = 1) {
  if (k_max < 1 || n_samples < 1) throw Error(ErrorKind::invalid_input, "escape estimate needs k >= 1 and n >= 1");
  threads = std::max(1u, threads);
  std::vector<std::vector<std::uint64_t>> counts(threads, std::vector<std::uint64_t>(k_max + 1, 0));
  auto work = [&](unsigned w) {
    for (std::size_t i = w; i < n_samples; i += threads) {
      RandomStream rng(seed, i);
      const auto cycle = build_cycle(domain, t, x, v, k_max, rng);
      const std::size_t b = cycle.bounces();
      for (std::size_t k = 1; k <= b; ++k) ++counts[w][k];
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  std::vector<EscapeEstimate> out(k_max);
  const double n = static_cast<double>(n_samples);
  for (std::size_t k = 1; k <= k_max; ++k) {
    std::uint64_t c = 0;
    for (const auto& row : counts) c += row[k];
    const double p = static_cast<double>(c) / n;
    out[k - 1] = {p, std::sqrt(p * (1.0 - p) / n)};
  }
  return out;
}

inline EscapeEstimate cycle_escape_probability(const Domain& domain, double t, const Vec3& x, const Vec3& v,
                                               std::size_t k, std::size_t n_samples, std::uint64_t seed,
                                               unsigned threads = 1) {
  return escape_profile(domain, t, x, v, k, n_samples, seed, threads).back();
}

}  // namespace kinetic
