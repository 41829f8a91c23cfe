#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kinetic/geometry.hpp"

using namespace kinetic;

namespace {

void expect_vec_near(const Vec3& a, const Vec3& b, double tol) {
  EXPECT_NEAR(a.x, b.x, tol);
  EXPECT_NEAR(a.y, b.y, tol);
  EXPECT_NEAR(a.z, b.z, tol);
}

}  // namespace

TEST(Domain, InteriorBoundaryAndNormal) {
  const Domain ball = Domain::unit_ball();
  EXPECT_LT(ball.xi({0.3, 0.2, 0.1}), 0.0);
  EXPECT_TRUE(ball.on_boundary({0.0, 0.6, 0.8}));
  const Vec3 n = ball.normal({0.0, 0.6, 0.8});
  EXPECT_NEAR(norm(n), 1.0, 1e-15);
  EXPECT_GT(ball.xi(Vec3{0.0, 0.6, 0.8} + n * 1e-6), 0.0);
  EXPECT_EQ(ball.convexity_constant(), 2.0);

  const Domain slab = Domain::slab(1.0);
  EXPECT_LT(slab.xi({0.5, 100.0, -100.0}), 0.0);
  expect_vec_near(slab.normal({-1.0, 3.0, 0.0}), {-1.0, 0.0, 0.0}, 0.0);
  EXPECT_EQ(slab.convexity_constant(), 0.0);
  EXPECT_THROW(Domain::slab(0.0), Error);
}

TEST(BackwardExit, BallThroughCentre) {
  const Exit e = backward_exit(Domain::unit_ball(), {0.5, 0, 0}, {1, 0, 0});
  EXPECT_NEAR(e.t_b, 1.5, 1e-14);
  expect_vec_near(e.x_b, {-1, 0, 0}, 1e-14);
}

TEST(BackwardExit, BallRadiusOverSpeed) {
  const Exit e = backward_exit(Domain::unit_ball(), {0, 0, 0}, {0, 2, 0});
  EXPECT_NEAR(e.t_b, 0.5, 1e-15);
  expect_vec_near(e.x_b, {0, -1, 0}, 1e-15);
}

TEST(BackwardExit, SlabFace) {
  const Exit e = backward_exit(Domain::slab(1.0), {0.2, 0.7, -0.3}, {-0.6, 1.0, 0.5});
  EXPECT_NEAR(e.t_b, 4.0 / 3.0, 1e-14);
  EXPECT_NEAR(e.x_b.x, 1.0, 1e-14);
}

TEST(BackwardExit, SlabParallelNeverExits) {
  const Exit e = backward_exit(Domain::slab(1.0), {0.2, 0, 0}, {0, 1, 0});
  EXPECT_TRUE(std::isinf(e.t_b));
}

TEST(BackwardExit, ExitPointLiesOnBoundary) {
  const Domain ball = Domain::unit_ball();
  RandomStream rng(3);
  for (int i = 0; i < 1000; ++i) {
    Vec3 x{rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5};
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const Exit e = backward_exit(ball, x, v);
    ASSERT_GE(e.t_b, 0.0);
    ASSERT_TRUE(ball.on_boundary(e.x_b));
  }
}

TEST(BackwardExit, RejectsBadInput) {
  EXPECT_THROW(backward_exit(Domain::unit_ball(), {0, 0, 0}, {0, 0, 0}), Error);
  EXPECT_THROW(backward_exit(Domain::unit_ball(), {2, 0, 0}, {1, 0, 0}), Error);
}

TEST(DiffuseSampling, OutgoingWithHalfGaussianFlux) {
  const Domain ball = Domain::unit_ball();
  const Vec3 x{0.0, 0.6, 0.8};
  const Vec3 n = ball.normal(x);
  RandomStream rng(2024);
  const int count = 1000000;
  double s = 0.0, s2 = 0.0, tan_sum = 0.0, tan2 = 0.0;
  for (int i = 0; i < count; ++i) {
    const Vec3 v = sample_diffuse_velocity(ball, x, rng);
    const double vn = dot(v, n);
    ASSERT_GT(vn, 0.0);
    s += vn;
    s2 += vn * vn;
    const double vt = v.x;  // tangential to n at this point
    tan_sum += vt;
    tan2 += vt * vt;
  }
  const double mean = s / count;
  const double se = std::sqrt((s2 / count - mean * mean) / count);
  EXPECT_NEAR(mean, std::sqrt(2.0 * std::numbers::pi) / 2.0, 3.0 * se);
  const double tmean = tan_sum / count;
  EXPECT_NEAR(tmean, 0.0, 3.0 * std::sqrt(tan2 / count / count));
}

TEST(DiffuseSampling, RejectsInteriorPoint) {
  RandomStream rng(1);
  EXPECT_THROW(sample_diffuse_velocity(Domain::unit_ball(), {0.1, 0, 0}, rng), Error);
}

TEST(Cycle, EndsBeforeFirstBounce) {
  RandomStream rng(1);
  const auto c = build_cycle(Domain::unit_ball(), 1.0, {0.5, 0, 0}, {1, 0, 0}, 10, rng);
  ASSERT_EQ(c.nodes.size(), 2u);
  EXPECT_NEAR(c.nodes[1].t, -0.5, 1e-14);
  EXPECT_TRUE(c.terminated_at_initial);
  EXPECT_EQ(c.bounces(), 0u);
}

TEST(Cycle, FirstNodeOnTheWall) {
  RandomStream rng(1);
  const auto c = build_cycle(Domain::unit_ball(), 2.0, {0.5, 0, 0}, {1, 0, 0}, 1, rng);
  ASSERT_GE(c.nodes.size(), 2u);
  EXPECT_NEAR(c.nodes[1].t, 0.5, 1e-14);
  expect_vec_near(c.nodes[1].x, {-1, 0, 0}, 1e-14);
}

TEST(Cycle, ChordFromForcedVelocity) {
  const Exit e = backward_exit(Domain::unit_ball(), {-1, 0, 0}, {-0.5, 0, 0});
  EXPECT_NEAR(e.t_b, 4.0, 1e-12);
  EXPECT_NEAR(0.5 - e.t_b, -3.5, 1e-12);
}

TEST(Cycle, StructuralInvariants) {
  for (const Domain d : {Domain::unit_ball(), Domain::slab(1.0)}) {
    RandomStream rng(99);
    for (int i = 0; i < 200; ++i) {
      const auto c = build_cycle(d, 5.0, {0.1, 0.2, -0.1}, {0.7, -0.3, 0.4}, 30, rng);
      for (std::size_t k = 1; k < c.nodes.size(); ++k) {
        const auto& prev = c.nodes[k - 1];
        const auto& node = c.nodes[k];
        const Exit e = backward_exit(d, prev.x, prev.v);
        ASSERT_NEAR(node.t, prev.t - e.t_b, 1e-10);
        ASSERT_TRUE(d.on_boundary(node.x));
        if (node.t > 0.0) ASSERT_GT(dot(node.v, d.normal(node.x)), 0.0);
      }
    }
  }
}

TEST(Cycle, RejectsGrazingAndIncomingStarts) {
  RandomStream rng(1);
  EXPECT_THROW(build_cycle(Domain::unit_ball(), 1.0, {1, 0, 0}, {0, 1, 0}, 5, rng), Error);
  EXPECT_THROW(build_cycle(Domain::unit_ball(), 1.0, {1, 0, 0}, {-1, 0, 0}, 5, rng), Error);
  EXPECT_NO_THROW(build_cycle(Domain::unit_ball(), 1.0, {1, 0, 0}, {1, 0, 0}, 5, rng));
  EXPECT_THROW(build_cycle(Domain::unit_ball(), 0.0, {0, 0, 0}, {1, 0, 0}, 5, rng), Error);
}

TEST(EscapeProfile, ZeroWhenFirstNodeIsPastInitialTime) {
  const auto p = escape_profile(Domain::unit_ball(), 0.1, {0.5, 0, 0}, {1, 0, 0}, 20, 100000, 12345);
  for (const auto& e : p) EXPECT_EQ(e.p, 0.0);
}

TEST(EscapeProfile, NonIncreasingInK) {
  const auto p = escape_profile(Domain::unit_ball(), 3.0, {0.5, 0, 0}, {1, 0, 0}, 20, 20000, 7);
  EXPECT_EQ(p[0].p, 1.0);
  for (std::size_t k = 1; k < p.size(); ++k) EXPECT_LE(p[k].p, p[k - 1].p + 3.0 * p[k - 1].std_err);
}

TEST(EscapeProfile, MatchesIndependentOracle) {
  // Straight re-implementation on its own seed; the two estimates agree within sampling error.
  const Domain ball = Domain::unit_ball();
  const std::size_t n = 20000, k = 4;
  const auto p = cycle_escape_probability(ball, 3.0, {0.5, 0, 0}, {1, 0, 0}, k, n, 1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream rng(777, i);
    Vec3 x{0.5, 0, 0}, v{1, 0, 0};
    double t = 3.0;
    std::size_t b = 0;
    while (b < k) {
      const double v2 = norm2(v), bx = dot(x, v);
      const double tb = (bx + std::sqrt(bx * bx + v2 * std::max(0.0, 1.0 - norm2(x)))) / v2;
      t -= tb;
      if (t <= 0.0) break;
      x = x - v * tb;
      x = x * (1.0 / norm(x));
      ++b;
      const double u = std::sqrt(-2.0 * std::log(rng.uniform()));
      Vec3 t1 = std::abs(x.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
      t1 = t1 - x * dot(t1, x);
      t1 = t1 * (1.0 / norm(t1));
      const Vec3 t2{x.y * t1.z - x.z * t1.y, x.z * t1.x - x.x * t1.z, x.x * t1.y - x.y * t1.x};
      v = x * u + t1 * rng.normal() + t2 * rng.normal();
    }
    hits += b >= k;
  }
  const double q = static_cast<double>(hits) / n;
  const double se = std::sqrt(p.std_err * p.std_err + q * (1 - q) / n);
  EXPECT_NEAR(p.p, q, 4.0 * se + 1e-12);
}

TEST(EscapeProfile, IndependentOfThreadCount) {
  const auto one = escape_profile(Domain::slab(1.0), 4.0, {0.2, 0, 0}, {0.8, 0.1, 0}, 10, 5000, 5, 1);
  const auto three = escape_profile(Domain::slab(1.0), 4.0, {0.2, 0, 0}, {0.8, 0.1, 0}, 10, 5000, 5, 3);
  for (std::size_t k = 0; k < one.size(); ++k) EXPECT_EQ(one[k].p, three[k].p);
}
