#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kinetic/collision.hpp"
#include "kinetic/rng.hpp"

using namespace kinetic;

namespace {

std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

std::vector<double> random_field(const VelocityGrid& g, std::uint64_t seed) {
  RandomStream rng(seed);
  const auto mu = g.maxwellian_values();
  std::vector<double> F(g.size());
  for (std::size_t a = 0; a < F.size(); ++a) F[a] = mu[a] * (0.5 + rng.uniform());
  return F;
}

}  // namespace

TEST(KernelEnvelope, DirectEvaluation) {
  EXPECT_NEAR(kernel_envelope({0.5, 0, 0}, {-0.5, 0, 0}), 2.0 * std::exp(-0.125), 1e-14);
  EXPECT_NEAR(2.0 * std::exp(-0.125), 1.7650, 1e-4);
  EXPECT_NEAR(kernel_envelope({5, 0, 0}, {-5, 0, 0}), 10.1 * std::exp(-12.5), 1e-18);
  EXPECT_NEAR(kernel_envelope({5, 0, 0}, {-5, 0, 0}), 3.77e-5, 1e-7);
  EXPECT_THROW(kernel_envelope({1, 2, 3}, {1, 2, 3}), Error);
}

TEST(Collide, LossIsMaxwellianTimesFrequency) {
  const VelocityGrid g(3.0, 0.75);
  const CollisionOperator op(g, KernelSpec{1.0, 1.0});
  const auto mu = to_vector(g.maxwellian_values());
  for (std::size_t a = 0; a < g.size(); a += 37) {
    const auto gl = op.collide(mu, mu, a);
    EXPECT_NEAR(gl.loss, mu[a] * op.nu()[a], 1e-15);
  }
}

TEST(Collide, KappaZeroLossIsMassTimesConstant) {
  const VelocityGrid g(3.0, 0.75);
  const CollisionOperator op(g, KernelSpec{0.0, 1.3});
  const auto F1 = random_field(g, 1);
  const auto F2 = random_field(g, 2);
  double mass = 0.0;
  for (double x : F1) mass += x * g.cell_volume();
  for (std::size_t a = 0; a < g.size(); a += 29)
    EXPECT_NEAR(op.collide(F1, F2, a).loss, F2[a] * 1.3 * 2.0 * std::numbers::pi * mass, 1e-12);
}

TEST(Collide, NonnegativeForNonnegativeInputs) {
  const VelocityGrid g(3.0, 0.75);
  const CollisionOperator op(g, KernelSpec{0.5, 1.0});
  const auto F1 = random_field(g, 3);
  const auto F2 = random_field(g, 4);
  for (std::size_t a = 0; a < g.size(); ++a) {
    const auto gl = op.collide(F1, F2, a);
    ASSERT_GE(gl.gain, 0.0);
    ASSERT_GE(gl.loss, 0.0);
  }
}

TEST(Collide, MaxwellianBalanceConvergesUnderRefinement) {
  double prev = 1.0;
  for (double h : {0.75, 0.5, 0.375}) {
    const VelocityGrid g(4.5, h);
    const CollisionOperator op(g, KernelSpec{1.0, 1.0});
    const auto mu = to_vector(g.maxwellian_values());
    const int c = g.per_axis() / 2;
    const auto gl = op.collide(mu, mu, g.index(c, c, c));
    const double err = std::abs(gl.gain / gl.loss - 1.0);
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 0.02);
}

TEST(Collide, RejectsNaN) {
  const VelocityGrid g(3.0, 0.75);
  const CollisionOperator op(g, KernelSpec{1.0, 1.0});
  auto F = random_field(g, 5);
  F[10] = std::nan("");
  EXPECT_THROW(op.collide(F, F, 0), Error);
}

TEST(Gamma, ZeroAtZero) {
  const VelocityGrid g(3.0, 0.75);
  const CollisionOperator op(g, KernelSpec{1.0, 1.0});
  const auto gp = op.gamma(std::vector<double>(g.size(), 0.0));
  for (std::size_t a = 0; a < g.size(); ++a) {
    EXPECT_EQ(gp.plus[a], 0.0);
    EXPECT_EQ(gp.minus[a], 0.0);
  }
}

TEST(RofF, ExamplesAndPositivity) {
  const VelocityGrid g(3.0, 0.75);
  const CollisionOperator op(g, KernelSpec{1.0, 1.0});
  const auto r0 = op.R_of_f(std::vector<double>(g.size(), 0.0));
  const auto smu = g.sqrt_maxwellian();
  const auto r2 = op.R_of_f(to_vector(smu));
  for (std::size_t a = 0; a < g.size(); ++a) {
    EXPECT_NEAR(r0[a], op.nu()[a], 1e-13 * op.nu()[a]);
    EXPECT_NEAR(r2[a], 2.0 * op.nu()[a], 1e-13 * op.nu()[a]);
  }
  // F = μ + √μ f ≥ 0 with f random.
  RandomStream rng(8);
  std::vector<double> f(g.size());
  for (std::size_t a = 0; a < f.size(); ++a) f[a] = smu[a] * (rng.uniform() * 3.0 - 1.0);
  const auto r = op.R_of_f(f);
  EXPECT_GE(*std::min_element(r.begin(), r.end()), 0.0);
}

TEST(OperatorK, ZeroAtZeroAndSymmetric) {
  const VelocityGrid g(3.0, 0.75);
  const CollisionOperator op(g, KernelSpec{1.0, 1.0});
  const auto k0 = op.K_apply(std::vector<double>(g.size(), 0.0));
  for (double x : k0) EXPECT_EQ(x, 0.0);
  const auto K = op.K_matrix();
  const std::size_t n = g.size();
  double scale = 0.0;
  for (double x : K) scale = std::max(scale, std::abs(x));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) ASSERT_NEAR(K[i * n + j], K[j * n + i], 1e-12 * scale);
}

TEST(OperatorK, MatrixMatchesApply) {
  const VelocityGrid g(3.0, 0.75);
  const CollisionOperator op(g, KernelSpec{0.5, 1.0});
  RandomStream rng(12);
  std::vector<double> f(g.size());
  for (double& x : f) x = rng.normal();
  const auto Kf = op.K_apply(f);
  const auto K = op.K_matrix();
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < n; i += 17) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += K[i * n + j] * f[j];
    EXPECT_NEAR(s, Kf[i], 1e-10 * (1.0 + std::abs(Kf[i])));
  }
}

TEST(FactorizedGain, MaxwellianNearlyBalancedAtCentre) {
  // Uncorrected Q₊(μ, μ)/(μν) at v = 0; the solver divides this ratio out.
  for (double h : {0.75, 0.5, 0.375}) {
    const VelocityGrid g(4.5, h);
    const KernelSpec k{1.0, 1.0};
    const CollisionOperator op(g, k);
    const FactorizedGain fg(g, k);
    const auto mu = to_vector(g.maxwellian_values());
    const int c = g.per_axis() / 2;
    const std::vector<std::size_t> node{g.index(c, c, c)};
    std::vector<double> out(1);
    fg.gain(mu, mu, node, out);
    EXPECT_NEAR(out[0] / (mu[node[0]] * op.nu()[node[0]]), 1.0, 0.05);
  }
  EXPECT_THROW(FactorizedGain(VelocityGrid(3.0, 0.75), KernelSpec{0.5, 1.0}), Error);
}

TEST(FactorizedGain, GramReproducesBilinearGain) {
  const VelocityGrid g(3.0, 0.75);
  const FactorizedGain fg(g, KernelSpec{1.0, 1.0});
  const std::vector<std::vector<double>> basis{random_field(g, 21), random_field(g, 22)};
  const std::vector<std::size_t> nodes{0, 100, 364};
  const auto M = fg.gram(basis, nodes);
  std::vector<double> sum(g.size());
  for (std::size_t a = 0; a < sum.size(); ++a) sum[a] = 2.0 * basis[0][a] - basis[1][a];
  const auto q = fg.gain(sum, sum);
  const double c[2] = {2.0, -1.0};
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    double quad = 0.0;
    for (int k = 0; k < 2; ++k)
      for (int l = 0; l < 2; ++l) quad += c[k] * c[l] * M[i][k * 2 + l];
    EXPECT_NEAR(quad, q[nodes[i]], 1e-12 * (1.0 + std::abs(q[nodes[i]])));
  }
}
