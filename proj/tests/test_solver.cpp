#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kinetic/solver.hpp"

using namespace kinetic;

namespace {

const VelocityGrid& small_grid() {
  static const VelocityGrid g(4.5, 0.75);
  return g;
}

DistributionField constant_field(const SlabMesh& mesh, const VelocityGrid& g, double value) {
  DistributionField F(mesh, g.size());
  for (double& x : F.values) x = value;
  return F;
}

}  // namespace

TEST(SlabMesh, PointsVolumesAndLocate) {
  const SlabMesh m(1.0, 32);
  EXPECT_EQ(m.points(), 34u);
  EXPECT_DOUBLE_EQ(m.dx(), 1.0 / 16.0);
  EXPECT_DOUBLE_EQ(m.position(0), -1.0);
  EXPECT_DOUBLE_EQ(m.position(33), 1.0);
  EXPECT_DOUBLE_EQ(m.position(1), -1.0 + 1.0 / 32.0);
  const auto vol = m.volumes();
  EXPECT_EQ(vol.front(), 0.0);
  EXPECT_EQ(vol.back(), 0.0);
  double total = 0.0;
  for (double v : vol) total += v;
  EXPECT_NEAR(total, 2.0, 1e-14);
  for (double y : {-1.0, -0.99, -0.3, 0.0, 0.51, 0.99, 1.0}) {
    const auto s = m.locate(y);
    EXPECT_NEAR((1.0 - s.t) * m.position(s.lo) + s.t * m.position(s.hi), y, 1e-14);
  }
  EXPECT_THROW(SlabMesh(1.0, 1), Error);
}

TEST(DiffuseBc, ReproducesScaledMaxwellian) {
  const auto& g = small_grid();
  const double c = discrete_wall_constant(g);
  const auto mu = g.maxwellian_values();
  for (double scale : {0.0, 1.0, 2.0}) {
    std::vector<double> F(g.size());
    for (std::size_t a = 0; a < F.size(); ++a) F[a] = scale * mu[a];
    for (double sign : {-1.0, 1.0}) {
      auto G = F;
      apply_diffuse_bc(g, c, sign, G);
      for (std::size_t a = 0; a < G.size(); ++a) ASSERT_NEAR(G[a], scale * mu[a], 1e-15);
    }
  }
}

TEST(ConservationProjection, RescalesDriftAndRejectsZeroMass) {
  const auto& g = small_grid();
  const SlabMesh mesh(1.0, 4);
  auto F = constant_field(mesh, g, 1.0);
  const double m = field_mass(g, F);
  for (double& x : F.values) x *= 1.0 + 1e-6;
  conservation_projection(g, F, m);
  EXPECT_NEAR(F.values[100], 1.0, 1e-15);
  EXPECT_NEAR(field_mass(g, F), m, 1e-14 * m);

  auto G = constant_field(mesh, g, 0.25);
  const auto before = G.values;
  conservation_projection(g, G, field_mass(g, G));
  for (std::size_t i = 0; i < before.size(); ++i) ASSERT_EQ(G.values[i], before[i]);

  auto Z = constant_field(mesh, g, 0.0);
  EXPECT_THROW(conservation_projection(g, Z, 1.0), Error);
}

TEST(Transport, HomogeneousScalarDecay) {
  const auto& g = small_grid();
  const SlabMesh mesh(1.0, 32);
  const auto F = constant_field(mesh, g, 1.0);
  const std::size_t n = mesh.points() * g.size();
  const CollisionState st{std::vector<double>(n, 2.0 * std::numbers::pi), std::vector<double>(n, 0.0)};
  const auto out = transport_duhamel_step(g, F, st, st, 0.1, discrete_wall_constant(g));
  EXPECT_NEAR(std::exp(-0.2 * std::numbers::pi), 0.5335, 1e-4);
  // Interior points whose rays stay inside the slab.
  for (std::size_t p = 8; p <= 25; ++p)
    for (std::size_t a = 0; a < g.size(); a += 7)
      ASSERT_NEAR(out.at(p)[a], std::exp(-0.2 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(out.time, 0.1, 1e-15);
}

TEST(Transport, RejectsBadSteps) {
  const auto& g = small_grid();
  const SlabMesh mesh(1.0, 8);
  const auto F = constant_field(mesh, g, 1.0);
  const std::size_t n = mesh.points() * g.size();
  CollisionState st{std::vector<double>(n, 1.0), std::vector<double>(n, 0.0)};
  EXPECT_THROW(transport_duhamel_step(g, F, st, st, 0.0, 1.0), Error);
  EXPECT_THROW(transport_duhamel_step(g, F, st, st, 1.0, 1.0), Error);
  auto bad = st;
  bad.R[5] = -1.0;
  EXPECT_THROW(transport_duhamel_step(g, F, st, bad, 0.05, 1.0), Error);
}

TEST(VelocitySymmetry, OrbitsPartitionTheLattice) {
  const auto& g = small_grid();
  const VelocitySymmetry sym(g);
  double total = 0.0;
  for (std::size_t r = 0; r < sym.representatives().size(); ++r) total += sym.orbit_size(r);
  EXPECT_EQ(total, static_cast<double>(g.size()));
  for (std::size_t a = 0; a < g.size(); ++a) {
    ASSERT_EQ(sym.orbit(a), sym.orbit(g.reflect(a, 1)));
    ASSERT_EQ(sym.orbit(a), sym.orbit(g.reflect(a, 2)));
  }
  std::vector<double> F(g.size(), 1.0);
  EXPECT_TRUE(VelocitySymmetry::invariant(g, F));
  F[g.index(0, 0, 1)] = 2.0;
  EXPECT_FALSE(VelocitySymmetry::invariant(g, F));
}

TEST(CollisionEngine, SymmetricEvaluationMatchesFull) {
  const auto& g = small_grid();
  SolverConfig cfg;
  const CollisionEngine engine(g, KernelSpec{1.0, 1.0}, cfg);
  const SlabMesh mesh(1.0, 4);
  RecipeParams prm;
  prm.amplitude = 0.9;
  const auto F = make_initial_field(g, WeightSpec{}, mesh, Recipe::large_amplitude, prm);
  const auto a = engine.evaluate(F, true, 1);
  const auto b = engine.evaluate(F, false, 2);
  for (std::size_t i = 0; i < a.R.size(); ++i) {
    ASSERT_NEAR(a.R[i], b.R[i], 1e-12 * (1.0 + b.R[i]));
    ASSERT_NEAR(a.S[i], b.S[i], 1e-12 * (1.0 + b.S[i]));
  }
}

TEST(CollisionEngine, MaxwellianIsFixedPoint) {
  const auto& g = small_grid();
  const CollisionEngine engine(g, KernelSpec{1.0, 1.0}, SolverConfig{});
  const SlabMesh mesh(1.0, 2);
  const auto F = make_initial_field(g, WeightSpec{}, mesh, Recipe::equilibrium, {});
  const auto st = engine.evaluate(F, true, 1);
  const auto mu = g.maxwellian_values();
  for (std::size_t a = 0; a < g.size(); ++a) ASSERT_NEAR(st.S[a], st.R[a] * mu[a], 1e-13 * st.S[a] + 1e-300);
}

TEST(Recipes, MassSymmetryAndAmplitude) {
  const auto& g = small_grid();
  const SlabMesh mesh(1.0, 16);
  const WeightSpec w;
  const auto eq = make_initial_field(g, w, mesh, Recipe::equilibrium, {});
  const double m0 = field_mass(g, eq);
  for (Recipe r : {Recipe::small_perturbation, Recipe::large_amplitude, Recipe::vacuum_hole}) {
    RecipeParams prm;
    if (r == Recipe::large_amplitude) prm.amplitude = 0.9;
    const auto F = make_initial_field(g, w, mesh, r, prm);
    EXPECT_NEAR(field_mass(g, F), m0, 1e-12 * m0) << to_string(r);
    for (std::size_t p = 0; p < mesh.points(); ++p) ASSERT_TRUE(VelocitySymmetry::invariant(g, F.at(p)));
    EXPECT_EQ(recipe_from_string(to_string(r)), r);
  }
  RecipeParams prm;
  prm.amplitude = 0.1;
  const auto sp = make_initial_field(g, w, mesh, Recipe::small_perturbation, prm);
  EXPECT_NEAR(distribution_norms(g, w, sp.values, mesh.volumes()).winf, 0.1, 0.1 * 0.05);
  EXPECT_FALSE(recipe_from_string("bogus"));
  prm.amplitude = 1.0;
  EXPECT_THROW(make_initial_field(g, w, mesh, Recipe::large_amplitude, prm), Error);
  prm.hole_radius = 2.0;
  EXPECT_THROW(make_initial_field(g, w, mesh, Recipe::vacuum_hole, prm), Error);
}

TEST(SolverConfig, Violations) {
  EXPECT_TRUE(SolverConfig{}.violations().empty());
  SolverConfig c;
  c.picard_tol = 0.0;
  c.T_end = -1.0;
  EXPECT_EQ(c.violations().size(), 2u);
}

TEST(SlabSolver, EquilibriumStaysFlat) {
  SolverConfig cfg;
  cfg.T_end = 0.2;
  const SlabSolver solver(small_grid(), KernelSpec{1.0, 1.0}, WeightSpec{}, cfg);
  const SlabMesh mesh(1.0, 8);
  const auto F0 = make_initial_field(small_grid(), WeightSpec{}, mesh, Recipe::equilibrium, {});
  const auto sum = solver.march_global(F0);
  ASSERT_GE(sum.rows.size(), 2u);
  EXPECT_NEAR(sum.rows.back().t, 0.2, 1e-12);
  for (const auto& r : sum.rows) EXPECT_LE(r.winf, 1e-8);
  for (const auto& s : sum.steps) EXPECT_LE(std::abs(s.mass_drift), 1e-12);
  EXPECT_EQ(sum.clipped, 0u);
}

TEST(SlabSolver, PerturbationConservesMassAndContracts) {
  SolverConfig cfg;
  cfg.T_end = 0.3;
  const SlabSolver solver(small_grid(), KernelSpec{1.0, 1.0}, WeightSpec{}, cfg);
  const SlabMesh mesh(1.0, 8);
  RecipeParams prm;
  prm.amplitude = 0.1;
  const auto F0 = make_initial_field(small_grid(), WeightSpec{}, mesh, Recipe::small_perturbation, prm);
  const auto sum = solver.march_global(F0);
  EXPECT_NEAR(sum.rows.back().mass, sum.rows.front().mass, 1e-12 * sum.rows.front().mass);
  for (const auto& s : sum.steps) {
    EXPECT_LT(s.max_contraction_ratio, 0.6);
    EXPECT_GE(s.min_F, -1e-12);
  }
}

TEST(SlabSolver, ThreadCountDoesNotChangeResults) {
  SolverConfig cfg;
  cfg.T_end = 0.1;
  const SlabMesh mesh(1.0, 8);
  RecipeParams prm;
  prm.amplitude = 0.1;
  const auto F0 = make_initial_field(small_grid(), WeightSpec{}, mesh, Recipe::small_perturbation, prm);
  const SlabSolver one(small_grid(), KernelSpec{1.0, 1.0}, WeightSpec{}, cfg);
  cfg.threads = 3;
  const SlabSolver three(small_grid(), KernelSpec{1.0, 1.0}, WeightSpec{}, cfg);
  const auto a = one.march_global(F0);
  const auto b = three.march_global(F0);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].winf, b.rows[i].winf);
    EXPECT_EQ(a.rows[i].l2, b.rows[i].l2);
    EXPECT_EQ(a.rows[i].mass, b.rows[i].mass);
  }
}
