#include <gtest/gtest.h>

#include <filesystem>

#include "kinetic/scenario.hpp"

using namespace kinetic;

namespace {

const char* kMinimal = R"(
[geometry]
shape = slab
[kernel]
kappa = 1
[initial]
recipe = equilibrium
)";

std::string config_error_of(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config_error);
    return e.what();
  }
  ADD_FAILURE() << "config accepted:\n" << text;
  return {};
}

}  // namespace

TEST(Scenario, MinimalConfigTakesDefaults) {
  const Scenario s = parse_scenario(kMinimal);
  EXPECT_EQ(s.geometry.shape, Shape::slab);
  EXPECT_EQ(s.geometry.cells, 32);
  EXPECT_EQ(s.velocity.radius, 6.0);
  EXPECT_EQ(s.velocity.spacing, 0.75);
  EXPECT_EQ(s.kernel.kappa, 1.0);
  EXPECT_EQ(s.solver, SolverConfig{});
  EXPECT_EQ(s.initial.recipe, Recipe::equilibrium);
  EXPECT_TRUE(s.march);
}

TEST(Scenario, RejectsOutOfRangeValues) {
  const std::string base = "[geometry]\nshape = slab\n[initial]\nrecipe = equilibrium\n";
  EXPECT_NE(config_error_of(base + "[kernel]\nkappa = 1.5\n").find("kappa"), std::string::npos);
  EXPECT_NE(config_error_of(base + "[kernel]\nkappa = 1\n[weight]\nvarpi = 0.05\n").find("varpi"), std::string::npos);
  EXPECT_NE(config_error_of(base + "[kernel]\nkappa = 1\n[solver]\npicard_tol = 0\n").find("picard_tol"),
            std::string::npos);
}

TEST(Scenario, RejectsUnknownNamesAndMissingKeys) {
  EXPECT_NE(config_error_of("[geometry]\nshape = slab\n[kernel]\nkappa = 1\n[initial]\nrecipe = whirlpool\n")
                .find("whirlpool"),
            std::string::npos);
  EXPECT_NE(config_error_of(std::string(kMinimal) + "[solver]\nbogus_key = 1\n").find("bogus_key"), std::string::npos);
  EXPECT_NE(config_error_of("[geometry]\nshape = slab\n[initial]\nrecipe = equilibrium\n").find("kappa"),
            std::string::npos);
  config_error_of("[geometry]\nshape = slab\n[kernel]\nkappa = one\n[initial]\nrecipe = equilibrium\n");
  config_error_of("not an ini file [");
}

TEST(Scenario, ListsEveryViolation) {
  const std::string msg = config_error_of(
      "[geometry]\nshape = slab\n[kernel]\nkappa = 2\n[weight]\nvarpi = 0.5\n[solver]\npicard_tol = -1\n"
      "[initial]\nrecipe = nope\n");
  for (const char* key : {"kappa", "varpi", "picard_tol", "nope"}) EXPECT_NE(msg.find(key), std::string::npos) << key;
}

TEST(Scenario, SerializationRoundTrips) {
  Scenario s = parse_scenario(kMinimal);
  s.seed = 987654321;
  s.solver.picard_tol = 1.0 / 3.0;
  s.verify.checks = {"mass", "positivity"};
  const Scenario back = parse_scenario(serialize_scenario(s));
  EXPECT_EQ(back, s);
  EXPECT_EQ(config_hash(back), config_hash(s));
  s.seed += 1;
  EXPECT_NE(config_hash(back), config_hash(s));
  EXPECT_EQ(config_hash(s).size(), 16u);
}

TEST(Scenario, ShippedScenariosLoadAndRoundTrip) {
  std::size_t count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(KINETIC_SCENARIO_DIR)) {
    if (entry.path().extension() != ".ini") continue;
    const Scenario s = load_scenario(entry.path().string());
    EXPECT_EQ(parse_scenario(serialize_scenario(s)), s) << entry.path();
    EXPECT_FALSE(s.verify.checks.empty()) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 10u);
}

TEST(Scenario, MissingFileIsConfigError) {
  try {
    load_scenario("/nonexistent/scenario.ini");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config_error);
  }
}
