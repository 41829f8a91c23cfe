#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "kinetic/cli.hpp"

using namespace kinetic;

namespace {

const char* kSmallRun = R"(
[cli]
name = small
seed = 5
[geometry]
shape = slab
cells = 8
[kernel]
kappa = 1
[velocity]
radius = 4.5
spacing = 0.75
[solver]
T_end = 0.1
[initial]
recipe = equilibrium
[verify]
checks = equilibrium, mass, positivity, contraction, l2_growth
)";

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("kinetic_test_cli_" + name);
  fs::remove_all(d);
  return d;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KINETIC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Csv, DiagnosticsRoundTripAtFullPrecision) {
  const fs::path dir = fresh_dir("csv");
  fs::create_directories(dir);
  std::vector<DiagnosticsRow> rows(3);
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i] = {0.1 * i, 1.0 / 3.0, 2.0 / 7.0, 1e-300, std::sqrt(2.0), -1e-13, 0.987654321987654321, 0.1 + i};
  {
    std::ofstream out(dir / "diagnostics.csv", std::ios::binary);
    write_diagnostics_csv(out, rows);
  }
  const auto text = read_file(dir / "diagnostics.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), kDiagnosticsHeader);
  const auto back = read_diagnostics_csv(dir / "diagnostics.csv");
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].t, rows[i].t);
    EXPECT_EQ(back[i].mass, rows[i].mass);
    EXPECT_EQ(back[i].l2, rows[i].l2);
    EXPECT_EQ(back[i].winf, rows[i].winf);
    EXPECT_EQ(back[i].gauss_l1v_sup, rows[i].gauss_l1v_sup);
    EXPECT_EQ(back[i].min_F, rows[i].min_F);
    EXPECT_EQ(back[i].min_R_over_nu, rows[i].min_R_over_nu);
    EXPECT_EQ(back[i].contraction_ratio, rows[i].contraction_ratio);
  }
}

TEST(Csv, MissingFileIsIncompleteRun) {
  try {
    read_diagnostics_csv(fresh_dir("missing") / "diagnostics.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::incomplete_run);
  }
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ErrorKind::config_error), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::positivity_violation), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::incomplete_run), 3);
}

TEST(RunScenario, WritesArtifactsAndPasses) {
  const fs::path dir = fresh_dir("run");
  const auto out = run_scenario(parse_scenario(kSmallRun), {dir, std::nullopt, std::nullopt});
  EXPECT_EQ(out.exit_code, exit_pass);
  ASSERT_TRUE(out.trace);
  for (const char* f : {"diagnostics.csv", "steps.csv", "manifest.json", "reports/mass.json", "reports/l2_growth.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto m = json::parse(read_file(dir / "manifest.json"));
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(m["config_hash"], config_hash(parse_scenario(kSmallRun)));
  EXPECT_TRUE(m.contains("git_describe"));
  EXPECT_EQ(m["grid"]["nodes"], 13 * 13 * 13);
  EXPECT_EQ(m["status"], "pass");
  const auto rep = json::parse(read_file(dir / "reports" / "mass.json"));
  for (const char* key : {"seed", "grid", "config_hash", "passed"}) EXPECT_TRUE(rep.contains(key)) << key;

  // The manifest replays to the same configuration.
  const Scenario replay = load_config(dir / "manifest.json");
  EXPECT_EQ(config_hash(replay), m["config_hash"]);

  // verify reuses the run directory.
  const auto ver = verify_scenario(parse_scenario(kSmallRun), {dir, std::nullopt, std::nullopt});
  EXPECT_EQ(ver.exit_code, exit_pass);
}

TEST(RunScenario, SeedOverrideChangesHash) {
  const Scenario s = parse_scenario(kSmallRun);
  const Scenario o = apply_overrides(s, {"out", 99u, 2u});
  EXPECT_EQ(o.seed, 99u);
  EXPECT_EQ(o.solver.threads, 2u);
  EXPECT_NE(config_hash(o), config_hash(s));
}

TEST(VerifyScenario, StandaloneCheckWritesOnlyReports) {
  const fs::path dir = fresh_dir("standalone");
  const Scenario s = parse_scenario(R"(
[cli]
march = false
seed = 12345
[geometry]
shape = unit_ball
[kernel]
kappa = 1
[verify]
checks = cycle_bound
cycle_samples = 2000
cycle_k_max = 20
)");
  const auto out = verify_scenario(s, {dir, std::nullopt, std::nullopt});
  EXPECT_TRUE(fs::exists(dir / "reports" / "cycle_bound.json"));
  EXPECT_FALSE(fs::exists(dir / "diagnostics.csv"));
  EXPECT_FALSE(fs::exists(dir / "plot.csv"));
  EXPECT_TRUE(out.exit_code == exit_pass || out.exit_code == exit_check_failed);
}

TEST(VerifyScenario, TraceCheckWithoutRunIsIncomplete) {
  const fs::path dir = fresh_dir("norun");
  try {
    verify_scenario(parse_scenario(kSmallRun), {dir, std::nullopt, std::nullopt});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::incomplete_run);
  }
}

TEST(PlotData, EmptyDirectoryWritesNothing) {
  const fs::path dir = fresh_dir("plot_empty");
  fs::create_directories(dir);
  EXPECT_THROW(emit_plot_data(dir), Error);
  EXPECT_FALSE(fs::exists(dir / "plot.csv"));
}

TEST(PlotData, SeriesAndEnvelopes) {
  const fs::path dir = fresh_dir("plot");
  fs::create_directories(dir / "reports");
  std::vector<DiagnosticsRow> rows;
  for (int i = 0; i <= 10; ++i) {
    DiagnosticsRow r;
    r.t = 0.1 * i;
    r.winf = std::exp(-r.t);
    r.l2 = 0.5 * std::exp(-r.t);
    rows.push_back(r);
  }
  {
    std::ofstream out(dir / "diagnostics.csv", std::ios::binary);
    write_diagnostics_csv(out, rows);
  }
  auto series = [&] {
    std::set<std::string> names;
    std::size_t count = 0;
    for (const auto& p : plot_points(dir)) {
      names.insert(p.series);
      ++count;
    }
    return std::pair{names, count};
  };
  auto [names, count] = series();
  EXPECT_EQ(count, 3 * rows.size());
  EXPECT_EQ(names, (std::set<std::string>{"winf", "l2", "gauss_l1v_sup"}));

  const auto decay = fit_decay_rate(rows, 0.2, 0.8, 2.0);
  std::ofstream(dir / "reports" / "decay.json") << decay.to_json().dump();
  std::tie(names, count) = series();
  EXPECT_TRUE(names.count("winf_fit"));
  EXPECT_TRUE(names.count("winf_linear_envelope"));

  const auto path = emit_plot_data(dir);
  const auto text = read_file(path);
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,series_name,value");
}

TEST(Executable, ExitCodes) {
  const fs::path dir = fresh_dir("exe");
  fs::create_directories(dir);
  const fs::path cfg = dir / "small.ini";
  std::ofstream(cfg) << kSmallRun;
  EXPECT_EQ(run_cli("run --config " + cfg.string() + " --out-dir " + (dir / "ok").string()), 0);
  EXPECT_EQ(run_cli("plot-data --out-dir " + (dir / "ok").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "ok" / "plot.csv"));

  std::ofstream(dir / "bad.ini") << "[geometry]\nshape = slab\n[kernel]\nkappa = 3\n[initial]\nrecipe = equilibrium\n";
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.ini").string() + " --out-dir " + (dir / "bad").string()), 2);
  EXPECT_EQ(run_cli("run --out-dir " + (dir / "x").string()), 2);
  EXPECT_EQ(run_cli("plot-data --out-dir " + (dir / "nothing").string()), 3);

  // Decay is undefined on an equilibrium run, whose norm is zero in the fit window.
  std::string failing = kSmallRun;
  failing.replace(failing.find("checks = "), std::string("checks = ").size(), "checks = decay, ");
  std::ofstream(dir / "fail.ini") << failing;
  EXPECT_EQ(run_cli("run --config " + (dir / "fail.ini").string() + " --out-dir " + (dir / "fail").string()), 1);
}

TEST(Executable, EnvironmentSetsDefaultOutDir) {
  const fs::path dir = fresh_dir("env");
  fs::create_directories(dir);
  std::ofstream(dir / "small.ini") << kSmallRun;
  const std::string cmd = "KINETIC_OUT_DIR=" + (dir / "from_env").string() + " " + KINETIC_CLI_PATH +
                          " run -q --config " + (dir / "small.ini").string() + " > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "from_env" / "manifest.json"));
}
