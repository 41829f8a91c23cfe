#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "kinetic/collision.hpp"
#include "kinetic/error.hpp"
#include "kinetic/scenario.hpp"
#include "kinetic/solver.hpp"
#include "kinetic/verify.hpp"

#ifndef KINETIC_GIT_DESCRIBE
#define KINETIC_GIT_DESCRIBE "unknown"
#endif

namespace kinetic {

namespace fs = std::filesystem;

enum ExitCode : int { exit_pass = 0, exit_check_failed = 1, exit_config_error = 2, exit_runtime_abort = 3 };

inline int exit_code_for(ErrorKind kind) {
  return kind == ErrorKind::config_error ? exit_config_error : exit_runtime_abort;
}

// ---------------------------------------------------------------------------
// Run traces and their CSV form.

/// Per-row step data that does not fit the diagnostics columns. Row 0 is the
/// initial state (dt = 0, no sweeps).
struct StepRecord {
  double t = 0.0;
  double dt = 0.0;
  int iterations = 0;
  double mass_drift = 0.0;
  double min_density = 0.0;
  std::size_t clipped = 0;
};

struct RunTrace {
  std::vector<DiagnosticsRow> rows;
  std::vector<StepRecord> steps;
  bool projection = true;
  std::size_t rejected_steps = 0;
  double T_end = 0.0;
  double nu0 = 0.0;  // min of ν on the lattice used by the run
};

inline const char* kDiagnosticsHeader = "t,mass,l2,winf,gauss_l1v_sup,min_F,min_R_over_nu,contraction_ratio";
inline const char* kStepsHeader = "t,dt,iterations,mass_drift,min_density,clipped";

namespace detail {

inline std::vector<std::vector<double>> read_csv_numbers(const fs::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::incomplete_run, "missing " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != header)
    throw Error(ErrorKind::data_corrupt, path.string() + ": unexpected header");
  std::vector<std::vector<double>> out;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double x = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw Error(ErrorKind::data_corrupt, path.string() + ": bad number '" + cell + "'");
      values.push_back(x);
    }
    out.push_back(std::move(values));
  }
  if (out.empty()) throw Error(ErrorKind::incomplete_run, path.string() + " has no rows");
  return out;
}

}  // namespace detail

/// Writes rows with 17 significant digits so baselines compare exactly.
inline void write_diagnostics_csv(std::ostream& out, const std::vector<DiagnosticsRow>& rows, int every = 1) {
  out << kDiagnosticsHeader << '\n';
  char buf[512];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i % every != 0 && i + 1 != rows.size()) continue;
    const auto& r = rows[i];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t, r.mass, r.l2, r.winf,
                  r.gauss_l1v_sup, r.min_F, r.min_R_over_nu, r.contraction_ratio);
    out << buf;
  }
}

inline void write_steps_csv(std::ostream& out, const std::vector<StepRecord>& steps, int every = 1) {
  out << kStepsHeader << '\n';
  char buf[256];
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i % every != 0 && i + 1 != steps.size()) continue;
    const auto& s = steps[i];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d,%.17g,%.17g,%zu\n", s.t, s.dt, s.iterations, s.mass_drift,
                  s.min_density, s.clipped);
    out << buf;
  }
}

inline std::vector<DiagnosticsRow> read_diagnostics_csv(const fs::path& path) {
  std::vector<DiagnosticsRow> rows;
  for (const auto& v : detail::read_csv_numbers(path, kDiagnosticsHeader)) {
    if (v.size() != 8) throw Error(ErrorKind::data_corrupt, path.string() + ": expected 8 columns");
    rows.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]});
  }
  return rows;
}

inline std::vector<StepRecord> read_steps_csv(const fs::path& path) {
  std::vector<StepRecord> steps;
  for (const auto& v : detail::read_csv_numbers(path, kStepsHeader)) {
    if (v.size() != 6) throw Error(ErrorKind::data_corrupt, path.string() + ": expected 6 columns");
    steps.push_back({v[0], v[1], static_cast<int>(v[2]), v[3], v[4], static_cast<std::size_t>(v[5])});
  }
  return steps;
}

/// Reloads the trace written by a previous run in `dir`.
inline RunTrace load_trace(const fs::path& dir) {
  RunTrace tr;
  tr.rows = read_diagnostics_csv(dir / "diagnostics.csv");
  tr.steps = read_steps_csv(dir / "steps.csv");
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(ErrorKind::incomplete_run, "missing " + (dir / "manifest.json").string());
  const auto m = json::parse(in, nullptr, false);
  if (m.is_discarded() || !m.contains("march")) throw Error(ErrorKind::data_corrupt, "unreadable manifest");
  tr.projection = m["march"].value("conservation_projection", true);
  tr.rejected_steps = m["march"].value("rejected_steps", std::size_t{0});
  tr.T_end = m["march"].value("T_end", tr.rows.back().t);
  tr.nu0 = m["march"].value("nu0", 0.0);
  if (m.value("status", std::string()) == "aborted")
    throw Error(ErrorKind::incomplete_run, "the run in " + dir.string() + " aborted");
  return tr;
}

// ---------------------------------------------------------------------------
// Checks.

struct CheckResult {
  std::string name;
  bool passed = false;
  json report;
};

inline double trace_nu0(const Scenario& s, const RunTrace& tr) {
  if (tr.nu0 > 0.0) return tr.nu0;
  const auto nu = nu_table(VelocityGrid(s.velocity.radius, s.velocity.spacing), s.kernel).values;
  return *std::min_element(nu.begin(), nu.end());
}

inline CheckResult evaluate_trace_check(const std::string& name, const Scenario& s, const RunTrace& tr) {
  const auto& v = s.verify;
  const auto& rows = tr.rows;
  CheckResult out{name, false, json::object()};
  if (name == "equilibrium") {
    double max_winf = 0.0, min_F = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
      max_winf = std::max(max_winf, r.winf);
      min_F = std::min(min_F, r.min_F);
    }
    out.passed = max_winf <= v.equilibrium_tol && min_F >= 0.0;
    out.report = {{"max_winf", max_winf}, {"min_F", min_F}, {"tolerance", v.equilibrium_tol}};
  } else if (name == "mass") {
    double step_drift = 0.0, pre_projection = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      step_drift = std::max(step_drift, std::abs(rows[i].mass - rows[i - 1].mass) / rows[i - 1].mass);
    for (const auto& st : tr.steps) pre_projection = std::max(pre_projection, std::abs(st.mass_drift));
    const double total = std::abs(rows.back().mass - rows.front().mass) / rows.front().mass;
    const double duration = rows.back().t - rows.front().t;
    const double per_unit_time = duration > 0.0 ? total / duration : 0.0;
    out.passed = tr.projection ? step_drift <= v.projected_drift_tol : per_unit_time <= v.unprojected_drift_tol;
    out.report = {{"conservation_projection", tr.projection},
                  {"max_step_drift", step_drift},
                  {"max_pre_projection_step_drift", pre_projection},
                  {"total_drift", total},
                  {"drift_per_unit_time", per_unit_time},
                  {"tolerance", tr.projection ? v.projected_drift_tol : v.unprojected_drift_tol}};
  } else if (name == "positivity") {
    double min_F = std::numeric_limits<double>::infinity();
    std::size_t clipped = 0;
    for (const auto& r : rows) min_F = std::min(min_F, r.min_F);
    for (const auto& st : tr.steps) clipped += st.clipped;
    out.passed = min_F >= v.positivity_floor && clipped == 0;
    out.report = {{"min_F", min_F}, {"clipped", clipped}, {"floor", v.positivity_floor}};
  } else if (name == "contraction") {
    double worst = 0.0;
    int sweeps = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) worst = std::max(worst, rows[i].contraction_ratio);
    for (const auto& st : tr.steps) sweeps = std::max(sweeps, st.iterations);
    out.passed = worst <= v.contraction_max && sweeps <= v.sweeps_max && tr.rejected_steps == 0;
    out.report = {{"max_contraction_ratio", worst},
                  {"max_sweeps", sweeps},
                  {"rejected_steps", tr.rejected_steps},
                  {"contraction_max", v.contraction_max},
                  {"sweeps_max", v.sweeps_max}};
  } else if (name == "decay") {
    std::optional<double> below;
    for (const auto& r : rows)
      if (r.winf < s.solver.delta_target) {
        below = r.t;
        break;
      }
    const auto rep = fit_decay_rate(rows, v.fit_t_a, v.fit_t_b, trace_nu0(s, tr), below, v.rate_tolerance);
    out.passed = std::isfinite(rep.fitted_rate) && rep.fitted_rate > 0.0 && rep.r_squared >= v.decay_r2_min &&
                 (!v.require_envelope || rep.envelope_rate_met);
    out.report = rep.to_json();
    out.report["r2_min"] = v.decay_r2_min;
    out.report["require_envelope"] = v.require_envelope;
  } else if (name == "l2_growth") {
    const auto rep = check_l2_growth(rows);
    out.passed = !rep.violated && std::isfinite(rep.fitted_growth_constant);
    out.report = rep.to_json();
  } else if (name == "R_lower_bound") {
    const auto rep = check_R_lower_bound(rows, trace_nu0(s, tr), v.t_tilde_c, v.R_threshold, v.gauss_threshold);
    out.passed = rep.passed;
    out.report = rep.to_json();
  } else if (name == "relaxation") {
    std::optional<double> positive_at;
    for (const auto& st : tr.steps)
      if (st.min_density > 0.0) {
        positive_at = st.t;
        break;
      }
    const bool density_ok = positive_at && *positive_at <= v.density_by + 1e-12;
    const bool norm_ok = rows.back().winf < rows.front().winf;
    out.passed = density_ok && norm_ok;
    out.report = {{"density_positive_at", positive_at ? json(*positive_at) : json(nullptr)},
                  {"density_by", v.density_by},
                  {"winf_initial", rows.front().winf},
                  {"winf_final", rows.back().winf},
                  {"T_end", rows.back().t}};
  } else {
    throw Error(ErrorKind::config_error, "unknown trace check '" + name + "'");
  }
  return out;
}

inline CheckResult evaluate_standalone_check(const std::string& name, const Scenario& s) {
  const auto& v = s.verify;
  CheckResult out{name, false, json::object()};
  if (name == "kernel_bounds") {
    const auto rep = check_kernel_bounds(s.kernel, s.velocity.weight, s.velocity.radius, s.velocity.spacing,
                                         v.kernel_samples, s.seed, v.refine, {}, v.probe_sigma, v.violation_bound);
    out.passed = rep.passed;
    out.report = rep.to_json();
  } else if (name == "gain_bound") {
    const auto rep = check_gain_bound(s.kernel, s.velocity.weight, s.velocity.radius, s.velocity.spacing,
                                      v.gain_samples, s.seed, v.gain_basis, v.drift_bound, v.refine);
    out.passed = rep.passed;
    out.report = rep.to_json();
  } else if (name == "cycle_bound") {
    const auto rep = check_cycle_bound(s.geometry.domain(), v.cycle_T0, v.cycle_k_max, v.cycle_samples, s.seed, {},
                                       s.solver.threads, v.cycle_level, v.cycle_r2_min);
    out.passed = rep.passed;
    out.report = rep.to_json();
  } else if (name == "nullspace") {
    const CollisionOperator op(VelocityGrid(s.velocity.radius, s.velocity.spacing), s.kernel);
    const auto rep = check_equilibrium_nullspace(op, s.seed, v.nullspace_tol);
    out.passed = rep.passed;
    out.report = rep.to_json();
  } else {
    throw Error(ErrorKind::config_error, "unknown check '" + name + "'");
  }
  return out;
}

/// Runs one check; library errors (e.g. an undefined fit) fail the check and
/// are recorded in its report rather than aborting the run.
inline CheckResult run_check(const std::string& name, const Scenario& s, const RunTrace* trace) {
  CheckResult res;
  try {
    if (is_trace_check(name)) {
      if (!trace) throw Error(ErrorKind::incomplete_run, "check '" + name + "' needs a run trace");
      res = evaluate_trace_check(name, s, *trace);
    } else {
      res = evaluate_standalone_check(name, s);
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config_error) throw;
    res = {name, false, {{"error", e.what()}, {"error_kind", to_string(e.kind())}}};
  }
  res.report["check"] = name;
  res.report["passed"] = res.passed;
  res.report["seed"] = s.seed;
  res.report["grid"] = {{"radius", s.velocity.radius}, {"spacing", s.velocity.spacing}};
  res.report["config_hash"] = config_hash(s);
  return res;
}

// ---------------------------------------------------------------------------
// Orchestration.

struct RunOptions {
  fs::path out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

/// Default output directory: $KINETIC_OUT_DIR if set, else ./out.
inline fs::path default_out_dir() {
  if (const char* env = std::getenv("KINETIC_OUT_DIR"); env && *env) return env;
  return "out";
}

inline Scenario apply_overrides(Scenario s, const RunOptions& opt) {
  if (opt.seed) s.seed = *opt.seed;
  if (opt.threads) s.solver.threads = *opt.threads;
  return s;
}

/// Reads a scenario from an INI file or from the "config" field of a run
/// manifest, so a manifest can be replayed directly.
inline Scenario load_config(const fs::path& path) {
  if (path.extension() == ".json") {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::config_error, "cannot read " + path.string());
    const auto m = json::parse(in, nullptr, false);
    if (m.is_discarded() || !m.contains("config") || !m["config"].is_string())
      throw Error(ErrorKind::config_error, path.string() + " is not a run manifest");
    return parse_scenario(m["config"].get<std::string>());
  }
  return load_scenario(path.string());
}

struct RunOutcome {
  int exit_code = exit_pass;
  std::vector<CheckResult> checks;
  std::optional<RunTrace> trace;
  std::string error;
};

namespace detail {

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::invalid_input, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline void write_text(const fs::path& path, const std::string& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::invalid_input, "cannot write " + path.string());
  out << s;
}

inline json config_as_json(const Scenario& s) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(serialize_scenario(s));
  pt::read_ini(in, tree);
  json j = json::object();
  for (const auto& [section, body] : tree)
    for (const auto& [key, value] : body) j[section][key] = value.data();
  return j;
}

/// Slice of the last accepted field at the point of lowest density: the
/// density profile plus F along the v₁ axis there.
inline json field_dump(const VelocityGrid& grid, const DistributionField& F) {
  const std::size_t np = F.mesh.points();
  std::vector<double> density(np);
  std::size_t worst = 0;
  for (std::size_t p = 0; p < np; ++p) {
    const auto s = F.at(p);
    density[p] = grid.cell_volume() * pairwise_sum(s.size(), [&](std::size_t a) { return s[a]; });
    if (density[p] < density[worst]) worst = p;
  }
  const int n = grid.per_axis(), mid = n / 2;
  json axis = json::array();
  const auto s = F.at(worst);
  for (int i = 0; i < n; ++i) axis.push_back({grid.coordinate(i), s[grid.index(i, mid, mid)]});
  return {{"time", F.time},
          {"density", density},
          {"worst_point", worst},
          {"worst_position", F.mesh.position(worst)},
          {"min_F_at_worst", *std::min_element(s.begin(), s.end())},
          {"F_along_v1", axis}};
}

inline void write_checks(const fs::path& dir, const std::vector<CheckResult>& checks) {
  fs::create_directories(dir / "reports");
  for (const auto& c : checks) write_json(dir / "reports" / (c.name + ".json"), c.report);
}

}  // namespace detail

/// Marches the scenario (unless it is verify-only), runs its checks and
/// writes diagnostics.csv, steps.csv, reports/<check>.json and manifest.json.
inline RunOutcome run_scenario(Scenario s, const RunOptions& opt, std::ostream* log = nullptr) {
  s = apply_overrides(std::move(s), opt);
  RunOutcome outcome;
  const fs::path dir = opt.out_dir;
  fs::create_directories(dir);
  const auto started = std::chrono::steady_clock::now();
  const VelocityGrid grid(s.velocity.radius, s.velocity.spacing);
  json manifest{{"name", s.name},
                {"config_hash", config_hash(s)},
                {"seed", s.seed},
                {"threads", s.solver.threads},
                {"git_describe", KINETIC_GIT_DESCRIBE},
                {"grid",
                 {{"radius", grid.radius()},
                  {"spacing", grid.spacing()},
                  {"per_axis", grid.per_axis()},
                  {"nodes", grid.size()}}},
                {"config", serialize_scenario(s)},
                {"defaults", detail::config_as_json(s)}};

  if (s.march) {
    const SlabMesh mesh(s.geometry.half_width, s.geometry.cells);
    manifest["mesh"] = {{"half_width", mesh.half_width()}, {"cells", mesh.cells()}, {"dx", mesh.dx()}};
    RunTrace tr;
    tr.projection = s.solver.conservation_projection;
    tr.T_end = s.solver.T_end;
    const SlabSolver solver(grid, s.kernel, s.velocity.weight, s.solver);
    const auto F0 = make_initial_field(grid, s.velocity.weight, mesh, s.initial.recipe, s.initial.params);
    const double initial_density = solver.norms(F0).min_density;
    auto sink = [&](const DiagnosticsRow& row, const StepReport* rep) {
      tr.rows.push_back(row);
      if (rep) {
        tr.steps.push_back({row.t, rep->dt, rep->iteration_count, rep->mass_drift, rep->norms.min_density,
                            rep->clipped});
      } else {
        tr.steps.push_back({row.t, 0.0, 0, 0.0, initial_density, 0});
      }
      if (log && rep) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "t=%.4f winf=%.4e min_R/nu=%.4f sweeps=%d ratio=%.3f\n", row.t, row.winf,
                      row.min_R_over_nu, rep->iteration_count, row.contraction_ratio);
        *log << buf << std::flush;
      }
    };
    auto write_trace = [&] {
      std::ofstream d(dir / "diagnostics.csv", std::ios::binary), st(dir / "steps.csv", std::ios::binary);
      write_diagnostics_csv(d, tr.rows, s.output_every);
      write_steps_csv(st, tr.steps, s.output_every);
    };
    MarchSummary sum;
    try {
      sum = solver.march_global(F0, sink);
    } catch (const Error& e) {
      write_trace();
      json dump{{"error_kind", to_string(e.kind())}, {"message", e.what()}};
      if (solver.final_field()) dump["field"] = detail::field_dump(grid, *solver.final_field());
      detail::write_json(dir / "abort.json", dump);
      manifest["status"] = "aborted";
      manifest["exit_code"] = exit_runtime_abort;
      manifest["error"] = e.what();
      manifest["march"] = {{"conservation_projection", tr.projection}, {"T_end", tr.T_end}};
      detail::write_json(dir / "manifest.json", manifest);
      outcome.exit_code = exit_runtime_abort;
      outcome.error = e.what();
      return outcome;
    }
    tr.rejected_steps = sum.rejected_steps;
    tr.nu0 = solver.engine().nu0();
    write_trace();
    manifest["march"] = {{"steps", sum.steps.size()},
                         {"local_solves", sum.local_solves},
                         {"rejected_steps", sum.rejected_steps},
                         {"clipped", sum.clipped},
                         {"dt_cap", sum.dt_cap},
                         {"initial_mass", sum.initial_mass},
                         {"sup_winf", sum.sup_winf},
                         {"below_delta_time", sum.below_delta_time ? json(*sum.below_delta_time) : json(nullptr)},
                         {"nu0", solver.engine().nu0()},
                         {"conservation_projection", tr.projection},
                         {"T_end", tr.T_end}};
    outcome.trace = std::move(tr);
  }

  for (const auto& name : s.verify.checks) {
    outcome.checks.push_back(run_check(name, s, outcome.trace ? &*outcome.trace : nullptr));
    if (log) *log << name << ": " << (outcome.checks.back().passed ? "pass" : "FAIL") << '\n';
  }
  detail::write_checks(dir, outcome.checks);
  const bool ok = std::all_of(outcome.checks.begin(), outcome.checks.end(), [](const auto& c) { return c.passed; });
  outcome.exit_code = ok ? exit_pass : exit_check_failed;
  json checks = json::object();
  for (const auto& c : outcome.checks) checks[c.name] = c.passed;
  manifest["checks"] = checks;
  manifest["status"] = ok ? "pass" : "check-failed";
  manifest["exit_code"] = outcome.exit_code;
  manifest["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  detail::write_json(dir / "manifest.json", manifest);
  return outcome;
}

/// Re-runs the scenario's checks without marching; trace checks read the
/// artifacts of an earlier run in the output directory.
inline RunOutcome verify_scenario(Scenario s, const RunOptions& opt, std::ostream* log = nullptr) {
  s = apply_overrides(std::move(s), opt);
  RunOutcome outcome;
  if (s.needs_trace()) outcome.trace = load_trace(opt.out_dir);
  fs::create_directories(opt.out_dir);
  for (const auto& name : s.verify.checks) {
    outcome.checks.push_back(run_check(name, s, outcome.trace ? &*outcome.trace : nullptr));
    if (log) *log << name << ": " << (outcome.checks.back().passed ? "pass" : "FAIL") << '\n';
  }
  detail::write_checks(opt.out_dir, outcome.checks);
  const bool ok = std::all_of(outcome.checks.begin(), outcome.checks.end(), [](const auto& c) { return c.passed; });
  outcome.exit_code = ok ? exit_pass : exit_check_failed;
  return outcome;
}

/// Cycle check alone, with a p_k table on `log`.
inline RunOutcome cycles_scenario(Scenario s, const RunOptions& opt, std::ostream* log = nullptr) {
  s = apply_overrides(std::move(s), opt);
  RunOutcome outcome;
  outcome.checks.push_back(run_check("cycle_bound", s, nullptr));
  const auto& rep = outcome.checks.back().report;
  if (log && rep.contains("sup_p_k")) {
    *log << "k,sup_p_k\n";
    const auto& p = rep["sup_p_k"];
    for (std::size_t k = 0; k < p.size(); ++k) *log << (k + 1) << ',' << p[k].get<double>() << '\n';
  }
  fs::create_directories(opt.out_dir);
  detail::write_checks(opt.out_dir, outcome.checks);
  outcome.exit_code = outcome.checks.back().passed ? exit_pass : exit_check_failed;
  return outcome;
}

// ---------------------------------------------------------------------------
// Plot data.

struct PlotPoint {
  double t = 0.0;
  std::string series;
  double value = 0.0;
};

/// Long-form (t, series, value) table of the norm traces of a run plus the
/// fitted envelopes whose reports exist in the run directory.
inline std::vector<PlotPoint> plot_points(const fs::path& run_dir) {
  const auto rows = read_diagnostics_csv(run_dir / "diagnostics.csv");
  std::vector<PlotPoint> out;
  for (const auto& r : rows) {
    out.push_back({r.t, "winf", r.winf});
    out.push_back({r.t, "l2", r.l2});
    out.push_back({r.t, "gauss_l1v_sup", r.gauss_l1v_sup});
  }
  auto report = [&](const char* name) -> std::optional<json> {
    std::ifstream in(run_dir / "reports" / (std::string(name) + ".json"));
    if (!in) return std::nullopt;
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
  };
  if (auto d = report("decay"); d && d->contains("fitted_rate")) {
    const double rate = (*d)["fitted_rate"], pre = (*d)["prefactor"];
    const double env_rate = (*d)["envelope_rate"], env_pre = (*d)["envelope_prefactor"];
    const double t_a = (*d)["fit_window"][0], t_b = (*d)["fit_window"][1];
    for (const auto& r : rows) {
      if (r.t >= t_a - 1e-12 && r.t <= t_b + 1e-12) out.push_back({r.t, "winf_fit", pre * std::exp(-rate * r.t)});
      out.push_back({r.t, "winf_linear_envelope", env_pre * std::exp(-env_rate * r.t)});
    }
  }
  if (auto g = report("l2_growth"); g && g->contains("fitted_growth_constant") && !rows.empty()) {
    const double c = (*g)["fitted_growth_constant"], M = (*g)["Mbar"];
    for (const auto& r : rows)
      out.push_back({r.t, "l2_bound", rows.front().l2 * std::exp(2.0 * c * M * (r.t - rows.front().t))});
  }
  return out;
}

/// Writes plot.csv into the run directory; nothing is written if the run
/// artifacts are missing.
inline fs::path emit_plot_data(const fs::path& run_dir) {
  const auto points = plot_points(run_dir);
  std::ostringstream o;
  o << "t,series_name,value\n";
  char buf[128];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g\n", p.t, p.series.c_str(), p.value);
    o << buf;
  }
  const fs::path path = run_dir / "plot.csv";
  detail::write_text(path, o.str());
  return path;
}

}  // namespace kinetic
