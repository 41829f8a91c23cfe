#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kinetic/error.hpp"
#include "kinetic/geometry.hpp"
#include "kinetic/kernel.hpp"
#include "kinetic/solver.hpp"
#include "kinetic/velocity.hpp"

namespace kinetic {

/// Names accepted in verify.checks. The first group reads a solver trace, the
/// second is standalone.
inline const std::vector<std::string>& trace_checks() {
  static const std::vector<std::string> names{"equilibrium", "mass",       "positivity",    "contraction",
                                              "decay",       "l2_growth",  "R_lower_bound", "relaxation"};
  return names;
}

inline const std::vector<std::string>& standalone_checks() {
  static const std::vector<std::string> names{"kernel_bounds", "gain_bound", "cycle_bound", "nullspace"};
  return names;
}

inline bool is_trace_check(const std::string& name) {
  const auto& t = trace_checks();
  return std::find(t.begin(), t.end(), name) != t.end();
}

inline bool is_known_check(const std::string& name) {
  const auto& s = standalone_checks();
  return is_trace_check(name) || std::find(s.begin(), s.end(), name) != s.end();
}

struct GeometrySpec {
  Shape shape = Shape::slab;
  double half_width = 1.0;
  int cells = 32;

  Domain domain() const { return shape == Shape::slab ? Domain::slab(half_width) : Domain::unit_ball(); }
  bool operator==(const GeometrySpec&) const = default;
};

struct VelocitySpec {
  double radius = 6.0;
  double spacing = 0.75;
  WeightSpec weight;
  bool theorem_mode = true;

  bool operator==(const VelocitySpec&) const = default;
};

struct InitialSpec {
  Recipe recipe = Recipe::equilibrium;
  RecipeParams params;

  bool operator==(const InitialSpec&) const = default;
};

/// Thresholds and sampling sizes of the checks.
struct VerifySpec {
  std::vector<std::string> checks;
  // equilibrium / mass / positivity / contraction
  double equilibrium_tol = 1e-8;
  double projected_drift_tol = 1e-12;   // per step, projection on
  double unprojected_drift_tol = 1e-5;  // per unit time, projection off
  double positivity_floor = -1e-12;
  double contraction_max = 0.6;
  int sweeps_max = 30;
  // decay
  double fit_t_a = 0.5;
  double fit_t_b = 2.0;
  double decay_r2_min = 0.95;
  bool require_envelope = false;
  double rate_tolerance = 0.1;
  // R lower bound / relaxation
  double t_tilde_c = 4.0;
  double R_threshold = 0.5;
  double gauss_threshold = 1.0;
  double density_by = 0.5;
  // standalone checks
  std::size_t kernel_samples = 200;
  double probe_sigma = 0.75;
  double violation_bound = 0.05;
  std::size_t gain_samples = 1000;
  std::size_t gain_basis = 12;
  double drift_bound = 0.1;
  bool refine = true;
  double cycle_T0 = 1.0;
  std::size_t cycle_k_max = 50;
  std::size_t cycle_samples = 100000;
  double cycle_level = 0.01;
  double cycle_r2_min = 0.9;
  double nullspace_tol = 1e-3;

  bool operator==(const VerifySpec&) const = default;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  bool march = true;
  int output_every = 1;
  GeometrySpec geometry;
  KernelSpec kernel;
  VelocitySpec velocity;
  SolverConfig solver;
  InitialSpec initial;
  VerifySpec verify;

  bool operator==(const Scenario&) const = default;

  bool needs_trace() const {
    return std::any_of(verify.checks.begin(), verify.checks.end(), is_trace_check);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Reads typed keys out of an INI tree, collecting every problem instead of
/// stopping at the first, and remembers which keys were consumed.
class KeyReader {
 public:
  KeyReader(const boost::property_tree::ptree& tree, std::vector<std::string>& errors)
      : tree_(tree), errors_(errors) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key, bool required) {
    const std::string path = section + "." + key;
    used_.insert(path);
    const auto sec = tree_.get_child_optional(section);
    const auto val = sec ? sec->get_optional<std::string>(key) : boost::none;
    if (!val) {
      if (required) errors_.push_back("missing required key " + path);
      return std::nullopt;
    }
    return trim(*val);
  }

  void get(const std::string& section, const std::string& key, double& out, bool required = false) {
    if (auto s = raw(section, key, required)) {
      double x = 0.0;
      const auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), x);
      if (ec != std::errc() || p != s->data() + s->size()) bad(section, key, *s, "a number");
      else out = x;
    }
  }

  template <class Int>
    requires std::is_integral_v<Int>
  void get(const std::string& section, const std::string& key, Int& out, bool required = false) {
    if (auto s = raw(section, key, required)) {
      Int x{};
      const auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), x);
      if (ec != std::errc() || p != s->data() + s->size()) bad(section, key, *s, "an integer");
      else out = x;
    }
  }

  void get(const std::string& section, const std::string& key, bool& out, bool required = false) {
    if (auto s = raw(section, key, required)) {
      if (*s == "true" || *s == "1" || *s == "yes") out = true;
      else if (*s == "false" || *s == "0" || *s == "no") out = false;
      else bad(section, key, *s, "a boolean");
    }
  }

  void get(const std::string& section, const std::string& key, std::string& out, bool required = false) {
    if (auto s = raw(section, key, required)) out = *s;
  }

  /// Keys present in the tree that no reader asked for.
  std::vector<std::string> unknown_keys() const {
    std::vector<std::string> out;
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) {
        out.push_back(section);
        continue;
      }
      for (const auto& [key, value] : body)
        if (!used_.count(section + "." + key)) out.push_back(section + "." + key);
    }
    return out;
  }

 private:
  void bad(const std::string& section, const std::string& key, const std::string& value, const char* what) {
    errors_.push_back(section + "." + key + " = '" + value + "' is not " + what);
  }

  const boost::property_tree::ptree& tree_;
  std::vector<std::string>& errors_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Parses INI text into a fully validated scenario. Throws config_error
/// listing every violation found.
inline Scenario parse_scenario(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::config_error, std::string("malformed config: ") + e.message() + " (line " +
                                             std::to_string(e.line()) + ")");
  }
  std::vector<std::string> errors;
  detail::KeyReader r(tree, errors);
  Scenario s;

  r.get("cli", "name", s.name);
  r.get("cli", "seed", s.seed);
  r.get("cli", "march", s.march);
  r.get("cli", "output_every", s.output_every);

  std::string shape;
  if (auto v = r.raw("geometry", "shape", true)) {
    shape = *v;
    if (shape == "slab") s.geometry.shape = Shape::slab;
    else if (shape == "unit_ball") s.geometry.shape = Shape::unit_ball;
    else errors.push_back("geometry.shape = '" + shape + "' is not one of slab, unit_ball");
  }
  r.get("geometry", "half_width", s.geometry.half_width);
  r.get("geometry", "cells", s.geometry.cells);

  r.get("kernel", "kappa", s.kernel.kappa, true);
  r.get("kernel", "b0", s.kernel.b0);

  r.get("velocity", "radius", s.velocity.radius);
  r.get("velocity", "spacing", s.velocity.spacing);
  r.get("weight", "rho", s.velocity.weight.rho);
  r.get("weight", "beta", s.velocity.weight.beta);
  r.get("weight", "varpi", s.velocity.weight.varpi);
  r.get("weight", "theorem_mode", s.velocity.theorem_mode);

  auto& c = s.solver;
  r.get("solver", "dt", c.dt);
  r.get("solver", "picard_tol", c.picard_tol);
  r.get("solver", "picard_max_iters", c.picard_max_iters);
  r.get("solver", "C_hat_rho", c.C_hat_rho);
  r.get("solver", "delta_target", c.delta_target);
  r.get("solver", "M0_cap", c.M0_cap);
  r.get("solver", "T_end", c.T_end);
  r.get("solver", "conservation_projection", c.conservation_projection);
  r.get("solver", "transit_fraction", c.transit_fraction);
  r.get("solver", "max_halvings", c.max_halvings);
  std::string mode = "nonlinear";
  r.get("solver", "mode", mode);
  if (mode == "nonlinear") c.mode = CollisionMode::nonlinear;
  else if (mode == "linear") c.mode = CollisionMode::linear;
  else errors.push_back("solver.mode = '" + mode + "' is not one of nonlinear, linear");
  r.get("solver", "equilibrium_correction", c.equilibrium_correction);
  r.get("solver", "collision_mass_fix", c.collision_mass_fix);
  r.get("solver", "use_symmetry", c.use_symmetry);
  r.get("solver", "gain_line_step", c.gain_line_step);
  r.get("solver", "threads", c.threads);

  if (auto v = r.raw("initial", "recipe", s.march)) {
    if (auto rec = recipe_from_string(*v)) s.initial.recipe = *rec;
    else errors.push_back("unknown recipe '" + *v + "'");
  }
  r.get("initial", "amplitude", s.initial.params.amplitude);
  r.get("initial", "hole_radius", s.initial.params.hole_radius);
  r.get("initial", "fill_fraction", s.initial.params.fill_fraction);

  auto& v = s.verify;
  if (auto list = r.raw("verify", "checks", false)) v.checks = detail::split_list(*list);
  r.get("verify", "equilibrium_tol", v.equilibrium_tol);
  r.get("verify", "projected_drift_tol", v.projected_drift_tol);
  r.get("verify", "unprojected_drift_tol", v.unprojected_drift_tol);
  r.get("verify", "positivity_floor", v.positivity_floor);
  r.get("verify", "contraction_max", v.contraction_max);
  r.get("verify", "sweeps_max", v.sweeps_max);
  r.get("verify", "fit_t_a", v.fit_t_a);
  r.get("verify", "fit_t_b", v.fit_t_b);
  r.get("verify", "decay_r2_min", v.decay_r2_min);
  r.get("verify", "require_envelope", v.require_envelope);
  r.get("verify", "rate_tolerance", v.rate_tolerance);
  r.get("verify", "t_tilde_c", v.t_tilde_c);
  r.get("verify", "R_threshold", v.R_threshold);
  r.get("verify", "gauss_threshold", v.gauss_threshold);
  r.get("verify", "density_by", v.density_by);
  r.get("verify", "kernel_samples", v.kernel_samples);
  r.get("verify", "probe_sigma", v.probe_sigma);
  r.get("verify", "violation_bound", v.violation_bound);
  r.get("verify", "gain_samples", v.gain_samples);
  r.get("verify", "gain_basis", v.gain_basis);
  r.get("verify", "drift_bound", v.drift_bound);
  r.get("verify", "refine", v.refine);
  r.get("verify", "cycle_T0", v.cycle_T0);
  r.get("verify", "cycle_k_max", v.cycle_k_max);
  r.get("verify", "cycle_samples", v.cycle_samples);
  r.get("verify", "cycle_level", v.cycle_level);
  r.get("verify", "cycle_r2_min", v.cycle_r2_min);
  r.get("verify", "nullspace_tol", v.nullspace_tol);

  for (const auto& k : r.unknown_keys()) errors.push_back("unknown key " + k);

  // Range validation.
  if (s.output_every < 1) errors.push_back("cli.output_every must be >= 1");
  if (!(s.geometry.half_width > 0.0)) errors.push_back("geometry.half_width must be > 0");
  if (s.geometry.cells < 2) errors.push_back("geometry.cells must be >= 2");
  if (s.march && s.geometry.shape != Shape::slab) errors.push_back("the solver marches the slab only (geometry.shape)");
  for (auto& e : s.kernel.violations()) errors.push_back(e);
  for (auto& e : s.velocity.weight.violations(s.velocity.theorem_mode)) errors.push_back(e);
  if (!(s.velocity.radius > 0.0 && s.velocity.spacing > 0.0)) {
    errors.push_back("velocity.radius and velocity.spacing must be > 0");
  } else {
    const double cells = 2.0 * s.velocity.radius / s.velocity.spacing;
    if (std::abs(cells - std::round(cells)) > 1e-9 * cells || cells < 2.0)
      errors.push_back("2*velocity.radius must be a multiple of velocity.spacing");
  }
  for (auto& e : c.violations()) errors.push_back(e);
  if (c.mode == CollisionMode::nonlinear && s.kernel.kappa == 1.0 && c.gain_line_step <= 0.0)
    errors.push_back("solver.gain_line_step must be > 0");
  const auto& p = s.initial.params;
  if (s.initial.recipe == Recipe::large_amplitude && !(p.amplitude >= 0.0 && p.amplitude < 1.0))
    errors.push_back("initial.amplitude must lie in [0, 1) for large-amplitude");
  if (s.initial.recipe == Recipe::small_perturbation && !(p.amplitude > 0.0))
    errors.push_back("initial.amplitude must be > 0 for small-perturbation");
  if (s.initial.recipe == Recipe::vacuum_hole &&
      !(p.hole_radius > 0.0 && p.hole_radius < s.geometry.half_width))
    errors.push_back("initial.hole_radius must lie in (0, geometry.half_width)");
  if (!(p.fill_fraction >= 0.0 && p.fill_fraction < 1.0)) errors.push_back("initial.fill_fraction must lie in [0, 1)");
  for (const auto& name : v.checks) {
    if (!is_known_check(name)) errors.push_back("unknown check '" + name + "'");
    else if (!s.march && is_trace_check(name))
      errors.push_back("check '" + name + "' needs a march (cli.march = false)");
  }
  if (!(v.fit_t_b > v.fit_t_a && v.fit_t_a >= 0.0)) errors.push_back("verify.fit_t_b must exceed verify.fit_t_a >= 0");
  if (!(v.t_tilde_c > 0.0)) errors.push_back("verify.t_tilde_c must be > 0");
  if (!(v.drift_bound > 0.0)) errors.push_back("verify.drift_bound must be > 0");
  if (!(v.cycle_T0 > 0.0)) errors.push_back("verify.cycle_T0 must be > 0");
  if (v.cycle_k_max < 1 || v.cycle_samples < 1) errors.push_back("verify.cycle_k_max and cycle_samples must be >= 1");
  if (v.gain_basis < 1) errors.push_back("verify.gain_basis must be >= 1");
  if (!(v.probe_sigma > 0.0)) errors.push_back("verify.probe_sigma must be > 0");
  if (!(v.nullspace_tol > 0.0)) errors.push_back("verify.nullspace_tol must be > 0");

  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " violation(s):";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw Error(ErrorKind::config_error, msg);
  }
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config_error, "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

/// Canonical INI text with every key spelled out; parse_scenario inverts it.
inline std::string serialize_scenario(const Scenario& s) {
  using detail::format_double;
  std::ostringstream o;
  auto b = [](bool x) { return x ? "true" : "false"; };
  o << "[cli]\n"
    << "name = " << s.name << "\nseed = " << s.seed << "\nmarch = " << b(s.march)
    << "\noutput_every = " << s.output_every << "\n\n";
  o << "[geometry]\nshape = " << (s.geometry.shape == Shape::slab ? "slab" : "unit_ball")
    << "\nhalf_width = " << format_double(s.geometry.half_width) << "\ncells = " << s.geometry.cells << "\n\n";
  o << "[kernel]\nkappa = " << format_double(s.kernel.kappa) << "\nb0 = " << format_double(s.kernel.b0)
    << "\n\n";
  const auto& w = s.velocity.weight;
  o << "[velocity]\nradius = " << format_double(s.velocity.radius)
    << "\nspacing = " << format_double(s.velocity.spacing) << "\n\n[weight]\nrho = " << format_double(w.rho)
    << "\nbeta = " << format_double(w.beta) << "\nvarpi = " << format_double(w.varpi)
    << "\ntheorem_mode = " << b(s.velocity.theorem_mode) << "\n\n";
  const auto& c = s.solver;
  o << "[solver]\ndt = " << format_double(c.dt) << "\npicard_tol = " << format_double(c.picard_tol)
    << "\npicard_max_iters = " << c.picard_max_iters << "\nC_hat_rho = " << format_double(c.C_hat_rho)
    << "\ndelta_target = " << format_double(c.delta_target) << "\nM0_cap = " << format_double(c.M0_cap)
    << "\nT_end = " << format_double(c.T_end) << "\nconservation_projection = " << b(c.conservation_projection)
    << "\ntransit_fraction = " << format_double(c.transit_fraction) << "\nmax_halvings = " << c.max_halvings
    << "\nmode = " << (c.mode == CollisionMode::linear ? "linear" : "nonlinear")
    << "\nequilibrium_correction = " << b(c.equilibrium_correction)
    << "\ncollision_mass_fix = " << b(c.collision_mass_fix) << "\nuse_symmetry = " << b(c.use_symmetry)
    << "\ngain_line_step = " << format_double(c.gain_line_step) << "\nthreads = " << c.threads << "\n\n";
  const auto& p = s.initial.params;
  o << "[initial]\nrecipe = " << to_string(s.initial.recipe) << "\namplitude = " << format_double(p.amplitude)
    << "\nhole_radius = " << format_double(p.hole_radius) << "\nfill_fraction = " << format_double(p.fill_fraction)
    << "\n\n";
  const auto& v = s.verify;
  std::string checks;
  for (std::size_t i = 0; i < v.checks.size(); ++i) checks += (i ? ", " : "") + v.checks[i];
  o << "[verify]\nchecks = " << checks << "\nequilibrium_tol = " << format_double(v.equilibrium_tol)
    << "\nprojected_drift_tol = " << format_double(v.projected_drift_tol)
    << "\nunprojected_drift_tol = " << format_double(v.unprojected_drift_tol)
    << "\npositivity_floor = " << format_double(v.positivity_floor)
    << "\ncontraction_max = " << format_double(v.contraction_max) << "\nsweeps_max = " << v.sweeps_max
    << "\nfit_t_a = " << format_double(v.fit_t_a) << "\nfit_t_b = " << format_double(v.fit_t_b)
    << "\ndecay_r2_min = " << format_double(v.decay_r2_min) << "\nrequire_envelope = " << b(v.require_envelope)
    << "\nrate_tolerance = " << format_double(v.rate_tolerance) << "\nt_tilde_c = " << format_double(v.t_tilde_c)
    << "\nR_threshold = " << format_double(v.R_threshold)
    << "\ngauss_threshold = " << format_double(v.gauss_threshold)
    << "\ndensity_by = " << format_double(v.density_by) << "\nkernel_samples = " << v.kernel_samples
    << "\nprobe_sigma = " << format_double(v.probe_sigma)
    << "\nviolation_bound = " << format_double(v.violation_bound) << "\ngain_samples = " << v.gain_samples
    << "\ngain_basis = " << v.gain_basis << "\ndrift_bound = " << format_double(v.drift_bound)
    << "\nrefine = " << b(v.refine) << "\ncycle_T0 = " << format_double(v.cycle_T0)
    << "\ncycle_k_max = " << v.cycle_k_max << "\ncycle_samples = " << v.cycle_samples
    << "\ncycle_level = " << format_double(v.cycle_level) << "\ncycle_r2_min = " << format_double(v.cycle_r2_min)
    << "\nnullspace_tol = " << format_double(v.nullspace_tol) << "\n";
  return o.str();
}

/// 64-bit FNV-1a of the canonical text, as 16 hex digits.
inline std::string config_hash(const Scenario& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : serialize_scenario(s)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace kinetic
