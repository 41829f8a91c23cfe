#include <CLI11.hpp>

#include <iostream>

#include "kinetic/cli.hpp"

namespace {

using namespace kinetic;

struct Flags {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool quiet = false;

  RunOptions options() const {
    RunOptions o;
    o.out_dir = out_dir.empty() ? default_out_dir() : fs::path(out_dir);
    o.seed = seed;
    o.threads = threads;
    return o;
  }
};

void add_common(CLI::App* cmd, Flags& f, bool needs_config) {
  auto* c = cmd->add_option("--config", f.config, "scenario INI file or a run manifest.json");
  if (needs_config) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--out-dir", f.out_dir, "output directory (default: $KINETIC_OUT_DIR or ./out)");
  cmd->add_option("--seed", f.seed, "override cli.seed");
  cmd->add_option("--threads", f.threads, "override solver.threads")->check(CLI::PositiveNumber);
  cmd->add_flag("-q,--quiet", f.quiet, "suppress progress output");
}

int report(const RunOutcome& out) {
  for (const auto& c : out.checks) std::cout << (c.passed ? "pass  " : "FAIL  ") << c.name << '\n';
  if (!out.error.empty()) std::cerr << "aborted: " << out.error << '\n';
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boltzmann slab solver and property checks"};
  app.require_subcommand(1);
  Flags f;
  auto* run = app.add_subcommand("run", "march a scenario and run its checks");
  auto* verify = app.add_subcommand("verify", "run a scenario's checks against an existing run directory");
  auto* cycles = app.add_subcommand("cycles", "back-time cycle escape profile");
  auto* plot = app.add_subcommand("plot-data", "long-form plot table of a run directory");
  add_common(run, f, true);
  add_common(verify, f, true);
  add_common(cycles, f, true);
  plot->add_option("--out-dir", f.out_dir, "run directory (default: $KINETIC_OUT_DIR or ./out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_pass : exit_config_error;
  }

  try {
    std::ostream* log = f.quiet ? nullptr : &std::cerr;
    if (plot->parsed()) {
      const auto path = emit_plot_data(f.options().out_dir);
      std::cout << path.string() << '\n';
      return exit_pass;
    }
    const Scenario s = load_config(f.config);
    if (run->parsed()) return report(run_scenario(s, f.options(), log));
    if (verify->parsed()) return report(verify_scenario(s, f.options(), log));
    if (cycles->parsed()) return report(cycles_scenario(s, f.options(), &std::cout));
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return exit_runtime_abort;
  }
  return exit_runtime_abort;
}
