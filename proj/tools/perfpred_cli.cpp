// perfpred: config-driven experiment runner.
//
//   perfpred run      --config exp.json [--out DIR] [--workers N] [--seed-override K]
//   perfpred sweep    --config sweep.json [--out DIR] [--workers N] [--seed-override K]
//   perfpred validate --config exp.json
//
// Exit status: 0 when every configured check passes, 1 when a check or a
// seed fails, 2 on an invalid config or I/O error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "perfpred/experiment.hpp"

namespace {

namespace ex = perfpred::experiment;

struct Options {
  std::string config;
  std::string out;
  std::size_t workers = 0;
  std::optional<std::uint64_t> seed_override;
};

void add_run_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Output directory (default: the config's output_dir)");
  cmd->add_option("--workers", o.workers, "Concurrent runs (default: the config's workers)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed-override", o.seed_override, "Run this single seed instead of the config's list");
}

void print_summary(const ex::RunSummary& s) {
  for (const auto& c : s.checks)
    fmt::print("{} {}: {}\n", c.passed ? "PASS" : "FAIL", c.name, c.detail);
  for (const auto& f : s.failures) fmt::print("ERROR {}\n", f);
  fmt::print("{} files written; status {}\n", s.files.size(), s.ok ? "ok" : "FAILED");
}

int execute(const Options& o, bool sweep_mode) {
  const ex::ExperimentConfig config = ex::load_config(o.config);
  ex::RunOptions ro;
  ro.out_dir = o.out;
  ro.workers = o.workers > 0 ? o.workers : config.workers;
  ro.seed_override = o.seed_override;
  if (sweep_mode && config.kind != ex::ExperimentKind::sweep)
    throw ex::ConfigError("kind", "the sweep command needs kind 'sweep'");
  if (!sweep_mode && config.kind == ex::ExperimentKind::sweep)
    throw ex::ConfigError("kind", "sweep configs run with the sweep command");
  const ex::RunSummary s = sweep_mode ? ex::sweep(config, ro) : ex::run(config, ro);
  print_summary(s);
  return s.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Performative prediction experiments"};
  app.require_subcommand(1);

  Options run_opts, sweep_opts, validate_opts;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment over its seeds");
  add_run_flags(run_cmd, run_opts);
  auto* sweep_cmd = app.add_subcommand("sweep", "Run the Cartesian product of a parameter sweep");
  add_run_flags(sweep_cmd, sweep_opts);
  auto* validate_cmd = app.add_subcommand("validate", "Parse and validate a config");
  validate_cmd->add_option("--config", validate_opts.config, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return execute(run_opts, false);
    if (sweep_cmd->parsed()) return execute(sweep_opts, true);
    const ex::ExperimentConfig config = ex::load_config(validate_opts.config);
    fmt::print("valid: {} ({}), digest {}\n", config.name, ex::to_string(config.kind),
               ex::config_digest(config));
    return 0;
  } catch (const ex::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
