// qtyp: experiment driver.
//
//   qtyp validate --config cfg.json
//   qtyp run --config cfg.json [--seed N] [--workers N] [--out DIR]
//   qtyp speckle|concentration|scaling|gradient-check|poincare-check --config cfg.json ...
//
// Exit codes: 0 success, 1 a checked invariant failed, 2 config error,
// 3 numerical failure.

#include "qtyp/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o, bool run_flags) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  if (!run_flags) return;
  cmd->add_option("--seed", o.seed, "override master_seed");
  cmd->add_option("--workers", o.workers, "override worker count")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "override output_dir");
}

void print_issues(const qtyp::ConfigError& e) {
  std::cerr << "config error:\n";
  for (const auto& s : e.issues()) std::cerr << "  " << s << '\n';
}

int do_validate(const Overrides& o) {
  try {
    const qtyp::ExperimentConfig c = qtyp::load_config(o.config);
    const qtyp::ValidationReport rep = qtyp::validate_config(c);
    std::cout << o.config << ": valid (mode " << qtyp::to_string(c.mode) << ", dim H " << rep.dim
              << ", " << rep.matrix_bytes / 1e6 << " MB per dense matrix, ~"
              << rep.peak_bytes_estimate / 1e6 << " MB peak)\n";
    for (const auto& w : rep.warnings) std::cout << "warning: " << w << '\n';
    return kExitOk;
  } catch (const qtyp::ConfigError& e) {
    print_issues(e);
    return kExitConfig;
  }
}

int do_run(const Overrides& o, std::optional<qtyp::Mode> expected) {
  qtyp::ExperimentConfig c;
  try {
    c = qtyp::load_config(o.config);
    if (expected && c.mode != *expected) {
      throw qtyp::ConfigError({"mode: config has mode '" + std::string(qtyp::to_string(c.mode)) +
                               "' but subcommand '" + std::string(qtyp::to_string(*expected)) +
                               "' was given"});
    }
    if (o.seed) c.master_seed = *o.seed;
    if (o.workers) c.workers = *o.workers;
    if (o.out) c.output_dir = *o.out;
    for (const auto& w : qtyp::validate_config(c).warnings) std::cerr << "warning: " << w << '\n';
  } catch (const qtyp::ConfigError& e) {
    print_issues(e);
    return kExitConfig;
  }

  try {
    const qtyp::RunResult r = qtyp::run_experiment(c);
    for (const auto& f : r.files) std::cout << (std::filesystem::path(c.output_dir) / f).string() << '\n';
    if (!r.all_pass) {
      std::cerr << "one or more invariants failed; see summary.json\n";
      return kExitInvariant;
    }
    return kExitOk;
  } catch (const qtyp::ConfigError& e) {
    print_issues(e);
    return kExitConfig;
  } catch (const qtyp::SpecError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const qtyp::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const qtyp::ConvergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const qtyp::NotHermitianError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concentration of reduced dynamics under random interactions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(qtyp::kVersion));

  Overrides o;
  std::optional<qtyp::Mode> expected;
  bool validate_only = false;

  auto* validate = app.add_subcommand("validate", "check a config file and report resource estimates");
  add_common(validate, o, false);
  validate->callback([&] { validate_only = true; });

  auto* run = app.add_subcommand("run", "run the mode named in the config");
  add_common(run, o, true);

  for (qtyp::Mode m : {qtyp::Mode::Speckle, qtyp::Mode::Concentration, qtyp::Mode::Scaling,
                       qtyp::Mode::GradientCheck, qtyp::Mode::PoincareCheck}) {
    auto* cmd = app.add_subcommand(std::string(qtyp::to_string(m)), "run mode " + std::string(qtyp::to_string(m)));
    add_common(cmd, o, true);
    cmd->callback([&expected, m] { expected = m; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  return validate_only ? do_validate(o) : do_run(o, expected);
}
