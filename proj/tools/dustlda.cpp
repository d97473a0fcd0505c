// Apache License, Version 2.0, refer to LICENSE.txt
//
// dustlda: fit, simulate and report subcommands.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dustlda/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace dustlda::cli;
  CLI::App app{"Dust mixture deconvolution by variational Bayesian LDA"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  CommonOptions opts;
  std::string input;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t unknown = 0;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (must be new or empty)")->required();
    sub->add_option("--seed", seed, "random seed (overrides config/spec)");
    sub->add_option("--threads", threads, "worker threads (0 = all cores)");
    sub->add_flag("--verbose,-v", opts.verbose, "progress output and per-sample diagnostics");
    sub->add_flag("--overwrite", opts.overwrite, "allow writing into a non-empty directory");
  };

  CLI::App* fit = app.add_subcommand("fit", "fit a corpus CSV");
  fit->add_option("corpus", input, "corpus CSV (location,role,<types...>)")->required();
  fit->add_option("--unknown-sources", unknown, "number of unknown sources (0 or 1)");
  add_common(fit);

  CLI::App* sim = app.add_subcommand("simulate", "run a simulation study");
  sim->add_option("spec", input, "study specification JSON")->required();
  add_common(sim);

  CLI::App* rep = app.add_subcommand("report", "rebuild the report from a fit directory");
  rep->add_option("fit", input, "fit output directory or its fit.json")->required();
  add_common(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kError;
  }

  if (!config.empty()) opts.config = config;
  opts.out = out;
  for (CLI::App* sub : {fit, sim, rep}) {
    if (sub->count("--seed")) opts.seed = seed;
    if (sub->count("--threads")) opts.threads = threads;
  }
  if (fit->count("--unknown-sources")) opts.unknown_sources = unknown;

  if (*fit) return cmd_fit(input, opts, std::cout, std::cerr);
  if (*sim) return cmd_simulate(input, opts, std::cout, std::cerr);
  return cmd_report(input, opts, std::cout, std::cerr);
}
