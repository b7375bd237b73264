// Command-line front end: one subcommand per experiment kind.

#include <cstdint>
#include <cstdlib>
#include <optional>
#include <iostream>
#include <string>

#include <CLI11/CLI11.hpp>

#include "sgzp/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> step;
};

int run(sgzp::ExperimentKind kind, const Options& o) {
  sgzp::ScenarioConfig cfg;
  try {
    cfg = sgzp::load_config(o.config);
    if (cfg.experiment.kind != kind)
      throw sgzp::ConfigError("config describes a '" + std::string(sgzp::to_string(cfg.experiment.kind)) +
                              "' experiment, not '" + std::string(sgzp::to_string(kind)) + "'");
    if (o.seed) cfg.experiment.seed = *o.seed;
    if (o.step) cfg.numerics.step = *o.step;
  } catch (const sgzp::InvalidArgument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return sgzp::exit_config;
  }
  std::string out = o.out;
  if (const char* env = std::getenv("SGZP_OUT_DIR"); env && *env) out = env;
  if (out.empty()) {
    std::cerr << "configuration error: no output directory (--out or SGZP_OUT_DIR)\n";
    return sgzp::exit_config;
  }
  return sgzp::run_scenario(cfg, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal spread/stealth policies for the SGZP malware model"};
  app.require_subcommand(1);
  app.footer("Environment: SGZP_OUT_DIR overrides --out.");

  Options opt;
  sgzp::ExperimentKind chosen = sgzp::ExperimentKind::solve;
  const std::pair<const char*, sgzp::ExperimentKind> commands[] = {
      {"solve", sgzp::ExperimentKind::solve},
      {"sweep-gamma", sgzp::ExperimentKind::sweep_gamma},
      {"heuristics", sgzp::ExperimentKind::heuristics},
      {"robust-estimation", sgzp::ExperimentKind::robust_estimation},
      {"robust-sync", sgzp::ExperimentKind::robust_sync},
      {"verify", sgzp::ExperimentKind::verify},
      {"simulate", sgzp::ExperimentKind::simulate},
      {"oracle", sgzp::ExperimentKind::oracle},
  };
  for (const auto& [name, kind] : commands) {
    auto* sub = app.add_subcommand(name, std::string("run the ") + name + " experiment");
    sub->add_option("--config", opt.config, "scenario file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory (required unless SGZP_OUT_DIR is set)");
    sub->add_option("--seed", opt.seed, "override experiment.seed");
    sub->add_option("--step", opt.step, "override numerics.step")->check(CLI::PositiveNumber);
    sub->callback([&chosen, kind] { chosen = kind; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sgzp::exit_config;
  }
  return run(chosen, opt);
}
