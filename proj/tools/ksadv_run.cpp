// ksadv_run: config-driven experiment runner.
//   ksadv_run --config run.ini [--out DIR] [--seed N] [--threads N] [--experiment NAME]
// Exit codes: 0 ok, 1 unexpected error, 2 bad config, 3 divergence, 4 inapplicable.

#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ksadv/cli/experiments.hpp"
#include "ksadv/parallel.hpp"

int main(int argc, char** argv) {
  using namespace ksadv::cli;
  CLI::App app{"Kuramoto-Sivashinsky with advection: experiment runner"};
  std::string config_path, out_dir, experiment;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  app.add_option("--config", config_path, "INI config file")->required();
  app.add_option("--out", out_dir, "output directory (default: KSADV_OUT, then [experiment] output)");
  app.add_option("--seed", seed, "global seed, overrides the config");
  app.add_option("--threads", threads, "worker threads (0: all cores)");
  app.add_option("--experiment", experiment, "experiment name, overrides the config");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_config;
  }

  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
    if (!experiment.empty()) cfg.experiment = experiment_from_string(experiment);
    if (seed) cfg.seed = *seed;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  }
  ksadv::set_thread_count(threads);

  std::filesystem::path dir = cfg.output;
  if (const char* env = std::getenv("KSADV_OUT"); env && *env) dir = env;
  if (!out_dir.empty()) dir = out_dir;

  try {
    const auto res = run_experiment(cfg, dir);
    if (res.code != exit_ok) std::cerr << to_string(cfg.experiment) << ": " << res.message << '\n';
    else std::cout << to_string(cfg.experiment) << ": ok, " << res.files.size() + 1 << " files in " << dir.string() << '\n';
    return res.code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_unexpected;
  }
}
