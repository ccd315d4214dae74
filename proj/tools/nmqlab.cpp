// Command-line driver.
//
//   nmqlab run <config.json> [--seeds N] [--out DIR] [--threads K]
//   nmqlab report <run-dir>
//
// Exit codes: 0 success, 2 configuration error, 3 analysis error
// (numerical premise violated), 4 I/O error, 1 anything unexpected.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nmq/errors.hpp"
#include "nmq/experiment.hpp"
#include "nmq/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "nmqlab: tabular Q-learning on recursively built agent states, with "
      "exact finite-chain diagnostics"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<int> seed_count;
  std::optional<std::string> out_dir;
  int threads = 1;
  CLI::App* run = app.add_subcommand("run", "run the analyses in a config");
  run->add_option("config", config_path, "JSON experiment config")
      ->required();
  run->add_option("--seeds", seed_count,
                  "override the number of seeds (uses seeds 1..N)");
  run->add_option("--out", out_dir, "output directory override");
  run->add_option("--threads", threads,
                  "worker threads for per-seed loops (default 1)")
      ->check(CLI::PositiveNumber);

  std::string run_dir;
  CLI::App* report =
      app.add_subcommand("report", "summarize a finished run directory");
  report->add_option("run_dir", run_dir, "directory written by 'run'")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      nmq::Json doc = nmq::load_json_file(config_path);
      nmq::ExperimentConfig cfg = nmq::parse_experiment_config(
          doc, config_path, out_dir, seed_count);
      nmq::run_experiment(cfg, threads);
      std::cout << "wrote " << cfg.output_dir.string() << "\n";
    } else {
      nmq::write_report(run_dir);
    }
  } catch (const nmq::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nmq::AnalysisError& e) {
    std::cerr << "analysis error: " << e.what() << "\n";
    return 3;
  } catch (const nmq::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
