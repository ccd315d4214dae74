#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nmq/io.hpp"
#include "nmq/presets.hpp"

namespace nmq {

// Per-analysis options.  Each analysis is independent; an experiment runs
// any subset of them against one setup.

struct ConvergenceOptions {
  bool enabled = false;
};

struct DecompositionOptions {
  bool enabled = false;
  long n_steps = 100000;   // decomposition runs are traced per step
  bool write_trace = true;
  double bound_delta1 = 0.1;
  long bound_n0 = 100;
};

struct DeltaTailOptions {
  bool enabled = false;
  std::vector<long> horizons = {1000, 10000, 100000};
  int seed_count = 200;
  int grid_points = 9;
};

struct DependenceAnalysisOptions {
  bool enabled = false;
  int horizon = 5;
  long path_budget = 1000000;
  bool stationary_initial = true;  // else warm-up law
  long warmup_steps = 8;
};

struct CmeFilterOptions {
  bool enabled = false;
  long train_steps = 10000;
  long test_steps = 1000;
  double lambda = -1.0;          // < 0: automatic
  std::string labels = "hidden"; // "hidden" or "agent"
};

// A fully resolved experiment: the setup plus run sizes, seeds, and the
// analysis selection.  Parsed strictly from JSON (unknown keys anywhere
// are configuration errors).
struct ExperimentConfig {
  Preset setup;
  double discount = 0.9;
  long n_steps = 0;
  std::vector<unsigned long> seeds;
  long burn_in = 10000;
  std::filesystem::path output_dir;

  ConvergenceOptions convergence;
  DecompositionOptions decomposition;
  DeltaTailOptions delta_tail;
  DependenceAnalysisOptions dependence;
  CmeFilterOptions cme_filter;

  // The resolved config echoed into the run directory.
  [[nodiscard]] Json to_json() const;
};

// Parse and validate a config document.  `config_path` is used for error
// context and for resolving the default output directory (its stem);
// `out_override` (from the command line) wins over the config's
// output_dir, which wins over $NMQLAB_OUT/<stem>, which wins over
// runs/<stem>.
ExperimentConfig parse_experiment_config(
    const Json& doc, const std::filesystem::path& config_path,
    const std::optional<std::string>& out_override,
    const std::optional<int>& seed_count_override);

// Run every enabled analysis, writing outputs (and a SHA-256 manifest,
// last) into config.output_dir.  `threads` parallelizes across seeds;
// outputs are byte-identical regardless of thread count.
void run_experiment(const ExperimentConfig& config, int threads);

// Summarize a finished run directory to stdout and write two-column plot
// CSVs under <run_dir>/plots.  Verifies the manifest first.
void write_report(const std::filesystem::path& run_dir);

}  // namespace nmq
