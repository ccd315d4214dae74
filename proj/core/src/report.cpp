#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "detail.hpp"
#include "nmq/errors.hpp"
#include "nmq/experiment.hpp"
#include "nmq/io.hpp"

namespace nmq {

namespace fs = std::filesystem;

namespace {

using detail::CsvTable;
using detail::median_value;
using detail::read_csv_file;

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read '" + path.string() + "'");
  }
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

bool has_file(const Json& manifest, const std::string& name) {
  return manifest["files"].contains(name);
}

double cell_num(const CsvTable& t, std::size_t row, const std::string& col) {
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (t.header[c] == col) return std::stod(t.rows[row][c]);
  }
  throw IoError("column '" + col + "' not found");
}

std::string cell_str(const CsvTable& t, std::size_t row,
                     const std::string& col) {
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (t.header[c] == col) return t.rows[row][c];
  }
  throw IoError("column '" + col + "' not found");
}

}  // namespace

void write_report(const fs::path& run_dir) {
  const fs::path manifest_path = run_dir / "manifest.json";
  Json manifest = load_json_file(manifest_path);
  if (!manifest.contains("files") || !manifest["files"].is_object()) {
    throw IoError("'" + manifest_path.string() + "' has no file table");
  }
  for (const auto& [name, hash] : manifest["files"].items()) {
    const std::string actual = sha256_hex(read_all(run_dir / name));
    if (actual != hash.get<std::string>()) {
      throw IoError("manifest hash mismatch for '" + name +
                    "': the run directory has been modified");
    }
  }
  std::cout << "run directory: " << run_dir.string() << "\n";
  std::cout << "manifest: " << manifest["files"].size()
            << " files verified\n";

  const fs::path plots = run_dir / "plots";
  std::error_code ec;
  fs::create_directories(plots, ec);
  if (ec) {
    throw IoError("cannot create '" + plots.string() + "': " + ec.message());
  }

  const Json config = load_json_file(run_dir / "config.json");
  std::cout << "setup: " << config["setup"].get<std::string>()
            << "  discount: " << config["discount"].get<double>()
            << "  n_steps: " << config["n_steps"].get<long>()
            << "  seeds: " << config["seeds"].size() << "\n";

  if (has_file(manifest, "oracle.json")) {
    const Json oracle = load_json_file(run_dir / "oracle.json");
    std::cout << "chain: pi_min " << oracle["pi_min"].get<double>()
              << ", closed class " << oracle["closed_class_size"].get<long>()
              << " joint states";
    if (oracle.contains("v_max")) {
      std::cout << ", v_max " << oracle["v_max"].get<double>();
    }
    std::cout << "\n";
  }

  if (has_file(manifest, "convergence_summary.csv")) {
    const CsvTable summary =
        read_csv_file(run_dir / "convergence_summary.csv");
    std::vector<double> finals;
    double worst_gap = 0.0;
    for (std::size_t r = 0; r < summary.rows.size(); ++r) {
      finals.push_back(cell_num(summary, r, "final_sup_error"));
      worst_gap = std::max(worst_gap,
                           cell_num(summary, r, "max_identity_gap"));
    }
    std::cout << "convergence: median final error "
              << format_double(median_value(finals)) << " over "
              << finals.size() << " seeds, max identity gap "
              << format_double(worst_gap) << "\n";

    // Median learning curve across seeds (the per-seed grids coincide).
    std::vector<std::vector<std::string>> plot_rows;
    std::vector<CsvTable> curves;
    for (std::size_t r = 0; r < summary.rows.size(); ++r) {
      const std::string seed = cell_str(summary, r, "seed");
      curves.push_back(
          read_csv_file(run_dir / ("convergence_seed" + seed + ".csv")));
    }
    if (!curves.empty()) {
      for (std::size_t k = 0; k < curves.front().rows.size(); ++k) {
        std::vector<double> errs;
        bool complete = true;
        for (const CsvTable& c : curves) {
          if (k >= c.rows.size()) {
            complete = false;
            break;
          }
          errs.push_back(cell_num(c, k, "sup_error"));
        }
        if (!complete) break;
        plot_rows.push_back({cell_str(curves.front(), k, "step"),
                             format_double(median_value(errs))});
      }
    }
    write_csv(plots / "plot_convergence.csv", {"step", "median_sup_error"},
              plot_rows);
  }

  if (has_file(manifest, "decomp_summary.csv")) {
    const CsvTable s = read_csv_file(run_dir / "decomp_summary.csv");
    for (std::size_t r = 0; r < s.rows.size(); ++r) {
      std::cout << "decomposition seed " << cell_str(s, r, "seed")
                << ": max identity gap "
                << cell_str(s, r, "max_identity_gap") << ", max |zeta| "
                << cell_str(s, r, "max_abs_zeta") << ", max |omega| "
                << cell_str(s, r, "max_abs_omega") << ", final offset norm "
                << cell_str(s, r, "delta_inf_final") << "\n";
    }
    if (!s.rows.empty()) {
      const std::string seed = cell_str(s, 0, "seed");
      const fs::path series =
          run_dir / ("decomp_delta_series_seed" + seed + ".csv");
      const CsvTable t = read_csv_file(series);
      std::vector<std::vector<std::string>> rows;
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        rows.push_back({cell_str(t, r, "step"), cell_str(t, r, "delta_inf")});
      }
      write_csv(plots / "plot_delta_series.csv", {"step", "delta_inf"},
                rows);
    }
    if (has_file(manifest, "decomp_bound.json")) {
      const Json b = load_json_file(run_dir / "decomp_bound.json");
      std::cout << "finite-time bound: alpha " << b["alpha"].get<double>()
                << ", transient " << b["transient_term"].get<double>()
                << ", offset " << b["offset_term"].get<double>()
                << ", probability >= "
                << b["probability_lower_bound"].get<double>()
                << (b["vacuous"].get<bool>() ? " (vacuous)" : "")
                << (b["constants_identified"].get<bool>()
                        ? ""
                        : " [unidentified constants set to 1]")
                << "\n";
    }
  }

  if (has_file(manifest, "delta_tail_samples.csv")) {
    const CsvTable samples = read_csv_file(run_dir / "delta_tail_samples.csv");
    std::map<long, std::vector<double>> by_horizon;
    for (std::size_t r = 0; r < samples.rows.size(); ++r) {
      by_horizon[static_cast<long>(cell_num(samples, r, "horizon"))]
          .push_back(cell_num(samples, r, "delta_inf"));
    }
    std::vector<std::vector<std::string>> decay_rows;
    for (const auto& [h, vals] : by_horizon) {
      decay_rows.push_back(
          {format_long(h), format_double(median_value(vals))});
    }
    write_csv(plots / "plot_delta_decay.csv", {"horizon", "median_delta_inf"},
              decay_rows);

    const CsvTable fit = read_csv_file(run_dir / "delta_tail_fit.csv");
    std::cout << "offset-sum tail:";
    for (std::size_t r = 0; r < fit.rows.size(); ++r) {
      std::cout << "  n=" << cell_str(fit, r, "horizon") << " slope "
                << cell_str(fit, r, "slope") << " (R^2 "
                << cell_str(fit, r, "r_squared") << ")";
    }
    std::cout << "\n";
    const CsvTable pooled = read_csv_file(run_dir / "delta_tail_pooled.csv");
    std::cout << "pooled tail rate: " << cell_str(pooled, 0, "rate_constant")
              << " (R^2 " << cell_str(pooled, 0, "r_squared") << ")\n";

    const CsvTable points = read_csv_file(run_dir / "delta_tail_points.csv");
    std::vector<std::vector<std::string>> tail_rows;
    for (std::size_t r = 0; r < points.rows.size(); ++r) {
      const double d = cell_num(points, r, "delta");
      const double pr = cell_num(points, r, "tail_prob");
      tail_rows.push_back({cell_str(points, r, "horizon"),
                           format_double(d * d),
                           format_double(std::log(pr))});
    }
    write_csv(plots / "plot_tail_points.csv",
              {"horizon", "delta_sq", "log_tail"}, tail_rows);
  }

  if (has_file(manifest, "dependence_summary.csv")) {
    const CsvTable s = read_csv_file(run_dir / "dependence_summary.csv");
    std::cout << "dependence: horizon " << cell_str(s, 0, "horizon")
              << ", |Phi|_2 " << cell_str(s, 0, "phi_spectral")
              << ", |Psi|_2 " << cell_str(s, 0, "psi_spectral") << ", d4 "
              << cell_str(s, 0, "d4") << ", dual-method gap "
              << cell_str(s, 0, "dual_max_abs_diff") << "\n";
  }

  if (has_file(manifest, "cme_summary.csv")) {
    const CsvTable s = read_csv_file(run_dir / "cme_summary.csv");
    std::cout << "filter: labels " << cell_str(s, 0, "labels")
              << ", mean TV " << cell_str(s, 0, "mean_tv")
              << ", argmax agreement " << cell_str(s, 0, "argmax_rate")
              << " (lambda " << cell_str(s, 0, "lambda") << ")\n";
    const CsvTable t = read_csv_file(run_dir / "cme_trace.csv");
    std::vector<std::vector<std::string>> rows;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      rows.push_back({cell_str(t, r, "step"), cell_str(t, r, "tv_error")});
    }
    write_csv(plots / "plot_cme_tv.csv", {"step", "tv_error"}, rows);
  }
}

}  // namespace nmq
