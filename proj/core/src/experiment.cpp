#include "nmq/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "detail.hpp"
#include "nmq/decomp.hpp"
#include "nmq/dependence.hpp"
#include "nmq/embed.hpp"
#include "nmq/errors.hpp"
#include "nmq/oracle.hpp"
#include "nmq/qlearn.hpp"

namespace nmq {

namespace fs = std::filesystem;

namespace detail {

CsvTable read_csv_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read '" + path.string() + "'");
  }
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.empty()) continue;
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

double median_value(std::vector<double> v) {
  if (v.empty()) {
    throw std::invalid_argument("median of an empty sample");
  }
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

namespace {

// ---------------------------------------------------------------------
// Config parsing.

long long_field(const Json& j, const std::string& key,
                const std::string& context, long fallback,
                bool required = false) {
  if (!j.contains(key)) {
    if (required) {
      throw ConfigError(context + ": missing required '" + key + "'");
    }
    return fallback;
  }
  if (!j[key].is_number_integer()) {
    throw ConfigError(context + ": '" + key + "' must be an integer");
  }
  return j[key].get<long>();
}

double double_field(const Json& j, const std::string& key,
                    const std::string& context, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) {
    throw ConfigError(context + ": '" + key + "' must be a number");
  }
  return j[key].get<double>();
}

bool bool_field(const Json& j, const std::string& key,
                const std::string& context, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) {
    throw ConfigError(context + ": '" + key + "' must be a boolean");
  }
  return j[key].get<bool>();
}

void parse_analyses(const Json& doc, ExperimentConfig& cfg) {
  if (!doc.contains("analyses")) {
    cfg.convergence.enabled = true;
    return;
  }
  const Json& a = doc["analyses"];
  check_keys(a, {"convergence", "decomposition", "delta_tail", "dependence",
                 "cme_filter"},
             "analyses");

  if (a.contains("convergence")) {
    const Json& j = a["convergence"];
    check_keys(j, {"enabled"}, "analyses.convergence");
    cfg.convergence.enabled = bool_field(j, "enabled",
                                         "analyses.convergence", true);
  }
  if (a.contains("decomposition")) {
    const Json& j = a["decomposition"];
    check_keys(j, {"enabled", "n_steps", "write_trace", "bound_delta1",
                   "bound_n0"},
               "analyses.decomposition");
    auto& d = cfg.decomposition;
    d.enabled = bool_field(j, "enabled", "analyses.decomposition", true);
    d.n_steps = long_field(j, "n_steps", "analyses.decomposition", d.n_steps);
    d.write_trace =
        bool_field(j, "write_trace", "analyses.decomposition", d.write_trace);
    d.bound_delta1 = double_field(j, "bound_delta1", "analyses.decomposition",
                                  d.bound_delta1);
    d.bound_n0 =
        long_field(j, "bound_n0", "analyses.decomposition", d.bound_n0);
    if (d.n_steps < 1) {
      throw ConfigError("analyses.decomposition: n_steps must be >= 1");
    }
    if (d.bound_n0 < 1 || d.bound_n0 > d.n_steps) {
      throw ConfigError(
          "analyses.decomposition: bound_n0 must be in [1, n_steps]");
    }
    if (!(d.bound_delta1 > 0.0)) {
      throw ConfigError("analyses.decomposition: bound_delta1 must be > 0");
    }
  }
  if (a.contains("delta_tail")) {
    const Json& j = a["delta_tail"];
    check_keys(j, {"enabled", "horizons", "seed_count", "grid_points"},
               "analyses.delta_tail");
    auto& d = cfg.delta_tail;
    d.enabled = bool_field(j, "enabled", "analyses.delta_tail", true);
    if (j.contains("horizons")) {
      if (!j["horizons"].is_array() || j["horizons"].empty()) {
        throw ConfigError(
            "analyses.delta_tail: 'horizons' must be a nonempty array");
      }
      d.horizons.clear();
      for (const auto& h : j["horizons"]) {
        if (!h.is_number_integer() || h.get<long>() < 1) {
          throw ConfigError(
              "analyses.delta_tail: horizons must be positive integers");
        }
        d.horizons.push_back(h.get<long>());
      }
      if (!std::is_sorted(d.horizons.begin(), d.horizons.end()) ||
          std::adjacent_find(d.horizons.begin(), d.horizons.end()) !=
              d.horizons.end()) {
        throw ConfigError(
            "analyses.delta_tail: horizons must be strictly increasing");
      }
    }
    d.seed_count = static_cast<int>(
        long_field(j, "seed_count", "analyses.delta_tail", d.seed_count));
    d.grid_points = static_cast<int>(
        long_field(j, "grid_points", "analyses.delta_tail", d.grid_points));
    if (d.seed_count < 1) {
      throw ConfigError("analyses.delta_tail: seed_count must be >= 1");
    }
    if (d.grid_points < 2) {
      throw ConfigError("analyses.delta_tail: grid_points must be >= 2");
    }
  }
  if (a.contains("dependence")) {
    const Json& j = a["dependence"];
    check_keys(j, {"enabled", "horizon", "path_budget", "initial",
                   "warmup_steps"},
               "analyses.dependence");
    auto& d = cfg.dependence;
    d.enabled = bool_field(j, "enabled", "analyses.dependence", true);
    d.horizon = static_cast<int>(
        long_field(j, "horizon", "analyses.dependence", d.horizon));
    d.path_budget =
        long_field(j, "path_budget", "analyses.dependence", d.path_budget);
    if (j.contains("initial")) {
      if (!j["initial"].is_string()) {
        throw ConfigError("analyses.dependence: 'initial' must be a string");
      }
      const std::string v = j["initial"].get<std::string>();
      if (v == "stationary") {
        d.stationary_initial = true;
      } else if (v == "warmup") {
        d.stationary_initial = false;
      } else {
        throw ConfigError(
            "analyses.dependence: 'initial' must be 'stationary' or "
            "'warmup'");
      }
    }
    d.warmup_steps =
        long_field(j, "warmup_steps", "analyses.dependence", d.warmup_steps);
    if (d.warmup_steps < 0) {
      throw ConfigError("analyses.dependence: warmup_steps must be >= 0");
    }
  }
  if (a.contains("cme_filter")) {
    const Json& j = a["cme_filter"];
    check_keys(j, {"enabled", "train_steps", "test_steps", "lambda",
                   "labels"},
               "analyses.cme_filter");
    auto& d = cfg.cme_filter;
    d.enabled = bool_field(j, "enabled", "analyses.cme_filter", true);
    d.train_steps =
        long_field(j, "train_steps", "analyses.cme_filter", d.train_steps);
    d.test_steps =
        long_field(j, "test_steps", "analyses.cme_filter", d.test_steps);
    d.lambda = double_field(j, "lambda", "analyses.cme_filter", d.lambda);
    if (j.contains("labels")) {
      if (!j["labels"].is_string()) {
        throw ConfigError("analyses.cme_filter: 'labels' must be a string");
      }
      d.labels = j["labels"].get<std::string>();
    }
    if (d.labels != "hidden" && d.labels != "agent") {
      throw ConfigError(
          "analyses.cme_filter: 'labels' must be 'hidden' or 'agent'");
    }
    if (d.train_steps < 2 || d.test_steps < 1) {
      throw ConfigError(
          "analyses.cme_filter: train_steps must be >= 2 and test_steps "
          ">= 1");
    }
  }
}

// ---------------------------------------------------------------------
// Parallel seed loop (outputs are indexed by slot, so any interleaving
// produces identical results).

void parallel_tasks(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int workers = std::min(threads, n);
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------
// Analysis runners.  Each returns the list of files it wrote.

struct RunState {
  const ExperimentConfig& cfg;
  fs::path dir;
  std::vector<std::string> files;
  std::unique_ptr<JointChainOracle> oracle;
  std::unique_ptr<PoissonBasis> basis;
  std::unique_ptr<QTable> qstar;
  double d4 = 0.0;
  bool d4_available = false;
};

void build_oracle(RunState& st) {
  const Preset& p = st.cfg.setup;
  st.oracle = std::make_unique<JointChainOracle>(p.env, p.recursion,
                                                 p.policy);
  st.qstar = std::make_unique<QTable>(
      fixed_point_qstar(*st.oracle, st.cfg.discount));
  const bool need_basis =
      st.cfg.decomposition.enabled || st.cfg.delta_tail.enabled;
  if (need_basis) {
    st.basis = std::make_unique<PoissonBasis>(*st.oracle);
  }

  Json j;
  j["pi_min"] = st.oracle->pi_min();
  j["closed_class_size"] =
      static_cast<long>(st.oracle->closed_class().size());
  j["stationary_residual"] = st.oracle->stationary_residual();
  j["psi_residual"] = st.oracle->psi_residual();
  j["pi_cells"] = json_from_vector(st.oracle->stationary_cells());
  j["pi_states"] = json_from_vector(st.oracle->stationary_states());
  j["rbar"] = json_from_vector(st.oracle->rbar());
  j["q_kernel"] = json_from_matrix(st.oracle->q_kernel());
  j["qstar"] = json_from_matrix(st.qstar->values);
  if (st.basis) {
    j["v_max"] = st.basis->v_max_bound(st.cfg.discount);
    j["poisson_residual"] = st.basis->residual();
    j["poisson_pivot_discrepancy"] = st.basis->pivot_discrepancy();
  }
  write_file_atomic(st.dir / "oracle.json", j.dump(2) + "\n");
  st.files.push_back("oracle.json");
}

void run_dependence(RunState& st) {
  const Preset& p = st.cfg.setup;
  const auto& opt = st.cfg.dependence;
  Eigen::VectorXd initial;
  if (opt.stationary_initial) {
    if (!st.oracle) {
      throw AnalysisError(
          "dependence with a stationary initial law needs the chain "
          "analysis; use initial = 'warmup' for chains it refuses");
    }
    initial = st.oracle->stationary();
  } else {
    initial = warmup_initial_law(p.env, p.recursion, p.policy,
                                 opt.warmup_steps);
  }
  const DependenceMatrices a = dependence_matrices(
      p.env, p.recursion, p.policy, initial, opt.horizon, opt.path_budget);
  const DependenceMatrices b = dependence_matrices_brute(
      p.env, p.recursion, p.policy, initial, opt.horizon, opt.path_budget);
  const double disagreement =
      std::max((a.phi - b.phi).cwiseAbs().maxCoeff(),
               (a.psi - b.psi).cwiseAbs().maxCoeff());

  const auto matrix_rows = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<std::string>> rows;
    for (long r = 0; r < m.rows(); ++r) {
      std::vector<std::string> row;
      for (long c = 0; c < m.cols(); ++c) row.push_back(format_double(m(r, c)));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  std::vector<std::string> header;
  for (int c = 1; c <= opt.horizon; ++c) {
    header.push_back("j" + std::to_string(c));
  }
  write_csv(st.dir / "dependence_phi.csv", header, matrix_rows(a.phi));
  write_csv(st.dir / "dependence_psi.csv", header, matrix_rows(a.psi));
  write_csv(st.dir / "dependence_summary.csv",
            {"horizon", "phi_spectral", "psi_spectral", "d4",
             "dual_max_abs_diff"},
            {{format_long(opt.horizon), format_double(a.phi_spectral),
              format_double(a.psi_spectral), format_double(a.d4),
              format_double(disagreement)}});
  st.files.push_back("dependence_phi.csv");
  st.files.push_back("dependence_psi.csv");
  st.files.push_back("dependence_summary.csv");
  st.d4 = a.d4;
  st.d4_available = true;
}

void run_convergence(RunState& st, int threads) {
  const Preset& p = st.cfg.setup;
  const long n_steps = st.cfg.n_steps;
  const std::vector<long> grid = checkpoint_grid(n_steps);
  const int n_seeds = static_cast<int>(st.cfg.seeds.size());

  struct SeedOut {
    std::vector<std::vector<std::string>> rows;
    double final_error = 0.0;
    double identity_gap = 0.0;
  };
  std::vector<SeedOut> outs(static_cast<std::size_t>(n_seeds));

  parallel_tasks(n_seeds, threads, [&](int i) {
    const unsigned long seed = st.cfg.seeds[static_cast<std::size_t>(i)];
    Rng rng = make_rng(seed);
    const SimInit init =
        burnin_init(p.env, p.recursion, p.policy, st.cfg.burn_in, rng);
    DecompRecorder recorder(*st.oracle, nullptr,
                            DecompRecorder::Options{false, false, {}});
    QLearnOptions opts;
    opts.checkpoints = grid;
    opts.hook = [&recorder](const StepContext& ctx) { recorder(ctx); };
    QTable q0(p.recursion.spaces.n_agent, p.recursion.spaces.n_act,
              st.cfg.discount);
    const QLearnResult res =
        run_qlearning(p.env, p.recursion, p.policy, p.schedule, std::move(q0),
                      n_steps, rng, init, opts);
    SeedOut& out = outs[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < res.checkpoint_steps.size(); ++k) {
      const double err = (res.checkpoint_values[k] - st.qstar->values)
                             .cwiseAbs()
                             .maxCoeff();
      out.rows.push_back(
          {format_long(res.checkpoint_steps[k]), format_double(err)});
    }
    out.final_error =
        (res.q.values - st.qstar->values).cwiseAbs().maxCoeff();
    out.identity_gap = recorder.max_identity_gap();
    write_csv(st.dir / ("convergence_seed" + std::to_string(seed) + ".csv"),
              {"step", "sup_error"}, out.rows);
  });

  std::vector<std::vector<std::string>> summary;
  for (int i = 0; i < n_seeds; ++i) {
    const unsigned long seed = st.cfg.seeds[static_cast<std::size_t>(i)];
    st.files.push_back("convergence_seed" + std::to_string(seed) + ".csv");
    summary.push_back({format_long(static_cast<long>(seed)),
                       format_double(outs[static_cast<std::size_t>(i)]
                                         .final_error),
                       format_double(outs[static_cast<std::size_t>(i)]
                                         .identity_gap)});
  }
  write_csv(st.dir / "convergence_summary.csv",
            {"seed", "final_sup_error", "max_identity_gap"}, summary);
  st.files.push_back("convergence_summary.csv");
}

void run_decomposition(RunState& st) {
  const Preset& p = st.cfg.setup;
  const auto& opt = st.cfg.decomposition;
  const std::vector<long> grid = checkpoint_grid(opt.n_steps);

  std::vector<std::vector<std::string>> summary;
  for (const unsigned long seed : st.cfg.seeds) {
    Rng rng = make_rng(seed);
    const SimInit init =
        burnin_init(p.env, p.recursion, p.policy, st.cfg.burn_in, rng);
    DecompRecorder::Options ropts;
    ropts.full = true;
    ropts.keep_rows = opt.write_trace;
    ropts.delta_checkpoints = grid;
    DecompRecorder recorder(*st.oracle, st.basis.get(), ropts);
    QLearnOptions qopts;
    qopts.hook = [&recorder](const StepContext& ctx) { recorder(ctx); };
    QTable q0(p.recursion.spaces.n_agent, p.recursion.spaces.n_act,
              st.cfg.discount);
    run_qlearning(p.env, p.recursion, p.policy, p.schedule, std::move(q0),
                  opt.n_steps, rng, init, qopts);
    recorder.finalize();

    if (opt.write_trace) {
      std::vector<std::vector<std::string>> rows;
      rows.reserve(recorder.rows().size());
      for (const auto& r : recorder.rows()) {
        rows.push_back({format_long(r.n), format_long(r.cell),
                        format_double(r.a_n), format_double(r.f),
                        format_double(r.zeta), format_double(r.m_noise),
                        format_double(r.omega),
                        format_double(r.delta.lpNorm<Eigen::Infinity>())});
      }
      const std::string name =
          "decomp_trace_seed" + std::to_string(seed) + ".csv";
      write_csv(st.dir / name,
                {"step", "cell", "a_n", "f", "zeta", "m_noise", "omega",
                 "delta_inf"},
                rows);
      st.files.push_back(name);
    }

    std::vector<std::vector<std::string>> series;
    for (std::size_t k = 0; k < recorder.delta_series_steps().size(); ++k) {
      series.push_back({format_long(recorder.delta_series_steps()[k]),
                        format_double(recorder.delta_series_norms()[k])});
    }
    const std::string sname =
        "decomp_delta_series_seed" + std::to_string(seed) + ".csv";
    write_csv(st.dir / sname, {"step", "delta_inf"}, series);
    st.files.push_back(sname);

    summary.push_back(
        {format_long(static_cast<long>(seed)),
         format_double(recorder.max_identity_gap()),
         format_double(recorder.max_abs_zeta()),
         format_double(recorder.max_abs_omega()),
         format_double(recorder.delta().lpNorm<Eigen::Infinity>())});
  }
  write_csv(st.dir / "decomp_summary.csv",
            {"seed", "max_identity_gap", "max_abs_zeta", "max_abs_omega",
             "delta_inf_final"},
            summary);
  st.files.push_back("decomp_summary.csv");

  BoundInputs bi;
  bi.schedule = &p.schedule;
  bi.discount = st.cfg.discount;
  bi.pi_min = st.oracle->pi_min();
  bi.q_start_error_norm = st.qstar->values.cwiseAbs().maxCoeff();
  bi.q_ref_norm = st.qstar->values.cwiseAbs().maxCoeff();
  bi.n0 = opt.bound_n0;
  bi.n = opt.n_steps;
  bi.delta1 = opt.bound_delta1;
  const BoundResult br =
      finite_time_bound(bi, p.recursion.spaces.n_cells());
  Json j;
  j["alpha"] = br.alpha;
  j["threshold_c"] = br.threshold_c;
  j["transient_term"] = br.transient_term;
  j["offset_term"] = br.offset_term;
  j["error_bound"] = br.error_bound;
  j["probability_lower_bound"] = br.probability_lower_bound;
  j["squared_branch"] = br.squared_branch;
  j["vacuous"] = br.vacuous;
  j["constants_identified"] = br.constants_identified;
  j["delta1"] = opt.bound_delta1;
  j["n0"] = opt.bound_n0;
  j["n"] = opt.n_steps;
  write_file_atomic(st.dir / "decomp_bound.json", j.dump(2) + "\n");
  st.files.push_back("decomp_bound.json");
}

void run_delta_tail(RunState& st, int threads) {
  const Preset& p = st.cfg.setup;
  const auto& opt = st.cfg.delta_tail;
  const long max_h = opt.horizons.back();
  const int n_seeds = opt.seed_count;

  std::vector<std::vector<double>> norms(
      opt.horizons.size(), std::vector<double>(static_cast<std::size_t>(
                               n_seeds)));
  parallel_tasks(n_seeds, threads, [&](int i) {
    Rng rng = make_rng(static_cast<unsigned long>(i) + 1);
    const SimInit init =
        burnin_init(p.env, p.recursion, p.policy, st.cfg.burn_in, rng);
    DecompRecorder::Options ropts;
    ropts.full = true;
    ropts.keep_rows = false;
    ropts.delta_checkpoints = opt.horizons;
    DecompRecorder recorder(*st.oracle, st.basis.get(), ropts);
    QLearnOptions qopts;
    qopts.hook = [&recorder](const StepContext& ctx) { recorder(ctx); };
    QTable q0(p.recursion.spaces.n_agent, p.recursion.spaces.n_act,
              st.cfg.discount);
    run_qlearning(p.env, p.recursion, p.policy, p.schedule, std::move(q0),
                  max_h, rng, init, qopts);
    recorder.finalize();
    if (recorder.delta_series_norms().size() != opt.horizons.size()) {
      throw AnalysisError("offset-sum series incomplete at seed " +
                          std::to_string(i + 1));
    }
    for (std::size_t h = 0; h < opt.horizons.size(); ++h) {
      norms[h][static_cast<std::size_t>(i)] =
          recorder.delta_series_norms()[h];
    }
  });

  std::vector<std::vector<std::string>> sample_rows;
  for (std::size_t h = 0; h < opt.horizons.size(); ++h) {
    for (int i = 0; i < n_seeds; ++i) {
      sample_rows.push_back({format_long(opt.horizons[h]),
                             format_long(i + 1),
                             format_double(norms[h][static_cast<std::size_t>(
                                 i)])});
    }
  }
  write_csv(st.dir / "delta_tail_samples.csv",
            {"horizon", "seed", "delta_inf"}, sample_rows);
  st.files.push_back("delta_tail_samples.csv");

  TailFitInput in;
  in.horizons = opt.horizons;
  in.delta_norms = norms;
  in.d2 = p.schedule.d2();
  in.grid_points = opt.grid_points;
  const TailFitResult fit = tail_concentration_fit(in);

  std::vector<std::vector<std::string>> point_rows;
  std::vector<std::vector<std::string>> fit_rows;
  for (const auto& hf : fit.per_horizon) {
    for (std::size_t k = 0; k < hf.delta_grid.size(); ++k) {
      point_rows.push_back({format_long(hf.n),
                            format_double(hf.delta_grid[k]),
                            format_double(hf.tail_prob[k])});
    }
    fit_rows.push_back({format_long(hf.n), format_double(hf.slope),
                        format_double(hf.intercept),
                        format_double(hf.r_squared)});
  }
  write_csv(st.dir / "delta_tail_points.csv",
            {"horizon", "delta", "tail_prob"}, point_rows);
  write_csv(st.dir / "delta_tail_fit.csv",
            {"horizon", "slope", "intercept", "r_squared"}, fit_rows);
  write_csv(st.dir / "delta_tail_pooled.csv",
            {"rate_constant", "intercept", "r_squared"},
            {{format_double(fit.rate_constant),
              format_double(fit.pooled_intercept),
              format_double(fit.pooled_r_squared)}});
  st.files.push_back("delta_tail_points.csv");
  st.files.push_back("delta_tail_fit.csv");
  st.files.push_back("delta_tail_pooled.csv");
}

void run_cme_filter(RunState& st) {
  const Preset& p = st.cfg.setup;
  const auto& opt = st.cfg.cme_filter;
  const FiniteSpaces& sp = p.recursion.spaces;
  const bool hidden_labels = opt.labels == "hidden";
  const int n_label = hidden_labels ? sp.n_hidden : sp.n_agent;

  const unsigned long seed = st.cfg.seeds.empty() ? 1 : st.cfg.seeds.front();
  Rng rng = make_rng(seed);
  const SimInit init =
      burnin_init(p.env, p.recursion, p.policy, st.cfg.burn_in, rng);
  const Trajectory train = simulate(p.env, p.recursion, p.policy,
                                    opt.train_steps, rng, init, false);

  std::vector<int> labels;
  std::vector<int> obs_next;
  std::vector<int> labels_next;
  const long m = train.size();
  labels.reserve(static_cast<std::size_t>(m));
  for (long n = 0; n < m; ++n) {
    const int cur = hidden_labels ? train.x[static_cast<std::size_t>(n)]
                                  : train.s[static_cast<std::size_t>(n)];
    int nxt;
    if (n + 1 < m) {
      nxt = hidden_labels ? train.x[static_cast<std::size_t>(n + 1)]
                          : train.s[static_cast<std::size_t>(n + 1)];
    } else {
      nxt = hidden_labels ? train.x_final
                          : p.recursion.state(train.gamma_final);
    }
    labels.push_back(cur);
    obs_next.push_back(train.o_next[static_cast<std::size_t>(n)]);
    labels_next.push_back(nxt);
  }
  const FilterOperators ops = fit_filter_operators(
      labels, obs_next, labels_next, n_label, sp.n_obs, opt.lambda);

  // Test segment: both filters start from the same prior on the same
  // fresh observation stream.
  SimInit test_init;
  test_init.x0 = train.x_final;
  test_init.gamma0 = train.gamma_final;
  test_init.belief0 =
      Eigen::VectorXd::Constant(sp.n_hidden, 1.0 / sp.n_hidden);
  const Trajectory test = simulate(p.env, p.recursion, p.policy,
                                   opt.test_steps, rng, test_init, true);

  Eigen::VectorXd mu;
  if (hidden_labels) {
    mu = Eigen::VectorXd::Constant(n_label, 1.0 / n_label);
  } else {
    mu = Eigen::VectorXd::Zero(n_label);
    mu(p.recursion.state(test_init.gamma0)) = 1.0;
  }

  std::vector<std::vector<std::string>> trace;
  double tv_sum = 0.0;
  long agree = 0;
  for (long n = 0; n < test.size(); ++n) {
    mu = filter_update(ops, mu, test.o_next[static_cast<std::size_t>(n)]);
    Eigen::VectorXd exact;
    if (hidden_labels) {
      exact = (n + 1 < test.size())
                  ? test.beliefs[static_cast<std::size_t>(n + 1)]
                  : test.belief_final;
    } else {
      exact = Eigen::VectorXd::Zero(n_label);
      const int s_next =
          (n + 1 < test.size())
              ? test.s[static_cast<std::size_t>(n + 1)]
              : p.recursion.state(test.gamma_final);
      exact(s_next) = 1.0;
    }
    const double tv = 0.5 * (mu - exact).lpNorm<1>();
    const bool match = infer_state(mu) == argmax_lowest(exact);
    tv_sum += tv;
    agree += match ? 1 : 0;
    trace.push_back({format_long(n), format_double(tv),
                     format_long(match ? 1 : 0)});
  }
  write_csv(st.dir / "cme_trace.csv", {"step", "tv_error", "argmax_match"},
            trace);
  st.files.push_back("cme_trace.csv");
  write_csv(st.dir / "cme_summary.csv",
            {"labels", "train_steps", "test_steps", "lambda", "mean_tv",
             "argmax_rate"},
            {{opt.labels, format_long(opt.train_steps),
              format_long(opt.test_steps), format_double(ops.lambda),
              format_double(tv_sum / static_cast<double>(test.size())),
              format_double(static_cast<double>(agree) /
                            static_cast<double>(test.size()))}});
  st.files.push_back("cme_summary.csv");

  Json j;
  j["feature_map"] = {{"type", "one-hot"},
                      {"labels", opt.labels},
                      {"n_label", n_label},
                      {"n_obs", sp.n_obs}};
  j["lambda"] = ops.lambda;
  j["t1"] = json_from_matrix(ops.t1);
  j["t2"] = json_from_matrix(ops.t2);
  write_file_atomic(st.dir / "cme_operators.json", j.dump(2) + "\n");
  st.files.push_back("cme_operators.json");
}

void write_constants(RunState& st) {
  ConstantsRecord c;
  const StepSchedule& s = st.cfg.setup.schedule;
  c.d1 = s.d1();
  c.d2 = s.d2();
  c.d3 = s.d3();
  c.d4 = st.d4;
  c.d4_available = st.d4_available;
  c.d5 = 0.0;
  c.pi_min = st.oracle ? st.oracle->pi_min() : 0.0;
  c.discount = st.cfg.discount;
  c.v_max = st.basis ? st.basis->v_max_bound(st.cfg.discount) : 0.0;
  c.c7 = 0.25 * std::min(c.c5, c.c6);
  Json j;
  j["d1"] = c.d1;
  j["d2"] = c.d2;
  j["d3"] = c.d3;
  j["d4"] = c.d4;
  j["d4_available"] = c.d4_available;
  j["d5"] = c.d5;
  j["pi_min"] = c.pi_min;
  j["discount"] = c.discount;
  j["v_max"] = c.v_max;
  j["c1"] = c.c1;
  j["c2"] = c.c2;
  j["concentration_rate"] = c.concentration_rate;
  j["c4"] = c.c4;
  j["c5"] = c.c5;
  j["c6"] = c.c6;
  j["c7"] = c.c7;
  j["existence_constants_identified"] = c.existence_constants_identified;
  write_file_atomic(st.dir / "constants.json", j.dump(2) + "\n");
  st.files.push_back("constants.json");
}

}  // namespace

Json ExperimentConfig::to_json() const {
  Json j;
  j["setup"] = setup.name;
  j["discount"] = discount;
  j["n_steps"] = n_steps;
  Json seeds_json = Json::array();
  for (const unsigned long s : seeds) seeds_json.push_back(s);
  j["seeds"] = seeds_json;
  j["burn_in"] = burn_in;
  j["output_dir"] = output_dir.string();
  j["schedule"] = json_from_schedule(setup.schedule);
  Json a;
  a["convergence"] = {{"enabled", convergence.enabled}};
  a["decomposition"] = {{"enabled", decomposition.enabled},
                        {"n_steps", decomposition.n_steps},
                        {"write_trace", decomposition.write_trace},
                        {"bound_delta1", decomposition.bound_delta1},
                        {"bound_n0", decomposition.bound_n0}};
  Json horizons = Json::array();
  for (const long h : delta_tail.horizons) horizons.push_back(h);
  a["delta_tail"] = {{"enabled", delta_tail.enabled},
                     {"horizons", horizons},
                     {"seed_count", delta_tail.seed_count},
                     {"grid_points", delta_tail.grid_points}};
  a["dependence"] = {{"enabled", dependence.enabled},
                     {"horizon", dependence.horizon},
                     {"path_budget", dependence.path_budget},
                     {"initial", dependence.stationary_initial ? "stationary"
                                                               : "warmup"},
                     {"warmup_steps", dependence.warmup_steps}};
  a["cme_filter"] = {{"enabled", cme_filter.enabled},
                     {"train_steps", cme_filter.train_steps},
                     {"test_steps", cme_filter.test_steps},
                     {"lambda", cme_filter.lambda},
                     {"labels", cme_filter.labels}};
  j["analyses"] = a;
  return j;
}

ExperimentConfig parse_experiment_config(
    const Json& doc, const fs::path& config_path,
    const std::optional<std::string>& out_override,
    const std::optional<int>& seed_count_override) {
  check_keys(doc,
             {"preset", "env", "env_file", "recursion", "policy", "schedule",
              "discount", "n_steps", "seeds", "seed_count", "burn_in",
              "output_dir", "analyses"},
             "config");

  const bool has_preset = doc.contains("preset");
  const bool has_custom = doc.contains("env") || doc.contains("env_file");
  if (has_preset == has_custom) {
    throw ConfigError(
        "config: give exactly one of 'preset' or a custom setup "
        "('env'/'env_file' with 'recursion' and 'policy')");
  }

  std::optional<Preset> setup;
  if (has_preset) {
    if (!doc["preset"].is_string()) {
      throw ConfigError("config: 'preset' must be a string");
    }
    for (const char* k : {"env", "env_file", "recursion", "policy"}) {
      if (doc.contains(k)) {
        throw ConfigError(std::string("config: '") + k +
                          "' cannot be combined with 'preset'");
      }
    }
    setup = make_preset(doc["preset"].get<std::string>());
    if (doc.contains("schedule")) {
      setup->schedule = schedule_from_json(doc["schedule"], "config.schedule");
    }
  } else {
    if (!doc.contains("recursion") || !doc.contains("policy")) {
      throw ConfigError(
          "config: a custom setup needs 'recursion' and 'policy'");
    }
    Json env_json;
    if (doc.contains("env") && doc.contains("env_file")) {
      throw ConfigError("config: give 'env' or 'env_file', not both");
    }
    if (doc.contains("env")) {
      env_json = doc["env"];
    } else {
      if (!doc["env_file"].is_string()) {
        throw ConfigError("config: 'env_file' must be a path string");
      }
      fs::path env_path = doc["env_file"].get<std::string>();
      if (env_path.is_relative()) {
        env_path = config_path.parent_path() / env_path;
      }
      env_json = load_json_file(env_path);
    }
    const int n_hidden = env_json.contains("n_hidden") &&
                                 env_json["n_hidden"].is_number_integer()
                             ? env_json["n_hidden"].get<int>()
                             : throw ConfigError(
                                   "config.env: missing integer 'n_hidden'");
    const int n_obs =
        env_json.contains("n_obs") && env_json["n_obs"].is_number_integer()
            ? env_json["n_obs"].get<int>()
            : throw ConfigError("config.env: missing integer 'n_obs'");
    const int n_act =
        env_json.contains("n_act") && env_json["n_act"].is_number_integer()
            ? env_json["n_act"].get<int>()
            : throw ConfigError("config.env: missing integer 'n_act'");
    AgentStateRecursion rec = recursion_from_json(
        doc["recursion"], n_hidden, n_obs, n_act, "config.recursion");
    HmmEnvironment env =
        env_from_json(env_json, rec.spaces.n_agent, "config.env");
    Policy pol = policy_from_json(doc["policy"], rec.spaces, "config.policy");
    StepSchedule sched =
        doc.contains("schedule")
            ? schedule_from_json(doc["schedule"], "config.schedule")
            : StepSchedule::power(1.0, 1.0, 0.75, 0.5, 1.0, 1);
    setup = Preset{"custom", std::move(env), std::move(rec), std::move(pol),
                   std::move(sched), 0.9};
  }

  ExperimentConfig cfg{std::move(*setup), 0.9, 0, {}, 10000, {},
                       {}, {}, {}, {}, {}};
  cfg.discount = double_field(doc, "discount", "config", cfg.setup.discount);
  if (!(cfg.discount > 0.0 && cfg.discount < 1.0)) {
    throw ConfigError("config: 'discount' must lie strictly inside (0, 1)");
  }
  cfg.n_steps = long_field(doc, "n_steps", "config", 0, true);
  if (cfg.n_steps < 1) {
    throw ConfigError("config: 'n_steps' must be >= 1");
  }
  cfg.burn_in = long_field(doc, "burn_in", "config", cfg.burn_in);
  if (cfg.burn_in < 0) {
    throw ConfigError("config: 'burn_in' must be >= 0");
  }

  if (seed_count_override) {
    if (*seed_count_override < 1) {
      throw ConfigError("config: seed count override must be >= 1");
    }
    for (int i = 1; i <= *seed_count_override; ++i) {
      cfg.seeds.push_back(static_cast<unsigned long>(i));
    }
  } else {
    const bool has_seeds = doc.contains("seeds");
    const bool has_count = doc.contains("seed_count");
    if (has_seeds == has_count) {
      throw ConfigError(
          "config: give exactly one of 'seeds' or 'seed_count'");
    }
    if (has_seeds) {
      if (!doc["seeds"].is_array() || doc["seeds"].empty()) {
        throw ConfigError("config: 'seeds' must be a nonempty array");
      }
      for (const auto& s : doc["seeds"]) {
        if (!s.is_number_integer() || s.get<long>() < 0) {
          throw ConfigError(
              "config: seeds must be nonnegative integers");
        }
        cfg.seeds.push_back(s.get<unsigned long>());
      }
      std::vector<unsigned long> sorted = cfg.seeds;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("config: seeds must be distinct");
      }
    } else {
      const long count = doc["seed_count"].is_number_integer()
                             ? doc["seed_count"].get<long>()
                             : -1;
      if (count < 1) {
        throw ConfigError("config: 'seed_count' must be a positive integer");
      }
      for (long i = 1; i <= count; ++i) {
        cfg.seeds.push_back(static_cast<unsigned long>(i));
      }
    }
  }

  parse_analyses(doc, cfg);

  if (out_override) {
    cfg.output_dir = *out_override;
  } else if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string()) {
      throw ConfigError("config: 'output_dir' must be a string");
    }
    cfg.output_dir = doc["output_dir"].get<std::string>();
  } else {
    const char* base = std::getenv("NMQLAB_OUT");
    const fs::path root = base != nullptr ? fs::path(base) : fs::path("runs");
    cfg.output_dir = root / config_path.stem();
  }
  return cfg;
}

void run_experiment(const ExperimentConfig& config, int threads) {
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory '" +
                  config.output_dir.string() + "': " + ec.message());
  }
  RunState st{config, config.output_dir, {}, nullptr, nullptr, nullptr,
              0.0,    false};

  write_file_atomic(st.dir / "config.json", config.to_json().dump(2) + "\n");
  st.files.push_back("config.json");

  const bool need_oracle =
      config.convergence.enabled || config.decomposition.enabled ||
      config.delta_tail.enabled ||
      (config.dependence.enabled && config.dependence.stationary_initial);
  if (need_oracle) build_oracle(st);

  if (config.dependence.enabled) run_dependence(st);
  if (config.convergence.enabled) run_convergence(st, threads);
  if (config.decomposition.enabled) run_decomposition(st);
  if (config.delta_tail.enabled) run_delta_tail(st, threads);
  if (config.cme_filter.enabled) run_cme_filter(st);
  if (st.oracle) write_constants(st);

  write_manifest(st.dir, st.files);
}

}  // namespace nmq
