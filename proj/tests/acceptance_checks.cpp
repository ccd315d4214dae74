// Acceptance gate: one self-contained binary that exercises every headline
// guarantee of the laboratory end to end and prints one PASS/FAIL line per
// criterion.  Exits nonzero if any criterion fails.  Tolerances are fixed
// here on purpose; loosening them is a deliberate act, not a test edit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "nmq/decomp.hpp"
#include "nmq/dependence.hpp"
#include "nmq/embed.hpp"
#include "nmq/errors.hpp"
#include "nmq/experiment.hpp"
#include "nmq/io.hpp"
#include "nmq/oracle.hpp"
#include "nmq/presets.hpp"
#include "nmq/qlearn.hpp"
#include "nmq/sim.hpp"

using namespace nmq;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<Outcome> g_results(14);  // 1-based
double g_identity_gap = 0.0;         // collected across learning runs

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

struct PresetPack {
  Preset p;
  std::unique_ptr<JointChainOracle> oracle;
  std::unique_ptr<PoissonBasis> basis;
  QTable qstar;
};

PresetPack build_pack(const std::string& name) {
  PresetPack pack{make_preset(name), nullptr, nullptr, {}};
  pack.oracle = std::make_unique<JointChainOracle>(
      pack.p.env, pack.p.recursion, pack.p.policy);
  pack.basis = std::make_unique<PoissonBasis>(*pack.oracle);
  pack.qstar = fixed_point_qstar(*pack.oracle, pack.p.discount);
  return pack;
}

QTable random_table(const Preset& p, Rng& rng) {
  QTable q(p.recursion.spaces.n_agent, p.recursion.spaces.n_act, p.discount);
  for (int s = 0; s < q.values.rows(); ++s)
    for (int u = 0; u < q.values.cols(); ++u)
      q.values(s, u) = uniform53(rng) * q.upper_bound();
  return q;
}

// --------------------------------------------------------------------
// 1. Long-run learning error against the oracle fixed point.

Outcome criterion_convergence(const std::vector<PresetPack>& packs) {
  std::ostringstream detail;
  bool pass = true;
  for (const auto* name : {"hmm2-window1", "hmm3-window2"}) {
    const auto it = std::find_if(packs.begin(), packs.end(),
                                 [&](const PresetPack& pk) {
                                   return pk.p.name == name;
                                 });
    const PresetPack& pack = *it;
    const auto t0 = Clock::now();
    std::vector<double> errors;
    for (unsigned long seed = 1; seed <= 20; ++seed) {
      Rng rng = make_rng(seed);
      const SimInit init = burnin_init(pack.p.env, pack.p.recursion,
                                       pack.p.policy, 10000, rng);
      DecompRecorder rec(*pack.oracle, nullptr,
                         DecompRecorder::Options{false, false, {}});
      QLearnOptions opts;
      opts.hook = [&rec](const StepContext& ctx) { rec(ctx); };
      QTable q0(pack.p.recursion.spaces.n_agent,
                pack.p.recursion.spaces.n_act, pack.p.discount);
      const QLearnResult res =
          run_qlearning(pack.p.env, pack.p.recursion, pack.p.policy,
                        pack.p.schedule, std::move(q0), 2000000, rng, init,
                        opts);
      errors.push_back(
          (res.q.values - pack.qstar.values).cwiseAbs().maxCoeff());
      g_identity_gap = std::max(g_identity_gap, rec.max_identity_gap());
    }
    const double secs =
        std::chrono::duration<double>(Clock::now() - t0).count();
    const double med = median(errors);
    const bool ok = med <= 0.02 && secs <= 300.0;
    pass = pass && ok;
    detail << name << ": median sup-error " << fmt(med) << " (limit 0.02), "
           << fmt(secs, 3) << " s for 20 seeds x 2e6 steps;  ";
  }
  return {pass, detail.str()};
}

// --------------------------------------------------------------------
// 2. Both offset terms have exactly zero stationary mean for any table.

Outcome criterion_stationary_mean(const std::vector<PresetPack>& packs) {
  Rng rng = make_rng(101);
  double worst = 0.0;
  for (const auto& pack : packs) {
    for (int k = 0; k < 5; ++k) {
      const QTable q = random_table(pack.p, rng);
      worst = std::max(
          worst, zeta_stationary_mean(*pack.oracle, q).cwiseAbs().maxCoeff());
      worst = std::max(worst,
                       omega_stationary_mean(*pack.oracle, *pack.basis, q)
                           .cwiseAbs()
                           .maxCoeff());
    }
  }
  return {worst <= 1e-8,
          "max |stationary mean| of either offset term over 4 setups x 5 "
          "random tables: " +
              fmt(worst) + " (limit 1e-8)"};
}

// --------------------------------------------------------------------
// 3. When the agent state is the environment state, both offsets vanish
//    along the whole trajectory, not just in the mean.

Outcome criterion_consistent_case(const std::vector<PresetPack>& packs) {
  const PresetPack& pack = packs.front();  // markov-consistent
  Rng rng = make_rng(3);
  const SimInit init = burnin_init(pack.p.env, pack.p.recursion,
                                   pack.p.policy, 10000, rng);
  DecompRecorder rec(*pack.oracle, pack.basis.get(),
                     DecompRecorder::Options{true, false, {}});
  QLearnOptions opts;
  opts.hook = [&rec](const StepContext& ctx) { rec(ctx); };
  QTable q0(pack.p.recursion.spaces.n_agent, pack.p.recursion.spaces.n_act,
            pack.p.discount);
  run_qlearning(pack.p.env, pack.p.recursion, pack.p.policy, pack.p.schedule,
                std::move(q0), 100000, rng, init, opts);
  g_identity_gap = std::max(g_identity_gap, rec.max_identity_gap());
  const double z = rec.max_abs_zeta();
  const double w = rec.max_abs_omega();
  return {z <= 1e-12 && w <= 1e-12,
          "max per-step |offsets| over 1e5 steps: " + fmt(z) + " and " +
              fmt(w) + " (limit 1e-12 each)"};
}

// --------------------------------------------------------------------
// 4. The three-way split of every applied increment reproduces the
//    realized update bracket exactly (checked at the applied scale).

Outcome criterion_identity() {
  return {g_identity_gap <= 1e-10,
          "max |a_n * (split - bracket)| across all learning runs above: " +
              fmt(g_identity_gap) + " (limit 1e-10)"};
}

// --------------------------------------------------------------------
// 5. The iterate range invariant holds even at the extreme admissible
//    step size, and a genuinely broken table is refused loudly.

Outcome criterion_range(const std::vector<PresetPack>& packs) {
  const auto it = std::find_if(packs.begin(), packs.end(),
                               [](const PresetPack& pk) {
                                 return pk.p.name == "hmm2-window1";
                               });
  const PresetPack& pack = *it;
  const StepSchedule extreme = StepSchedule::harmonic(1.0, 0.5, 1.0, 1);
  Rng rng = make_rng(5);
  const SimInit init = burnin_init(pack.p.env, pack.p.recursion,
                                   pack.p.policy, 1000, rng);
  QTable q0(pack.p.recursion.spaces.n_agent, pack.p.recursion.spaces.n_act,
            pack.p.discount);
  const QLearnResult res =
      run_qlearning(pack.p.env, pack.p.recursion, pack.p.policy, extreme,
                    std::move(q0), 100000, rng, init, {});
  const bool in_range = res.q.in_range();  // also asserted every step

  QTable top(2, 2, 0.9);
  top.values.setConstant(top.upper_bound());
  q_update(top, 0, 0, 1, 1.0, 1.0);  // full step at the boundary
  const bool boundary_ok = top.values(0, 0) <= top.upper_bound() &&
                           top.values(0, 0) >= 0.0;

  bool refused = false;
  try {
    QTable bad(2, 2, 0.9);
    bad.values.setConstant(bad.upper_bound() + 0.5);
    q_update(bad, 0, 0, 1, 0.9, 1.0);
  } catch (const std::logic_error&) {
    refused = true;
  }
  return {in_range && boundary_ok && refused,
          std::string("1e5 steps at a(0) = 1 stay inside [0, 1/(1-g)]: ") +
              (in_range ? "yes" : "NO") + "; boundary update stays inside: " +
              (boundary_ok ? "yes" : "NO") +
              "; out-of-range table refused: " + (refused ? "yes" : "NO")};
}

// --------------------------------------------------------------------
// 6. The cell-level Poisson solution is exact: residual, pinned value,
//    and agreement between two independent factorizations.

Outcome criterion_poisson(const std::vector<PresetPack>& packs) {
  Rng rng = make_rng(202);
  double worst_res = 0.0;
  double worst_pivot = 0.0;
  bool pinned = true;
  for (const auto& pack : packs) {
    worst_res = std::max(worst_res, pack.basis->residual());
    worst_pivot = std::max(worst_pivot, pack.basis->pivot_discrepancy());
    for (int k = 0; k < 5; ++k) {
      const QTable q = random_table(pack.p, rng);
      const PoissonSolution sol = pack.basis->solve(q);
      worst_res = std::max(worst_res, sol.residual);
      pinned = pinned && sol.v(sol.z0) == 0.0;
    }
  }
  return {worst_res <= 1e-9 && worst_pivot <= 1e-8 && pinned,
          "max equation residual " + fmt(worst_res) +
              " (limit 1e-9), max factorization disagreement " +
              fmt(worst_pivot) + " (limit 1e-8), anchor value exactly 0: " +
              (pinned ? "yes" : "NO")};
}

// --------------------------------------------------------------------
// 7. The running filter equals the full-history posterior computed by
//    brute-force path enumeration.

Outcome criterion_filter(const std::vector<PresetPack>& packs) {
  const auto it = std::find_if(packs.begin(), packs.end(),
                               [](const PresetPack& pk) {
                                 return pk.p.name == "hmm3-window2";
                               });
  const Preset& p = it->p;
  const int nx = p.env.spaces().n_hidden;
  const int len = 8;
  Rng rng = make_rng(404);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    SimInit init;
    init.x0 = static_cast<int>(uniform53(rng) * nx);
    init.gamma0 = 0;
    init.belief0 = Eigen::VectorXd::Constant(nx, 1.0 / nx);
    const Trajectory traj =
        simulate(p.env, p.recursion, p.policy, len, rng, init, false);

    // Chain of single-step filter updates.
    Eigen::VectorXd chain = init.belief0;
    for (long t = 0; t < len; ++t) {
      chain = p.env.belief_update(chain, traj.u[static_cast<std::size_t>(t)],
                                  traj.o_next[static_cast<std::size_t>(t)]);
    }

    // Brute force: weight every complete hidden path by its joint
    // probability with the realized actions and observations, then
    // marginalize onto the final hidden state.
    Eigen::VectorXd post = Eigen::VectorXd::Zero(nx);
    std::vector<int> path(static_cast<std::size_t>(len) + 1, 0);
    const long total = static_cast<long>(std::pow(nx, len + 1));
    for (long code = 0; code < total; ++code) {
      long c = code;
      for (int t = 0; t <= len; ++t) {
        path[static_cast<std::size_t>(t)] = static_cast<int>(c % nx);
        c /= nx;
      }
      double w = init.belief0(path[0]);
      for (int t = 0; t < len && w > 0.0; ++t) {
        const int u = traj.u[static_cast<std::size_t>(t)];
        const int o = traj.o_next[static_cast<std::size_t>(t)];
        w *= p.env.transition(u)(path[static_cast<std::size_t>(t)],
                                 path[static_cast<std::size_t>(t) + 1]);
        w *= p.env.emission()(path[static_cast<std::size_t>(t) + 1], o);
      }
      post(path[static_cast<std::size_t>(len)]) += w;
    }
    post /= post.sum();
    worst = std::max(worst, 0.5 * (chain - post).lpNorm<1>());
  }
  return {worst <= 1e-10,
          "max total-variation gap between the running filter and the "
          "path-enumeration posterior over 20 random histories: " +
              fmt(worst) + " (limit 1e-10)"};
}

// --------------------------------------------------------------------
// 8 and 9 share one 200-seed batch of weighted-offset-sum trajectories.

struct TailBatch {
  std::vector<long> horizons{1000, 10000, 100000};
  std::vector<std::vector<double>> norms;  // per horizon, per seed
};

TailBatch run_tail_batch(const PresetPack& pack) {
  TailBatch batch;
  const int n_seeds = 200;
  batch.norms.assign(batch.horizons.size(), std::vector<double>(n_seeds));
  for (int i = 0; i < n_seeds; ++i) {
    Rng rng = make_rng(static_cast<unsigned long>(i) + 1);
    const SimInit init = burnin_init(pack.p.env, pack.p.recursion,
                                     pack.p.policy, 10000, rng);
    DecompRecorder::Options ropts;
    ropts.full = true;
    ropts.delta_checkpoints = batch.horizons;
    DecompRecorder rec(*pack.oracle, pack.basis.get(), ropts);
    QLearnOptions opts;
    opts.hook = [&rec](const StepContext& ctx) { rec(ctx); };
    QTable q0(pack.p.recursion.spaces.n_agent, pack.p.recursion.spaces.n_act,
              pack.p.discount);
    run_qlearning(pack.p.env, pack.p.recursion, pack.p.policy,
                  pack.p.schedule, std::move(q0), batch.horizons.back(), rng,
                  init, opts);
    rec.finalize();
    for (std::size_t h = 0; h < batch.horizons.size(); ++h) {
      batch.norms[h][static_cast<std::size_t>(i)] =
          rec.delta_series_norms()[h];
    }
    g_identity_gap = std::max(g_identity_gap, rec.max_identity_gap());
  }
  return batch;
}

Outcome criterion_delta_decay(const TailBatch& batch) {
  int shrink = 0;
  std::vector<double> med;
  for (std::size_t h = 0; h < batch.horizons.size(); ++h) {
    med.push_back(median(std::vector<double>(
        batch.norms[h].begin(), batch.norms[h].begin() + 100)));
  }
  for (int i = 0; i < 100; ++i) {
    if (batch.norms.back()[static_cast<std::size_t>(i)] <
        batch.norms.front()[static_cast<std::size_t>(i)]) {
      ++shrink;
    }
  }
  const bool monotone = med[0] >= med[1] && med[1] >= med[2];
  return {shrink >= 90 && monotone,
          std::to_string(shrink) +
              "% of 100 seeds shrink from n=1e3 to n=1e5 (need >= 90%); "
              "medians " +
              fmt(med[0]) + " -> " + fmt(med[1]) + " -> " + fmt(med[2]) +
              (monotone ? " (non-increasing)" : " (NOT non-increasing)")};
}

Outcome criterion_tail_shape(const PresetPack& pack, const TailBatch& batch) {
  TailFitInput in;
  in.horizons = batch.horizons;
  in.delta_norms = batch.norms;
  in.d2 = pack.p.schedule.d2();
  const TailFitResult fit = tail_concentration_fit(in);
  bool slopes_negative = true;
  double min_r2 = 1.0;
  for (const auto& hf : fit.per_horizon) {
    slopes_negative = slopes_negative && hf.slope < 0.0;
    min_r2 = std::min(min_r2, hf.r_squared);
  }
  return {slopes_negative,
          "per-horizon log-tail slopes vs squared level all negative: " +
              std::string(slopes_negative ? "yes" : "NO") +
              " (min R^2 " + fmt(min_r2, 3) + "); pooled rate " +
              fmt(fit.rate_constant) + " with R^2 " +
              fmt(fit.pooled_r_squared, 3)};
}

// --------------------------------------------------------------------
// 10. Two independent evaluations of the limiting table agree.

Outcome criterion_fixed_point(const std::vector<PresetPack>& packs) {
  double worst = 0.0;
  for (const auto& pack : packs) {
    const QTable direct = fixed_point_qstar(*pack.oracle, pack.p.discount);
    const QTable averaged =
        history_averaged_fixed_point(*pack.oracle, pack.p.discount);
    worst = std::max(
        worst, (direct.values - averaged.values).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-8,
          "max disagreement between the surrogate fixed point and the "
          "history-averaged evaluation over 4 setups: " +
              fmt(worst) + " (limit 1e-8)"};
}

// --------------------------------------------------------------------
// 11. Dependence matrices: two independent evaluations agree, and two
//     setups with provable coupling structure show it exactly.

Outcome criterion_dependence(const std::vector<PresetPack>& packs) {
  std::ostringstream detail;
  bool pass = true;

  {
    const auto p = make_preset("copy-process");
    const auto initial = warmup_initial_law(p.env, p.recursion, p.policy, 8);
    const int h = 5;
    const auto a = dependence_matrices(p.env, p.recursion, p.policy, initial,
                                       h, 100000000);
    const auto b = dependence_matrices_brute(p.env, p.recursion, p.policy,
                                             initial, h, 100000000);
    const double gap = std::max((a.phi - b.phi).cwiseAbs().maxCoeff(),
                                (a.psi - b.psi).cwiseAbs().maxCoeff());
    bool pattern = true;
    for (int j = 1; j < h; ++j)
      pattern = pattern && std::abs(a.phi(0, j) - 1.0) <= 1e-12;
    for (int i = 1; i < h; ++i)
      for (int j = i + 1; j < h; ++j)
        pattern = pattern && std::abs(a.phi(i, j)) <= 1e-12;
    pass = pass && gap <= 1e-12 && pattern;
    detail << "frozen chain: evaluations agree to " << fmt(gap)
           << ", first-coordinate-only pattern "
           << (pattern ? "exact" : "BROKEN") << ";  ";
  }
  {
    const auto it = std::find_if(packs.begin(), packs.end(),
                                 [](const PresetPack& pk) {
                                   return pk.p.name == "iid-window1";
                                 });
    const auto& p = it->p;
    const Eigen::VectorXd initial = it->oracle->stationary();
    const int h = 5;
    const auto a = dependence_matrices(p.env, p.recursion, p.policy, initial,
                                       h, 100000000);
    const auto b = dependence_matrices_brute(p.env, p.recursion, p.policy,
                                             initial, h, 100000000);
    const double gap = std::max((a.phi - b.phi).cwiseAbs().maxCoeff(),
                                (a.psi - b.psi).cwiseAbs().maxCoeff());
    double band = 0.0;
    for (int i = 0; i < h; ++i)
      for (int j = i + 2; j < h; ++j)
        band = std::max(band,
                        std::max(std::abs(a.phi(i, j)), std::abs(a.psi(i, j))));
    pass = pass && gap <= 1e-12 && band <= 1e-12;
    detail << "windowed iid chain: evaluations agree to " << fmt(gap)
           << ", coupling beyond the window " << fmt(band)
           << " (limit 1e-12)";
  }
  return {pass, detail.str()};
}

// --------------------------------------------------------------------
// 12. The conditional-embedding operators recover exact conditional
//     tables in the limit, and the fitted filter tracks the exact one.

double filter_benchmark(const Preset& p, unsigned long seed, long train_m,
                        long test_m, double* argmax_rate) {
  const int nx = p.env.spaces().n_hidden;
  Rng rng = make_rng(seed);
  const SimInit init =
      burnin_init(p.env, p.recursion, p.policy, 10000, rng);
  const Trajectory train =
      simulate(p.env, p.recursion, p.policy, train_m, rng, init, false);
  std::vector<int> labels, obs_next, labels_next;
  for (long n = 0; n < train.size(); ++n) {
    labels.push_back(train.x[static_cast<std::size_t>(n)]);
    obs_next.push_back(train.o_next[static_cast<std::size_t>(n)]);
    labels_next.push_back(n + 1 < train.size()
                              ? train.x[static_cast<std::size_t>(n + 1)]
                              : train.x_final);
  }
  const FilterOperators ops = fit_filter_operators(
      labels, obs_next, labels_next, nx, p.env.spaces().n_obs, -1.0);

  SimInit test_init;
  test_init.x0 = train.x_final;
  test_init.gamma0 = train.gamma_final;
  test_init.belief0 = Eigen::VectorXd::Constant(nx, 1.0 / nx);
  const Trajectory test =
      simulate(p.env, p.recursion, p.policy, test_m, rng, test_init, true);
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(nx, 1.0 / nx);
  double tv_sum = 0.0;
  long agree = 0;
  for (long n = 0; n < test.size(); ++n) {
    mu = filter_update(ops, mu, test.o_next[static_cast<std::size_t>(n)]);
    const Eigen::VectorXd exact =
        n + 1 < test.size() ? test.beliefs[static_cast<std::size_t>(n + 1)]
                            : test.belief_final;
    tv_sum += 0.5 * (mu - exact).lpNorm<1>();
    agree += infer_state(mu) == infer_state(exact) ? 1 : 0;
  }
  if (argmax_rate != nullptr) {
    *argmax_rate = static_cast<double>(agree) /
                   static_cast<double>(test.size());
  }
  return tv_sum / static_cast<double>(test.size());
}

Outcome criterion_embedding(const std::vector<PresetPack>& packs) {
  std::ostringstream detail;
  bool pass = true;

  // (a) With raw one-hot moments and vanishing ridge, the conditional
  // operator reproduces the empirical conditional frequency table.
  {
    Rng rng = make_rng(505);
    const int dim_x = 3, dim_y = 4, n = 500;
    std::vector<int> xs, ys;
    for (int i = 0; i < n; ++i) {
      xs.push_back(static_cast<int>(uniform53(rng) * dim_x));
      ys.push_back(static_cast<int>(uniform53(rng) * dim_y));
    }
    const SecondMoments m = fit_second_moments(xs, ys, dim_x, dim_y);
    const Eigen::MatrixXd op = conditional_operator(m.m_yx, m.m_xx, 1e-10);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(dim_y, dim_x);
    Eigen::VectorXd totals = Eigen::VectorXd::Zero(dim_x);
    for (int i = 0; i < n; ++i) {
      counts(ys[static_cast<std::size_t>(i)],
             xs[static_cast<std::size_t>(i)]) += 1.0;
      totals(xs[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int c = 0; c < dim_x; ++c) counts.col(c) /= totals(c);
    const double gap = (op - counts).cwiseAbs().maxCoeff();
    pass = pass && gap <= 1e-6;
    detail << "conditional table recovered to " << fmt(gap)
           << " (limit 1e-6);  ";
  }

  // (b) The fitted linear filter tracks the exact posterior on the noisy
  // two-state setup, and (c) more data never hurts (median over seeds).
  {
    const auto it = std::find_if(packs.begin(), packs.end(),
                                 [](const PresetPack& pk) {
                                   return pk.p.name == "hmm2-window1";
                                 });
    const Preset& p = it->p;
    double argmax = 0.0;
    const double tv_big = filter_benchmark(p, 1, 10000, 2000, &argmax);
    pass = pass && tv_big <= 0.05 && argmax >= 0.9;
    detail << "fitted filter at 1e4 training steps: mean TV " << fmt(tv_big)
           << " (limit 0.05), argmax agreement " << fmt(argmax, 3)
           << " (need >= 0.9);  ";

    std::vector<double> med;
    for (const long m : {100L, 1000L, 10000L}) {
      std::vector<double> tvs;
      for (unsigned long seed = 1; seed <= 5; ++seed) {
        tvs.push_back(filter_benchmark(p, seed, m, 1000, nullptr));
      }
      med.push_back(median(tvs));
    }
    // More data must improve the filter or hold it at its plateau; once
    // the intrinsic accuracy is reached the medians fluctuate at noise
    // scale, so plateau steps get a small additive allowance while overall
    // improvement stays mandatory.
    const double noise = 1e-3;
    const bool improves = med[1] <= med[0] + noise &&
                          med[2] <= med[1] + noise && med[2] < med[0];
    pass = pass && improves;
    detail << "median TV over 5 seeds " << fmt(med[0]) << " -> "
           << fmt(med[1]) << " -> " << fmt(med[2])
           << (improves ? " (improves to its plateau)"
                        : " (DEGRADES with more data)");
  }
  return {pass, detail.str()};
}

// --------------------------------------------------------------------
// 13. Bit-for-bit reproducibility of a full experiment, and thread-count
//     independence of the outputs.

Outcome criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "nmq_acceptance_runs";
  fs::remove_all(root);
  const Json doc = {
      {"preset", "markov-consistent"},
      {"n_steps", 3000},
      {"burn_in", 100},
      {"seeds", Json::array({1, 2})},
      {"analyses",
       {{"convergence", Json::object()},
        {"decomposition", {{"n_steps", 500}, {"bound_n0", 100}}},
        {"dependence", {{"horizon", 3}}}}}};

  ExperimentConfig a = parse_experiment_config(
      doc, "acceptance.json", (root / "a").string(), std::nullopt);
  ExperimentConfig b = parse_experiment_config(
      doc, "acceptance.json", (root / "b").string(), std::nullopt);
  run_experiment(a, 1);
  run_experiment(b, 2);  // different thread count on purpose

  const Json manifest = load_json_file(root / "a" / "manifest.json");
  bool identical = true;
  std::string first_diff;
  for (const auto& [name, digest] : manifest.at("files").items()) {
    if (name == "config.json") continue;  // echoes the differing out paths
    std::ifstream fa(root / "a" / name, std::ios::binary);
    std::ifstream fb(root / "b" / name, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)),
                         std::istreambuf_iterator<char>());
    const std::string bb((std::istreambuf_iterator<char>(fb)),
                         std::istreambuf_iterator<char>());
    if (ba != bb || ba.empty()) {
      identical = false;
      if (first_diff.empty()) first_diff = name;
    }
    (void)digest;
  }
  return {identical,
          identical ? "all result files byte-identical across a rerun with "
                      "a different thread count"
                    : "first differing file: " + first_diff};
}

void record(int id, const std::string& label, const Outcome& o) {
  g_results[static_cast<std::size_t>(id)] = o;
  g_results[static_cast<std::size_t>(id)].detail =
      label + " -- " + o.detail;
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("unexpected error: ") + e.what()};
  }
}

}  // namespace

int main() {
  std::cout << "acceptance checks: exact-arithmetic laboratory for "
               "q-learning on recursively built agent states\n\n";

  std::vector<PresetPack> packs;
  for (const auto* name :
       {"markov-consistent", "hmm2-window1", "hmm3-window2", "iid-window1"}) {
    packs.push_back(build_pack(name));
  }

  record(1, "long-run learning error",
         guarded([&] { return criterion_convergence(packs); }));
  record(2, "offset terms have zero stationary mean",
         guarded([&] { return criterion_stationary_mean(packs); }));
  record(3, "offsets vanish pathwise in the consistent case",
         guarded([&] { return criterion_consistent_case(packs); }));
  record(5, "iterate range invariant",
         guarded([&] { return criterion_range(packs); }));
  record(6, "cell-level Poisson solution",
         guarded([&] { return criterion_poisson(packs); }));
  record(7, "running filter equals the full-history posterior",
         guarded([&] { return criterion_filter(packs); }));

  const auto hmm2 = std::find_if(packs.begin(), packs.end(),
                                 [](const PresetPack& pk) {
                                   return pk.p.name == "hmm2-window1";
                                 });
  TailBatch batch;
  try {
    batch = run_tail_batch(*hmm2);
    record(8, "weighted offset sum decays with the horizon",
           guarded([&] { return criterion_delta_decay(batch); }));
    record(9, "tail concentration shape",
           guarded([&] { return criterion_tail_shape(*hmm2, batch); }));
  } catch (const std::exception& e) {
    const Outcome failed{false,
                         std::string("batch failed: ") + e.what()};
    record(8, "weighted offset sum decays with the horizon", failed);
    record(9, "tail concentration shape", failed);
  }

  // After every learning run has contributed its identity gap.
  record(4, "per-step decomposition identity",
         guarded([&] { return criterion_identity(); }));

  record(10, "two evaluations of the limiting table agree",
         guarded([&] { return criterion_fixed_point(packs); }));
  record(11, "dependence matrices",
         guarded([&] { return criterion_dependence(packs); }));
  record(12, "conditional-embedding filter",
         guarded([&] { return criterion_embedding(packs); }));
  record(13, "byte-identical reruns",
         guarded([] { return criterion_determinism(); }));

  int failures = 0;
  for (int id = 1; id <= 13; ++id) {
    const Outcome& o = g_results[static_cast<std::size_t>(id)];
    if (!o.pass) ++failures;
    std::cout << "[" << std::setw(2) << id << "] "
              << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "\n";
  }
  std::cout << "\n"
            << (13 - failures) << "/13 criteria passed"
            << (failures == 0 ? "" : " -- ACCEPTANCE FAILED") << "\n";
  return failures == 0 ? 0 : 1;
}
