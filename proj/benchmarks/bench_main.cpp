// Throughput benchmarks for the hot paths: raw simulation, the learning
// step, the per-step diagnostics, and the one-time exact-analysis builds.

#include <benchmark/benchmark.h>

#include <memory>

#include "nmq/decomp.hpp"
#include "nmq/dependence.hpp"
#include "nmq/embed.hpp"
#include "nmq/oracle.hpp"
#include "nmq/presets.hpp"
#include "nmq/qlearn.hpp"
#include "nmq/sim.hpp"

using namespace nmq;

namespace {

const Preset& hmm2() {
  static const Preset p = make_preset("hmm2-window1");
  return p;
}

const Preset& hmm3() {
  static const Preset p = make_preset("hmm3-window2");
  return p;
}

const JointChainOracle& hmm2_oracle() {
  static const JointChainOracle o(hmm2().env, hmm2().recursion,
                                  hmm2().policy);
  return o;
}

}  // namespace

// One environment/filter/recursion step, no learning.
static void BM_SimulationStep(benchmark::State& state) {
  const Preset& p = hmm2();
  Rng rng = make_rng(1);
  const SimInit init = burnin_init(p.env, p.recursion, p.policy, 1000, rng);
  StepEngine engine(p.env, p.recursion, p.policy, rng, init);
  for (auto _ : state) {
    benchmark::DoNotOptimize(engine.advance());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SimulationStep);

// Simulation plus the tabular update.
static void BM_LearningStep(benchmark::State& state) {
  const Preset& p = hmm2();
  Rng rng = make_rng(2);
  const SimInit init = burnin_init(p.env, p.recursion, p.policy, 1000, rng);
  StepEngine engine(p.env, p.recursion, p.policy, rng, init);
  QTable q(p.recursion.spaces.n_agent, p.recursion.spaces.n_act, p.discount);
  long n = 0;
  for (auto _ : state) {
    const StepEngine::Step s = engine.advance();
    q_update(q, s.s, s.u, s.s_after, s.reward, p.schedule(n++));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LearningStep);

// Learning step with the per-step decomposition observer attached (the
// configuration used by convergence runs).
static void BM_LearningStepTraced(benchmark::State& state) {
  const Preset& p = hmm2();
  const JointChainOracle& oracle = hmm2_oracle();
  Rng rng = make_rng(3);
  const SimInit init = burnin_init(p.env, p.recursion, p.policy, 1000, rng);
  StepEngine engine(p.env, p.recursion, p.policy, rng, init);
  QTable q(p.recursion.spaces.n_agent, p.recursion.spaces.n_act, p.discount);
  DecompRecorder recorder(oracle, nullptr,
                          DecompRecorder::Options{false, false, {}});
  long n = 0;
  for (auto _ : state) {
    const StepEngine::Step s = engine.advance();
    StepContext ctx;
    ctx.n = n;
    ctx.x = s.x_before;
    ctx.gamma_state = s.gamma_before;
    ctx.s = s.s;
    ctx.u = s.u;
    ctx.o_next = s.o_next;
    ctx.gamma_next = s.gamma_after;
    ctx.s_next = s.s_after;
    ctx.reward = s.reward;
    ctx.belief = &engine.belief_before();
    ctx.a_n = p.schedule(n);
    ctx.q = &q;
    recorder(ctx);
    q_update(q, s.s, s.u, s.s_after, s.reward, p.schedule(n));
    ++n;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LearningStepTraced);

// Full exact analysis of the joint chain (kernel, closed class, stationary
// law, surrogate tables).
static void BM_OracleBuild(benchmark::State& state) {
  const Preset& p = hmm3();
  for (auto _ : state) {
    const JointChainOracle oracle(p.env, p.recursion, p.policy);
    benchmark::DoNotOptimize(oracle.pi_min());
  }
}
BENCHMARK(BM_OracleBuild);

// One-time dual-factorization solve of the cell-level Poisson basis.
static void BM_PoissonBasisBuild(benchmark::State& state) {
  const JointChainOracle& oracle = hmm2_oracle();
  for (auto _ : state) {
    const PoissonBasis basis(oracle);
    benchmark::DoNotOptimize(basis.residual());
  }
}
BENCHMARK(BM_PoissonBasisBuild);

// Per-table Poisson solution from the precomputed basis.
static void BM_PoissonSolve(benchmark::State& state) {
  const Preset& p = hmm2();
  const JointChainOracle& oracle = hmm2_oracle();
  const PoissonBasis basis(oracle);
  Rng rng = make_rng(4);
  QTable q(p.recursion.spaces.n_agent, p.recursion.spaces.n_act, p.discount);
  for (int s = 0; s < q.values.rows(); ++s)
    for (int u = 0; u < q.values.cols(); ++u)
      q.values(s, u) = uniform53(rng) * q.upper_bound();
  for (auto _ : state) {
    benchmark::DoNotOptimize(basis.solve(q).v);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PoissonSolve);

// One recursive conditional-embedding filter update.
static void BM_FilterUpdate(benchmark::State& state) {
  const Preset& p = hmm2();
  Rng rng = make_rng(5);
  const SimInit init = burnin_init(p.env, p.recursion, p.policy, 1000, rng);
  const Trajectory train =
      simulate(p.env, p.recursion, p.policy, 5000, rng, init, false);
  std::vector<int> labels, obs_next, labels_next;
  for (long n = 0; n < train.size(); ++n) {
    labels.push_back(train.x[static_cast<std::size_t>(n)]);
    obs_next.push_back(train.o_next[static_cast<std::size_t>(n)]);
    labels_next.push_back(n + 1 < train.size()
                              ? train.x[static_cast<std::size_t>(n + 1)]
                              : train.x_final);
  }
  const FilterOperators ops =
      fit_filter_operators(labels, obs_next, labels_next,
                           p.env.spaces().n_hidden, p.env.spaces().n_obs);
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(
      p.env.spaces().n_hidden, 1.0 / p.env.spaces().n_hidden);
  std::size_t k = 0;
  for (auto _ : state) {
    mu = filter_update(ops, mu, obs_next[k]);
    benchmark::DoNotOptimize(mu);
    k = (k + 1) % obs_next.size();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_FilterUpdate);

// Exact dependence-matrix evaluation at a moderate horizon.
static void BM_DependenceMatrices(benchmark::State& state) {
  const Preset p = make_preset("markov-consistent");
  const JointChainOracle oracle(p.env, p.recursion, p.policy);
  const Eigen::VectorXd initial = oracle.stationary();
  for (auto _ : state) {
    benchmark::DoNotOptimize(dependence_matrices(p.env, p.recursion,
                                                 p.policy, initial, 4,
                                                 100000000));
  }
}
BENCHMARK(BM_DependenceMatrices);

BENCHMARK_MAIN();
