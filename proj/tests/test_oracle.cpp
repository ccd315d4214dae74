#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "nmq/errors.hpp"
#include "nmq/oracle.hpp"
#include "nmq/presets.hpp"
#include "nmq/sim.hpp"

using namespace nmq;

TEST_CASE("conditional laws: agree with raw sums over observations") {
  const auto p = make_preset("hmm3-window2");
  Eigen::VectorXd b(3);
  b << 0.2, 0.5, 0.3;
  for (int gamma : {0, 3, 7}) {
    const auto laws = conditional_agent_laws(p.env, p.recursion, b, gamma, 0);
    Eigen::VectorXd direct =
        Eigen::VectorXd::Zero(p.recursion.spaces.n_agent);
    double er = 0.0;
    const auto obs_law = p.env.observation_law(b, 0);
    const int s = p.recursion.state(gamma);
    for (int o = 0; o < p.recursion.spaces.n_obs; ++o) {
      direct(p.recursion.state(p.recursion.next(gamma, 0, o))) += obs_law(o);
      er += p.env.reward(s, 0, o) * obs_law(o);
    }
    CHECK((laws.next_state_law - direct).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(laws.expected_reward == doctest::Approx(er).epsilon(1e-14));
    CHECK(laws.next_state_law.sum() == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("oracle: exactly-observed chain reduces to the plain MDP") {
  // Identity emission and window 0 make the agent state equal the hidden
  // state, so the surrogate kernel and mean reward must coincide with the
  // primitive tables.
  const auto p = make_preset("markov-consistent");
  JointChainOracle oracle(p.env, p.recursion, p.policy);

  CHECK(oracle.n_joint() == 4);
  // Only the diagonal joint states recur (the internal state replays the
  // observation, which is the hidden state itself).
  REQUIRE(oracle.closed_class().size() == 2);

  const auto& sp = oracle.spaces();
  for (int s = 0; s < sp.n_agent; ++s)
    for (int u = 0; u < sp.n_act; ++u) {
      const int z = sp.cell(s, u);
      for (int sn = 0; sn < sp.n_agent; ++sn)
        CHECK(oracle.q_kernel()(z, sn) ==
              doctest::Approx(p.env.transition(u)(s, sn)).epsilon(1e-13));
      double er = 0.0;
      for (int xn = 0; xn < sp.n_hidden; ++xn)
        er += p.env.transition(u)(s, xn) * p.env.reward(s, u, xn);
      CHECK(oracle.rbar()(z) == doctest::Approx(er).epsilon(1e-13));
    }
  CHECK(oracle.stationary_residual() <= 1e-10);
  CHECK(oracle.psi_residual() <= 1e-10);
}

TEST_CASE("oracle: psi factorizes as next-state law times policy") {
  const auto p = make_preset("hmm3-window2");
  JointChainOracle oracle(p.env, p.recursion, p.policy);
  const auto& sp = oracle.spaces();
  for (int z = 0; z < sp.n_cells(); ++z) {
    CHECK(oracle.psi().row(z).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int sn = 0; sn < sp.n_agent; ++sn)
      for (int un = 0; un < sp.n_act; ++un)
        CHECK(oracle.psi()(z, sp.cell(sn, un)) ==
              doctest::Approx(oracle.q_kernel()(z, sn) *
                              p.policy.phi(sn, un))
                  .epsilon(1e-13));
  }
}

TEST_CASE("oracle: dense and power-iteration stationary solvers agree") {
  const auto p = make_preset("hmm3-window2");
  JointChainOracle dense(p.env, p.recursion, p.policy);
  JointChainOracle::Options opts;
  opts.dense_solver_max = 0;  // force the iterative path
  JointChainOracle iterative(p.env, p.recursion, p.policy, opts);
  CHECK((dense.stationary() - iterative.stationary())
            .cwiseAbs()
            .maxCoeff() < 1e-8);
  CHECK(iterative.stationary_residual() <= 1e-10);
}

TEST_CASE("oracle: refuses a chain with two closed classes") {
  const auto p = make_preset("copy-process");
  CHECK_THROWS_AS(JointChainOracle(p.env, p.recursion, p.policy),
                  AnalysisError);
}

TEST_CASE("oracle: refuses a periodic chain") {
  FiniteSpaces sp{2, 2, 1, 2};
  Eigen::MatrixXd t(2, 2), em(2, 2);
  t << 0.0, 1.0, 1.0, 0.0;  // deterministic alternation: period 2
  em.setIdentity();
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(2, 2, 0.5);
  HmmEnvironment env(sp, {t}, em, {r});
  const auto rec = make_window_recursion(sp, 0);
  const auto pol = make_uniform_policy(rec.spaces);
  CHECK_THROWS_AS(JointChainOracle(env, rec, pol), AnalysisError);
}

TEST_CASE("oracle: refuses vanishing stationary cell mass") {
  const auto p = make_preset("hmm2-window1");
  JointChainOracle::Options opts;
  opts.eps_stat = 0.5;  // far above any actual cell mass
  CHECK_THROWS_AS(JointChainOracle(p.env, p.recursion, p.policy, opts),
                  AnalysisError);
}

TEST_CASE("oracle: surrogate tables match long-run simulated frequencies") {
  const auto p = make_preset("hmm2-window1");
  JointChainOracle oracle(p.env, p.recursion, p.policy);
  const auto& sp = oracle.spaces();

  Rng rng = make_rng(17);
  const auto init = burnin_init(p.env, p.recursion, p.policy, 5000, rng);
  const auto traj = simulate(p.env, p.recursion, p.policy, 200000, rng, init);

  Eigen::VectorXd cell_count = Eigen::VectorXd::Zero(sp.n_cells());
  Eigen::MatrixXd next_count = Eigen::MatrixXd::Zero(sp.n_cells(), sp.n_agent);
  Eigen::VectorXd reward_sum = Eigen::VectorXd::Zero(sp.n_cells());
  int gamma = init.gamma0;
  for (long n = 0; n < traj.size(); ++n) {
    const auto i = static_cast<std::size_t>(n);
    const int z = sp.cell(traj.s[i], traj.u[i]);
    gamma = p.recursion.next(gamma, traj.u[i], traj.o_next[i]);
    cell_count(z) += 1.0;
    next_count(z, p.recursion.state(gamma)) += 1.0;
    reward_sum(z) += traj.reward[i];
  }
  for (int z = 0; z < sp.n_cells(); ++z) {
    REQUIRE(cell_count(z) > 0.0);
    CHECK(std::abs(cell_count(z) / traj.size() -
                   oracle.stationary_cells()(z)) < 0.02);
    CHECK(std::abs(reward_sum(z) / cell_count(z) - oracle.rbar()(z)) < 0.02);
    for (int sn = 0; sn < sp.n_agent; ++sn)
      CHECK(std::abs(next_count(z, sn) / cell_count(z) -
                     oracle.q_kernel()(z, sn)) < 0.02);
  }
}

TEST_CASE("fixed point: satisfies its defining equation to 1e-10") {
  for (const char* name : {"markov-consistent", "hmm2-window1"}) {
    const auto p = make_preset(name);
    JointChainOracle oracle(p.env, p.recursion, p.policy);
    const auto q = fixed_point_qstar(oracle, p.discount);
    const auto& sp = oracle.spaces();
    for (int s = 0; s < sp.n_agent; ++s)
      for (int u = 0; u < sp.n_act; ++u) {
        const int z = sp.cell(s, u);
        double rhs = oracle.rbar()(z);
        for (int sn = 0; sn < sp.n_agent; ++sn)
          rhs += p.discount * oracle.q_kernel()(z, sn) *
                 q.max_over_actions(sn);
        CHECK(std::abs(q.values(s, u) - rhs) < 1e-10);
      }
    CHECK(q.in_range());
  }
}

TEST_CASE("fixed point: agrees with greedy-pattern linear solves") {
  // Independent method: enumerate every candidate greedy-action pattern,
  // solve the induced linear system exactly, and keep the self-consistent
  // pattern.  Must match the iterative fixed point to 1e-10.
  const auto p = make_preset("markov-consistent");
  JointChainOracle oracle(p.env, p.recursion, p.policy);
  const auto q = fixed_point_qstar(oracle, p.discount);
  const auto& sp = oracle.spaces();
  const int nz = sp.n_cells();

  bool found = false;
  for (int pat = 0; pat < (1 << sp.n_agent); ++pat) {
    std::vector<int> greedy(static_cast<std::size_t>(sp.n_agent));
    for (int s = 0; s < sp.n_agent; ++s)
      greedy[static_cast<std::size_t>(s)] = (pat >> s) & 1;

    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(nz, nz);
    Eigen::VectorXd rhs(nz);
    for (int z = 0; z < nz; ++z) {
      rhs(z) = oracle.rbar()(z);
      for (int sn = 0; sn < sp.n_agent; ++sn)
        a(z, sp.cell(sn, greedy[static_cast<std::size_t>(sn)])) -=
            p.discount * oracle.q_kernel()(z, sn);
    }
    Eigen::VectorXd sol = a.partialPivLu().solve(rhs);

    bool consistent = true;
    for (int s = 0; s < sp.n_agent && consistent; ++s) {
      const int g = greedy[static_cast<std::size_t>(s)];
      for (int u = 0; u < sp.n_act; ++u)
        if (sol(sp.cell(s, u)) > sol(sp.cell(s, g)) + 1e-12)
          consistent = false;
    }
    if (!consistent) continue;
    found = true;
    for (int s = 0; s < sp.n_agent; ++s)
      for (int u = 0; u < sp.n_act; ++u)
        CHECK(std::abs(sol(sp.cell(s, u)) - q.values(s, u)) < 1e-10);
  }
  CHECK(found);
}

TEST_CASE("fixed point: history-averaged evaluation agrees to 1e-8") {
  for (const char* name :
       {"markov-consistent", "hmm2-window1", "hmm3-window2", "iid-window1"}) {
    CAPTURE(name);
    const auto p = make_preset(name);
    JointChainOracle oracle(p.env, p.recursion, p.policy);
    const auto a = fixed_point_qstar(oracle, p.discount);
    const auto b = history_averaged_fixed_point(oracle, p.discount);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("oracle: belief tables are conditional laws of the hidden state") {
  const auto p = make_preset("hmm2-window1");
  JointChainOracle oracle(p.env, p.recursion, p.policy);
  const auto gamma_law = oracle.stationary_gamma();
  Eigen::VectorXd recon = Eigen::VectorXd::Zero(oracle.n_joint());
  for (int g = 0; g < p.recursion.n_gamma; ++g) {
    if (gamma_law(g) <= 0.0) continue;
    const auto b = oracle.belief_given_gamma(g);
    CHECK(b.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.minCoeff() >= 0.0);
    for (int x = 0; x < p.env.spaces().n_hidden; ++x)
      recon(oracle.joint_index(x, g)) = gamma_law(g) * b(x);
  }
  CHECK((recon - oracle.stationary()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stationary start: deterministic and supported on the class") {
  const auto p = make_preset("hmm2-window1");
  JointChainOracle oracle(p.env, p.recursion, p.policy);
  Rng r1 = make_rng(9);
  Rng r2 = make_rng(9);
  const auto a = stationary_init(oracle, r1);
  const auto b = stationary_init(oracle, r2);
  CHECK(a.x0 == b.x0);
  CHECK(a.gamma0 == b.gamma0);
  CHECK(a.belief0 == b.belief0);
  CHECK(oracle.stationary()(oracle.joint_index(a.x0, a.gamma0)) > 0.0);
  CHECK((a.belief0 - oracle.belief_given_gamma(a.gamma0))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("offset terms: stationary means vanish for arbitrary tables") {
  Rng rng = make_rng(23);
  for (const char* name : {"markov-consistent", "hmm2-window1"}) {
    CAPTURE(name);
    const auto p = make_preset(name);
    JointChainOracle oracle(p.env, p.recursion, p.policy);
    PoissonBasis basis(oracle);
    const auto& sp = oracle.spaces();
    for (int rep = 0; rep < 3; ++rep) {
      QTable q(sp.n_agent, sp.n_act, p.discount);
      for (int s = 0; s < sp.n_agent; ++s)
        for (int u = 0; u < sp.n_act; ++u)
          q.values(s, u) = uniform53(rng) * q.upper_bound();
      CHECK(zeta_stationary_mean(oracle, q).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(omega_stationary_mean(oracle, basis, q).cwiseAbs().maxCoeff() <
            1e-10);
    }
  }
}
