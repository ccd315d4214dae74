#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <utility>
#include <vector>

#include "nmq/agent.hpp"
#include "nmq/env.hpp"
#include "nmq/qlearn.hpp"
#include "nmq/sim.hpp"

namespace nmq {

// Law of the next agent state and the expected reward conditional on the
// full information available to the agent: the internal state gamma plus an
// exact hidden-state belief.
struct ConditionalLaws {
  Eigen::VectorXd next_state_law;  // over next agent states s'
  double expected_reward = 0.0;
};

// Computed by pushing the belief through the observation law:
//   P(s' | info, u) = sum_{o'} 1{readout(update(gamma,u,o')) = s'} P(o'|b,u)
//   E[r | info, u]  = sum_{o'} r(s,u,o') P(o'|b,u)
ConditionalLaws conditional_agent_laws(const HmmEnvironment& env,
                                       const AgentStateRecursion& rec,
                                       const Eigen::VectorXd& belief,
                                       int gamma_state, int u);

// Exact finite-chain analysis of the coupled (hidden state, internal state)
// process under a fixed policy.  Construction builds the joint kernel,
// finds its unique closed communicating class (rejecting chains with
// several closed classes or a periodic one), solves for the stationary law,
// and derives the cell-level surrogate MDP:
//
//   pi_tilde(s,u)   stationary law of (agent state, action)
//   q_kernel(z,s')  stationary conditional law of the next agent state
//   rbar(z)         stationary conditional mean reward
//   psi(z,z')       = q_kernel(z, s') * phi(u'|s'), the cell-level kernel
//
// Everything is validated at construction: stationarity residuals, row
// sums, the psi factorization, and a floor on min pi_tilde.
struct OracleOptions {
  double eps_stat = 1e-6;        // reject if min pi_tilde falls below this
  long dense_solver_max = 2000;  // direct solve up to this class size
  double power_tol = 1e-13;      // L1 tolerance of the power iteration
  long power_max_iters = 2000000;
  long max_joint_states = 100000;
  long max_cells = 1024;  // dense psi is max_cells^2
};

class JointChainOracle {
 public:
  using Options = OracleOptions;

  JointChainOracle(const HmmEnvironment& env, const AgentStateRecursion& rec,
                   const Policy& pol, Options opts = OracleOptions{});

  [[nodiscard]] const FiniteSpaces& spaces() const { return rec_.spaces; }
  [[nodiscard]] const HmmEnvironment& env() const { return env_; }
  [[nodiscard]] const AgentStateRecursion& recursion() const { return rec_; }
  [[nodiscard]] const Policy& policy() const { return pol_; }

  [[nodiscard]] int n_joint() const { return n_joint_; }
  [[nodiscard]] int joint_index(int x, int gamma) const {
    return x * rec_.n_gamma + gamma;
  }
  [[nodiscard]] std::pair<int, int> joint_unpack(int j) const {
    return {j / rec_.n_gamma, j % rec_.n_gamma};
  }

  [[nodiscard]] const Eigen::SparseMatrix<double, Eigen::RowMajor>& kernel()
      const {
    return kernel_;
  }
  // Joint indices of the unique closed communicating class, ascending.
  [[nodiscard]] const std::vector<int>& closed_class() const {
    return closed_class_;
  }
  [[nodiscard]] const Eigen::VectorXd& stationary() const {
    return stationary_;
  }
  [[nodiscard]] const Eigen::VectorXd& stationary_cells() const {
    return pi_cells_;
  }
  [[nodiscard]] const Eigen::VectorXd& stationary_states() const {
    return pi_states_;
  }
  [[nodiscard]] const Eigen::MatrixXd& q_kernel() const { return q_kernel_; }
  [[nodiscard]] const Eigen::VectorXd& rbar() const { return rbar_; }
  [[nodiscard]] const Eigen::MatrixXd& psi() const { return psi_; }
  [[nodiscard]] double pi_min() const { return pi_min_; }

  // Stationary conditional law of the hidden state given the internal
  // state.  Only defined for gamma with positive stationary mass.
  [[nodiscard]] Eigen::VectorXd belief_given_gamma(int gamma) const;
  [[nodiscard]] Eigen::VectorXd stationary_gamma() const;

  [[nodiscard]] double stationary_residual() const {
    return stationary_residual_;
  }
  [[nodiscard]] double psi_residual() const { return psi_residual_; }

 private:
  void build_kernel();
  void find_closed_class();
  void solve_stationary();
  void derive_cell_tables();

  HmmEnvironment env_;
  AgentStateRecursion rec_;
  Policy pol_;
  Options opts_;
  int n_joint_ = 0;

  Eigen::SparseMatrix<double, Eigen::RowMajor> kernel_;
  std::vector<int> closed_class_;
  Eigen::VectorXd stationary_;
  Eigen::VectorXd pi_cells_;
  Eigen::VectorXd pi_states_;
  Eigen::MatrixXd q_kernel_;
  Eigen::VectorXd rbar_;
  Eigen::MatrixXd psi_;
  double pi_min_ = 0.0;
  double stationary_residual_ = 0.0;
  double psi_residual_ = 0.0;
};

// Unique fixed point of Q(s,u) = rbar(s,u) + discount * sum_{s'}
// q(s'|s,u) max_a Q(s',a), iterated to sup-norm residual 1e-12.
QTable fixed_point_qstar(const JointChainOracle& oracle, double discount);

// Independent evaluation of the same limit: every sweep re-averages the
// information-conditioned laws of the enumerated joint states within each
// cell (raw loop over class members with point-mass beliefs) instead of
// using the precomputed cell tables.  Must agree with fixed_point_qstar to
// 1e-8.
QTable history_averaged_fixed_point(const JointChainOracle& oracle,
                                    double discount);

// Solution of the cell-level Poisson equation for a given table:
//   V(z) = F(z) - sum_z' pi_tilde(z') F(z') + sum_z' psi(z'|z) V(z'),
// pinned by V(z0) = 0 at the lexicographically first cell.  Because V is
// linear in the per-cell expected update F, a basis W is solved once
// (column c answers F = e_c) and per-table solutions are the matrix-vector
// product W * F(Q).  Two factorizations with different pivoting strategies
// must agree to 1e-8 at construction.
struct PoissonSolution {
  Eigen::VectorXd v;       // per cell; v[z0] == 0
  int z0 = 0;
  double residual = 0.0;   // max-abs residual of the displayed equation
};

class PoissonBasis {
 public:
  explicit PoissonBasis(const JointChainOracle& oracle);

  [[nodiscard]] const Eigen::MatrixXd& w() const { return w_; }
  [[nodiscard]] int z0() const { return z0_; }
  [[nodiscard]] double residual() const { return residual_; }
  [[nodiscard]] double pivot_discrepancy() const {
    return pivot_discrepancy_;
  }

  // Per-cell expected update ("F"): rbar + discount * q_kernel * max - Q.
  [[nodiscard]] Eigen::VectorXd expected_update(const QTable& q) const;
  [[nodiscard]] PoissonSolution solve(const QTable& q) const;

  // Numerical bound on sup_Q ||V(Q)||_inf over the admissible Q-range:
  // per-cell 17-point sweeps around the zero / top / midpoint tables, all
  // hypercube corners when there are at most 12 cells, doubled for safety.
  [[nodiscard]] double v_max_bound(double discount) const;

 private:
  FiniteSpaces spaces_;
  Eigen::MatrixXd q_kernel_;
  Eigen::VectorXd rbar_;
  Eigen::VectorXd pi_cells_;
  Eigen::MatrixXd psi_;
  Eigen::MatrixXd w_;
  int z0_ = 0;
  double residual_ = 0.0;
  double pivot_discrepancy_ = 0.0;
};

// Draw an exact stationary start: (x0, gamma0) from the joint stationary
// law, belief = stationary conditional of the hidden state given gamma0.
SimInit stationary_init(const JointChainOracle& oracle, Rng& rng);

// Exact per-cell stationary means of the two offset terms, by enumeration
// over the closed class with point-mass beliefs (valid by the tower
// property; see the decomposition module for the per-step definitions).
// Both must vanish identically for any table.
Eigen::VectorXd zeta_stationary_mean(const JointChainOracle& oracle,
                                     const QTable& q);
Eigen::VectorXd omega_stationary_mean(const JointChainOracle& oracle,
                                      const PoissonBasis& basis,
                                      const QTable& q);

}  // namespace nmq
