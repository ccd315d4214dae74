#pragma once

#include <Eigen/Dense>

#include "nmq/agent.hpp"
#include "nmq/env.hpp"

namespace nmq {

// Finite-horizon dependence matrices of the coordinate process
//   W_1 = (X_1, G_1, U_1),   W_m = (O_m, U_m) for m > 1,
// where G is the recursively computed agent state.  Entry (i, j) with
// i < j measures how much the first i coordinates can sway the future:
//   phi(i, j) = sup over prefixes and sibling pairs (w_i, w_i') of the
//               total-variation distance between the conditional laws of
//               (Z_j, O_{j+1}) given (w_1..w_{i-1}, w_i) and given
//               (w_1..w_{i-1}, w_i'),
//   psi(i, j) = the same with (Z_j, Z_{j+1}) in place of (Z_j, O_{j+1}),
// with Z_m = (S_m, U_m).  The diagonal of phi is set to 1, the diagonal
// of psi is computed, and entries below the diagonal are zero.  The sup
// ranges over positive-probability prefixes only.
//
// Two independent evaluations are provided: a conditional-propagation
// method (beliefs filtered along each prefix, laws pushed forward through
// the joint state-chain kernel) and a brute-force method (every complete
// configuration of hidden states, observations, and actions enumerated
// and grouped by prefix).  They must agree; tests and the acceptance
// gate hold them to that.
struct DependenceMatrices {
  Eigen::MatrixXd phi;
  Eigen::MatrixXd psi;
  double phi_spectral = 0.0;
  double psi_spectral = 0.0;
  double d4 = 0.0;  // max of the two spectral norms
};

// initial_joint is a distribution over joint states (x, g) indexed
// x * n_gamma + g, giving the law of (X_1, G_1); U_1 then follows the
// policy at the read-out agent state.
DependenceMatrices dependence_matrices(const HmmEnvironment& env,
                                       const AgentStateRecursion& rec,
                                       const Policy& policy,
                                       const Eigen::VectorXd& initial_joint,
                                       int horizon, long path_budget);

DependenceMatrices dependence_matrices_brute(
    const HmmEnvironment& env, const AgentStateRecursion& rec,
    const Policy& policy, const Eigen::VectorXd& initial_joint, int horizon,
    long path_budget);

// A generic initial law for chains whose joint process need not have a
// unique stationary law: uniform over hidden states, agent state 0,
// pushed the given number of steps through the policy-integrated joint
// kernel.
Eigen::VectorXd warmup_initial_law(const HmmEnvironment& env,
                                   const AgentStateRecursion& rec,
                                   const Policy& policy, long steps);

}  // namespace nmq
