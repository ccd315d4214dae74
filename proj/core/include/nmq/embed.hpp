#pragma once

#include <Eigen/Dense>
#include <vector>

namespace nmq {

// Finite-space conditional mean embeddings with one-hot feature maps, and
// the linear recursive filter built from them.
//
// The filter models the conditional law of a finite latent label given the
// observation history through two fitted operators:
//   mu_{n+1} = project(T1 * mu_n + T2 * onehot(o_{n+1}))
// where project clips negatives and renormalizes.  The module is agnostic
// about what the labels are; callers choose the label sequence (the
// latent chain of the environment, or the agent's own recursion states)
// and supply index triples (label_n, obs_{n+1}, label_{n+1}).

// Centered second-moment statistics of paired one-hot samples.
struct CrossCovariance {
  Eigen::MatrixXd c_xx;  // dim_x x dim_x, symmetric
  Eigen::MatrixXd c_yx;  // dim_y x dim_x
  Eigen::VectorXd mu_x;
  Eigen::VectorXd mu_y;
};

CrossCovariance fit_cross_covariance(const std::vector<int>& xs,
                                     const std::vector<int>& ys, int dim_x,
                                     int dim_y);

// Uncentered (raw) second moments of the same samples.
struct SecondMoments {
  Eigen::MatrixXd m_xx;
  Eigen::MatrixXd m_yx;
};

SecondMoments fit_second_moments(const std::vector<int>& xs,
                                 const std::vector<int>& ys, int dim_x,
                                 int dim_y);

// Ridge-regularized conditional operator  C_yx (C_xx + lambda I)^{-1}.
// Works on centered or raw moments; with raw one-hot moments and exact
// population statistics the rows converge to the conditional probability
// table as lambda -> 0.  A singular regularized matrix is refused with a
// hint to raise lambda.
Eigen::MatrixXd conditional_operator(const Eigen::MatrixXd& c_yx,
                                     const Eigen::MatrixXd& c_xx,
                                     double lambda);

// Recursive filter operators fitted by a single two-block ridge regression
// of onehot(label_{n+1}) against [onehot(label_n); onehot(obs_{n+1})].
// The two blocks share a gauge freedom (adding a constant to a row of T1
// and subtracting it from the same row of T2 leaves every prediction on
// one-hot inputs unchanged); it is fixed by an L1 criterion: each row is
// shifted by the median of its combined entry multiset, which restores
// exactly sparse representatives such as (0, M) for observation-determined
// labels and (I, 0) for frozen labels.
struct FilterOperators {
  Eigen::MatrixXd t1;  // n_label x n_label
  Eigen::MatrixXd t2;  // n_label x n_obs
  double lambda = 0.0;
};

// lambda < 0 selects the default 1e-3 * trace(M) / dim of the block design
// moment matrix.
FilterOperators fit_filter_operators(const std::vector<int>& labels,
                                     const std::vector<int>& obs_next,
                                     const std::vector<int>& labels_next,
                                     int n_label, int n_obs,
                                     double lambda = -1.0);

// Clip negative entries and renormalize.  A vector that is already a
// probability vector is returned unchanged; if everything clips to zero
// the filter has lost track and the uniform law is returned (the update
// never fails).
Eigen::VectorXd simplex_project(const Eigen::VectorXd& v);

// One filter step: propagate, inject the observation, project.
Eigen::VectorXd filter_update(const FilterOperators& ops,
                              const Eigen::VectorXd& mu, int o_next);

// Most probable label under the (projected) filter state; ties break to
// the lowest index.
int infer_state(const Eigen::VectorXd& mu);

}  // namespace nmq
