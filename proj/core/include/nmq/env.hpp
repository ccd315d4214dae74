#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "nmq/rng.hpp"
#include "nmq/spaces.hpp"

namespace nmq {

// Controlled hidden-Markov environment.  A latent chain x moves under
// action-indexed transition rows, emits an observation from the landed
// state, and pays a reward that depends on the agent's own summary state,
// the action, and the next observation.
//
//   transition[u](x, x')  -- P(x' | x, u), row-stochastic
//   emission(x, o)        -- P(o | x), row-stochastic
//   reward_table[u](s, o') -- r(s, u, o') in [0, 1]
//
// Rows are validated to sum to one within 1e-12 and then renormalized once
// at construction, so downstream exact-enumeration code can treat them as
// exact probability vectors.
class HmmEnvironment {
 public:
  HmmEnvironment(FiniteSpaces spaces, std::vector<Eigen::MatrixXd> transition,
                 Eigen::MatrixXd emission,
                 std::vector<Eigen::MatrixXd> reward_table);

  [[nodiscard]] const FiniteSpaces& spaces() const { return spaces_; }
  [[nodiscard]] const Eigen::MatrixXd& transition(int u) const {
    return transition_[static_cast<std::size_t>(u)];
  }
  [[nodiscard]] const Eigen::MatrixXd& emission() const { return emission_; }
  [[nodiscard]] double reward(int s, int u, int o_next) const {
    return reward_table_[static_cast<std::size_t>(u)](s, o_next);
  }
  // P(o' | x, u), marginalizing the landed hidden state.
  [[nodiscard]] const Eigen::MatrixXd& obs_given_xu(int u) const {
    return obs_given_xu_[static_cast<std::size_t>(u)];
  }

  // Law of the next observation given a belief over the hidden state and an
  // action: sum_x b(x) * P(o' | x, u).
  [[nodiscard]] Eigen::VectorXd observation_law(const Eigen::VectorXd& belief,
                                                int u) const;

  // Bayes update of the hidden-state belief after playing u and seeing
  // o_next.  A zero normalizer means the observed symbol has probability
  // zero under the current belief (filtering degeneracy); `step` is only
  // used to label the error message.
  [[nodiscard]] Eigen::VectorXd belief_update(const Eigen::VectorXd& belief,
                                              int u, int o_next,
                                              long step = -1) const;

  // Sample one environment transition: (x, u) -> (x', o').
  [[nodiscard]] std::pair<int, int> step(int x, int u, Rng& rng) const;

 private:
  FiniteSpaces spaces_;
  std::vector<Eigen::MatrixXd> transition_;
  Eigen::MatrixXd emission_;
  std::vector<Eigen::MatrixXd> reward_table_;
  std::vector<Eigen::MatrixXd> obs_given_xu_;
};

}  // namespace nmq
