#pragma once

#include <Eigen/Dense>
#include <vector>

#include "nmq/rng.hpp"
#include "nmq/spaces.hpp"

namespace nmq {

// A recursively computed agent state: an internal index gamma advanced by
// a deterministic table on (gamma, action, next observation), plus a
// readout mapping gamma to the (possibly smaller) state set the learner
// actually conditions on.
//
//   gamma' = update[gamma, u, o']      (the recursion)
//   s      = readout[gamma]            (surjective onto {0..n_agent-1})
//
// The readout being the identity recovers the plain "learn on gamma" case.
struct AgentStateRecursion {
  FiniteSpaces spaces;         // n_agent = size of the readout's codomain
  int n_gamma = 0;             // size of the internal state set
  std::vector<int> update;     // [gamma][u][o'] flattened, size n_gamma*n_act*n_obs
  std::vector<int> readout;    // [gamma] -> s, size n_gamma

  [[nodiscard]] int next(int gamma, int u, int o_next) const {
    return update[static_cast<std::size_t>(
        (gamma * spaces.n_act + u) * spaces.n_obs + o_next)];
  }
  [[nodiscard]] int state(int gamma) const {
    return readout[static_cast<std::size_t>(gamma)];
  }

  // Checks table shapes, index ranges, and surjectivity of the readout.
  void validate() const;
};

// Sliding-window agent state: gamma encodes the current observation plus
// the previous `window` (observation, action) pairs, readout = identity.
// The internal state count is n_obs * (n_act * n_obs)^window; sizes above
// `cap` are refused with the offending size in the message.
AgentStateRecursion make_window_recursion(const FiniteSpaces& spaces,
                                          int window, long cap = 100000);

// Mixed-radix window codec used by make_window_recursion, exposed so tests
// and tools can decode logged gamma values.  Digit 0 (least significant,
// base n_obs) is the current observation; digit k >= 1 (base n_act*n_obs)
// is the pair at lag k encoded as u + n_act * o.
struct WindowCode {
  int n_obs = 0;
  int n_act = 0;
  int window = 0;

  struct Decoded {
    int current_obs = 0;
    // lagged[k-1] = (action, observation) at lag k, k = 1..window
    std::vector<std::pair<int, int>> lagged;
  };

  [[nodiscard]] long size() const;
  [[nodiscard]] int encode(const Decoded& d) const;
  [[nodiscard]] Decoded decode(int gamma) const;
};

// Stationary randomized policy: phi(s, u) = P(play u | agent state s).
struct Policy {
  Eigen::MatrixXd phi;  // n_agent x n_act, row-stochastic

  void validate(const FiniteSpaces& spaces) const;
  [[nodiscard]] double min_entry() const { return phi.minCoeff(); }
  [[nodiscard]] int sample(int s, Rng& rng) const {
    return sample_categorical_fn(
        static_cast<int>(phi.cols()), [&](int u) { return phi(s, u); }, rng);
  }
};

// Uniform policy over the action set.
Policy make_uniform_policy(const FiniteSpaces& spaces);

}  // namespace nmq
