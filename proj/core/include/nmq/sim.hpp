#pragma once

#include <Eigen/Dense>
#include <vector>

#include "nmq/agent.hpp"
#include "nmq/env.hpp"
#include "nmq/rng.hpp"

namespace nmq {

// Initial condition of a run: hidden state, internal agent state, and the
// conditional law of the hidden state given everything the agent has seen
// so far (exact by construction for both supported initializers).
struct SimInit {
  int x0 = 0;
  int gamma0 = 0;
  Eigen::VectorXd belief0;
};

// Recorded rollout.  Row n holds the step taken at time n: the pre-step
// hidden and internal states, the agent state and action, the realized next
// observation, and the reward.  Beliefs (optional) are pre-step: beliefs[n]
// is the filter at action time n.
struct Trajectory {
  SimInit init;
  std::vector<int> x;            // hidden state before step n
  std::vector<int> gamma_state;  // internal state before step n
  std::vector<int> s;            // readout of gamma_state[n]
  std::vector<int> u;            // action played
  std::vector<int> o_next;       // realized observation
  std::vector<double> reward;
  std::vector<Eigen::VectorXd> beliefs;  // optional, pre-step filters

  int x_final = 0;
  int gamma_final = 0;
  Eigen::VectorXd belief_final;

  [[nodiscard]] long size() const { return static_cast<long>(u.size()); }
};

// Single-step driver shared by plain simulation and the learning loop.
// Maintains (x, gamma, belief) and the step counter; `advance` plays one
// policy action, samples the environment, updates the exact filter, and
// commits.  The filter that was current when the action was chosen stays
// readable through `belief_before` until the next advance.
class StepEngine {
 public:
  struct Step {
    int x_before = 0;
    int gamma_before = 0;
    int s = 0;
    int u = 0;
    int o_next = 0;
    int x_after = 0;
    int gamma_after = 0;
    int s_after = 0;
    double reward = 0.0;
  };

  StepEngine(const HmmEnvironment& env, const AgentStateRecursion& rec,
             const Policy& pol, Rng& rng, SimInit init);

  Step advance();

  [[nodiscard]] const Eigen::VectorXd& belief() const { return belief_; }
  [[nodiscard]] const Eigen::VectorXd& belief_before() const {
    return belief_before_;
  }
  [[nodiscard]] int x() const { return x_; }
  [[nodiscard]] int gamma_state() const { return gamma_; }
  [[nodiscard]] long steps_done() const { return n_; }

 private:
  const HmmEnvironment& env_;
  const AgentStateRecursion& rec_;
  const Policy& pol_;
  Rng& rng_;
  int x_;
  int gamma_;
  Eigen::VectorXd belief_;
  Eigen::VectorXd belief_before_;
  long n_ = 0;
};

// Roll a trajectory of n_steps transitions from the given initial
// condition.
Trajectory simulate(const HmmEnvironment& env, const AgentStateRecursion& rec,
                    const Policy& pol, long n_steps, Rng& rng,
                    const SimInit& init, bool record_beliefs = false);

// Warm-up initializer: start from a uniform hidden draw, internal state 0,
// and the uniform belief, run `steps` policy steps, and return the landed
// (x, gamma, belief) triple.  The belief is carried exactly through the
// discarded segment, so the recorded run starts with the true filter given
// the warm-up history.
SimInit burnin_init(const HmmEnvironment& env, const AgentStateRecursion& rec,
                    const Policy& pol, long steps, Rng& rng);

}  // namespace nmq
