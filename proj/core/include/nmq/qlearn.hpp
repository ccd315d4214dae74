#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "nmq/agent.hpp"
#include "nmq/env.hpp"
#include "nmq/schedule.hpp"
#include "nmq/sim.hpp"
#include "nmq/spaces.hpp"

namespace nmq {

// Tabular action-value table with its discount.  All entries stay inside
// [0, 1/(1-gamma)] as long as rewards stay in [0, 1] and step sizes in
// (0, 1]; the update enforces this up to a few ulps of rounding and treats
// anything worse as a logic error.
struct QTable {
  Eigen::MatrixXd values;  // n_agent x n_act
  double discount = 0.0;   // in (0, 1)

  QTable() = default;
  QTable(int n_agent, int n_act, double gamma_discount)
      : values(Eigen::MatrixXd::Zero(n_agent, n_act)),
        discount(gamma_discount) {}

  [[nodiscard]] double upper_bound() const { return 1.0 / (1.0 - discount); }
  [[nodiscard]] double max_over_actions(int s) const {
    return values.row(s).maxCoeff();
  }
  // Ties resolve to the lowest action index.
  [[nodiscard]] int greedy_action(int s) const {
    int best = 0;
    for (int u = 1; u < values.cols(); ++u)
      if (values(s, u) > values(s, best)) best = u;
    return best;
  }
  [[nodiscard]] bool in_range() const {
    return values.minCoeff() >= 0.0 && values.maxCoeff() <= upper_bound();
  }
};

// One learning update at the visited cell:
//   Q(s,u) += a_n * (reward + discount * max_a Q(s_next, a) - Q(s,u)).
// Preconditions (enforced upstream): a_n in (0, 1], reward in [0, 1], q in
// range.  The result is clamped back into range when rounding overshoots by
// at most a few ulps; a larger violation indicates broken preconditions and
// throws.
void q_update(QTable& q, int s, int u, int s_next, double reward, double a_n);

// Logarithmic checkpoint grid for an n_steps run: 0, then every
// 10^floor(log10(n)) steps, then n_steps itself.  Sorted, distinct.
std::vector<long> checkpoint_grid(long n_steps);

// Everything a per-step observer needs, delivered before the update is
// applied: the realized transition, the pre-step filter, the step size, and
// the pre-update table.
struct StepContext {
  long n = 0;
  int x = 0;
  int gamma_state = 0;
  int s = 0;
  int u = 0;
  int o_next = 0;
  int gamma_next = 0;
  int s_next = 0;
  double reward = 0.0;
  const Eigen::VectorXd* belief = nullptr;
  double a_n = 0.0;
  const QTable* q = nullptr;
};

using StepHook = std::function<void(const StepContext&)>;

struct QLearnOptions {
  std::vector<long> checkpoints;   // sorted ascending; empty = none
  StepHook hook;                   // invoked before each update
  bool record_trajectory = false;
  bool record_beliefs = false;     // implies record_trajectory
  bool assert_range = true;        // verify the range invariant every step
};

struct QLearnResult {
  QTable q;  // final table
  std::vector<long> checkpoint_steps;
  std::vector<Eigen::MatrixXd> checkpoint_values;
  Trajectory trajectory;  // filled when record_trajectory
};

// Run the simulation loop and the learning update in lockstep.  Checkpoint
// k records the table after exactly k updates (so 0 records q0 and n_steps
// records the final table).
QLearnResult run_qlearning(const HmmEnvironment& env,
                           const AgentStateRecursion& rec, const Policy& pol,
                           const StepSchedule& sched, QTable q0, long n_steps,
                           Rng& rng, const SimInit& init,
                           const QLearnOptions& opts = QLearnOptions{});

}  // namespace nmq
