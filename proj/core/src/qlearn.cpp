#include "nmq/qlearn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "nmq/errors.hpp"

namespace nmq {

void q_update(QTable& q, int s, int u, int s_next, double reward, double a_n) {
  const double before = q.values(s, u);
  const double target = reward + q.discount * q.max_over_actions(s_next);
  double after = before + a_n * (target - before);

  // The exact update is a convex combination of two in-range quantities, so
  // any excursion beyond the range is pure rounding; tolerate a few ulps
  // and clamp, treat more as a precondition violation.
  const double hi = q.upper_bound();
  const double slack = 8.0 * std::numeric_limits<double>::epsilon() * hi;
  if (after < 0.0) {
    if (after < -slack)
      throw std::logic_error("q_update: value " + std::to_string(after) +
                             " fell below 0; preconditions violated");
    after = 0.0;
  } else if (after > hi) {
    if (after > hi + slack)
      throw std::logic_error("q_update: value " + std::to_string(after) +
                             " exceeded 1/(1-discount); preconditions "
                             "violated");
    after = hi;
  }
  q.values(s, u) = after;
}

std::vector<long> checkpoint_grid(long n_steps) {
  std::vector<long> out;
  out.push_back(0);
  for (long spacing = 1; spacing < n_steps; spacing *= 10)
    for (long n = spacing; n < spacing * 10 && n < n_steps; n += spacing)
      out.push_back(n);
  if (n_steps > 0) out.push_back(n_steps);
  return out;
}

QLearnResult run_qlearning(const HmmEnvironment& env,
                           const AgentStateRecursion& rec, const Policy& pol,
                           const StepSchedule& sched, QTable q0, long n_steps,
                           Rng& rng, const SimInit& init,
                           const QLearnOptions& opts) {
  if (!q0.in_range())
    throw ConfigError("initial Q table violates the [0, 1/(1-discount)] range");
  if (q0.values.rows() != rec.spaces.n_agent ||
      q0.values.cols() != rec.spaces.n_act)
    throw ConfigError("initial Q table shape does not match the spaces");

  QLearnResult out;
  out.q = std::move(q0);
  const bool record = opts.record_trajectory || opts.record_beliefs;
  if (record) {
    out.trajectory.init = init;
    out.trajectory.x.reserve(static_cast<std::size_t>(n_steps));
    out.trajectory.gamma_state.reserve(static_cast<std::size_t>(n_steps));
    out.trajectory.s.reserve(static_cast<std::size_t>(n_steps));
    out.trajectory.u.reserve(static_cast<std::size_t>(n_steps));
    out.trajectory.o_next.reserve(static_cast<std::size_t>(n_steps));
    out.trajectory.reward.reserve(static_cast<std::size_t>(n_steps));
    if (opts.record_beliefs)
      out.trajectory.beliefs.reserve(static_cast<std::size_t>(n_steps));
  }

  StepEngine engine(env, rec, pol, rng, init);
  std::size_t next_cp = 0;
  for (long n = 0; n < n_steps; ++n) {
    while (next_cp < opts.checkpoints.size() && opts.checkpoints[next_cp] == n) {
      out.checkpoint_steps.push_back(n);
      out.checkpoint_values.push_back(out.q.values);
      ++next_cp;
    }

    const auto st = engine.advance();
    const double a_n = sched(n);

    if (opts.hook) {
      StepContext ctx;
      ctx.n = n;
      ctx.x = st.x_before;
      ctx.gamma_state = st.gamma_before;
      ctx.s = st.s;
      ctx.u = st.u;
      ctx.o_next = st.o_next;
      ctx.gamma_next = st.gamma_after;
      ctx.s_next = st.s_after;
      ctx.reward = st.reward;
      ctx.belief = &engine.belief_before();
      ctx.a_n = a_n;
      ctx.q = &out.q;
      opts.hook(ctx);
    }

    q_update(out.q, st.s, st.u, st.s_after, st.reward, a_n);
    if (opts.assert_range && !out.q.in_range())
      throw std::logic_error("q table left its range at step " +
                             std::to_string(n));

    if (record) {
      out.trajectory.x.push_back(st.x_before);
      out.trajectory.gamma_state.push_back(st.gamma_before);
      out.trajectory.s.push_back(st.s);
      out.trajectory.u.push_back(st.u);
      out.trajectory.o_next.push_back(st.o_next);
      out.trajectory.reward.push_back(st.reward);
      if (opts.record_beliefs)
        out.trajectory.beliefs.push_back(engine.belief_before());
    }
  }
  while (next_cp < opts.checkpoints.size() &&
         opts.checkpoints[next_cp] <= n_steps) {
    if (opts.checkpoints[next_cp] == n_steps) {
      out.checkpoint_steps.push_back(n_steps);
      out.checkpoint_values.push_back(out.q.values);
    }
    ++next_cp;
  }
  if (record) {
    out.trajectory.x_final = engine.x();
    out.trajectory.gamma_final = engine.gamma_state();
    out.trajectory.belief_final = engine.belief();
  }
  return out;
}

}  // namespace nmq
