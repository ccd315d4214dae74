#include "nmq/sim.hpp"

#include <string>
#include <utility>

#include "nmq/errors.hpp"

namespace nmq {

StepEngine::StepEngine(const HmmEnvironment& env,
                       const AgentStateRecursion& rec, const Policy& pol,
                       Rng& rng, SimInit init)
    : env_(env),
      rec_(rec),
      pol_(pol),
      rng_(rng),
      x_(init.x0),
      gamma_(init.gamma0),
      belief_(std::move(init.belief0)) {
  const auto& sp = env_.spaces();
  if (x_ < 0 || x_ >= sp.n_hidden)
    throw ConfigError("initial hidden state " + std::to_string(x_) +
                      " out of range");
  if (gamma_ < 0 || gamma_ >= rec_.n_gamma)
    throw ConfigError("initial internal state " + std::to_string(gamma_) +
                      " out of range");
  if (belief_.size() != sp.n_hidden)
    throw ConfigError("initial belief has " + std::to_string(belief_.size()) +
                      " entries, expected " + std::to_string(sp.n_hidden));
  belief_before_ = belief_;
}

StepEngine::Step StepEngine::advance() {
  Step st;
  st.x_before = x_;
  st.gamma_before = gamma_;
  st.s = rec_.state(gamma_);
  st.u = pol_.sample(st.s, rng_);
  const auto [x_next, o_next] = env_.step(x_, st.u, rng_);
  st.x_after = x_next;
  st.o_next = o_next;
  st.reward = env_.reward(st.s, st.u, o_next);
  st.gamma_after = rec_.next(gamma_, st.u, o_next);
  st.s_after = rec_.state(st.gamma_after);

  belief_before_.swap(belief_);
  belief_ = env_.belief_update(belief_before_, st.u, o_next, n_);
  x_ = x_next;
  gamma_ = st.gamma_after;
  ++n_;
  return st;
}

Trajectory simulate(const HmmEnvironment& env, const AgentStateRecursion& rec,
                    const Policy& pol, long n_steps, Rng& rng,
                    const SimInit& init, bool record_beliefs) {
  Trajectory out;
  out.init = init;
  out.x.reserve(static_cast<std::size_t>(n_steps));
  out.gamma_state.reserve(static_cast<std::size_t>(n_steps));
  out.s.reserve(static_cast<std::size_t>(n_steps));
  out.u.reserve(static_cast<std::size_t>(n_steps));
  out.o_next.reserve(static_cast<std::size_t>(n_steps));
  out.reward.reserve(static_cast<std::size_t>(n_steps));
  if (record_beliefs) out.beliefs.reserve(static_cast<std::size_t>(n_steps));

  StepEngine engine(env, rec, pol, rng, init);
  for (long n = 0; n < n_steps; ++n) {
    const auto st = engine.advance();
    out.x.push_back(st.x_before);
    out.gamma_state.push_back(st.gamma_before);
    out.s.push_back(st.s);
    out.u.push_back(st.u);
    out.o_next.push_back(st.o_next);
    out.reward.push_back(st.reward);
    if (record_beliefs) out.beliefs.push_back(engine.belief_before());
  }
  out.x_final = engine.x();
  out.gamma_final = engine.gamma_state();
  out.belief_final = engine.belief();
  return out;
}

SimInit burnin_init(const HmmEnvironment& env, const AgentStateRecursion& rec,
                    const Policy& pol, long steps, Rng& rng) {
  const int nx = env.spaces().n_hidden;
  SimInit start;
  start.gamma0 = 0;
  start.x0 =
      sample_categorical_fn(nx, [&](int) { return 1.0 / nx; }, rng);
  start.belief0 = Eigen::VectorXd::Constant(nx, 1.0 / nx);
  StepEngine engine(env, rec, pol, rng, start);
  for (long n = 0; n < steps; ++n) engine.advance();
  SimInit out;
  out.x0 = engine.x();
  out.gamma0 = engine.gamma_state();
  out.belief0 = engine.belief();
  return out;
}

}  // namespace nmq
