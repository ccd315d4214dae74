#include "nmq/env.hpp"

#include <cmath>
#include <string>

#include "nmq/errors.hpp"

namespace nmq {

namespace {

constexpr double kRowSumTol = 1e-12;

void validate_and_renormalize_rows(Eigen::MatrixXd& m, const std::string& name) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (!(v >= 0.0) || !std::isfinite(v))
        throw ConfigError(name + ": row " + std::to_string(i) +
                          " has a negative or non-finite entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTol)
      throw ConfigError(name + ": row " + std::to_string(i) +
                        " sums to " + std::to_string(sum) + ", expected 1");
    m.row(i) /= sum;
  }
}

}  // namespace

HmmEnvironment::HmmEnvironment(FiniteSpaces spaces,
                               std::vector<Eigen::MatrixXd> transition,
                               Eigen::MatrixXd emission,
                               std::vector<Eigen::MatrixXd> reward_table)
    : spaces_(spaces),
      transition_(std::move(transition)),
      emission_(std::move(emission)),
      reward_table_(std::move(reward_table)) {
  spaces_.validate();
  const int nx = spaces_.n_hidden;
  const int no = spaces_.n_obs;
  const int nu = spaces_.n_act;
  const int ns = spaces_.n_agent;

  if (static_cast<int>(transition_.size()) != nu)
    throw ConfigError("transition: expected one matrix per action (" +
                      std::to_string(nu) + "), got " +
                      std::to_string(transition_.size()));
  for (int u = 0; u < nu; ++u) {
    auto& t = transition_[static_cast<std::size_t>(u)];
    if (t.rows() != nx || t.cols() != nx)
      throw ConfigError("transition[" + std::to_string(u) + "]: expected " +
                        std::to_string(nx) + "x" + std::to_string(nx) +
                        " matrix");
    validate_and_renormalize_rows(t, "transition[" + std::to_string(u) + "]");
  }
  if (emission_.rows() != nx || emission_.cols() != no)
    throw ConfigError("emission: expected " + std::to_string(nx) + "x" +
                      std::to_string(no) + " matrix");
  validate_and_renormalize_rows(emission_, "emission");

  if (static_cast<int>(reward_table_.size()) != nu)
    throw ConfigError("reward: expected one matrix per action (" +
                      std::to_string(nu) + "), got " +
                      std::to_string(reward_table_.size()));
  for (int u = 0; u < nu; ++u) {
    const auto& r = reward_table_[static_cast<std::size_t>(u)];
    if (r.rows() != ns || r.cols() != no)
      throw ConfigError("reward[" + std::to_string(u) + "]: expected " +
                        std::to_string(ns) + "x" + std::to_string(no) +
                        " matrix (agent states x observations)");
    for (Eigen::Index i = 0; i < r.rows(); ++i)
      for (Eigen::Index j = 0; j < r.cols(); ++j)
        if (!(r(i, j) >= 0.0) || !(r(i, j) <= 1.0))
          throw ConfigError("reward[" + std::to_string(u) +
                            "]: entries must lie in [0, 1]");
  }

  obs_given_xu_.reserve(static_cast<std::size_t>(nu));
  for (int u = 0; u < nu; ++u)
    obs_given_xu_.push_back(transition_[static_cast<std::size_t>(u)] *
                            emission_);
}

Eigen::VectorXd HmmEnvironment::observation_law(const Eigen::VectorXd& belief,
                                                int u) const {
  return obs_given_xu_[static_cast<std::size_t>(u)].transpose() * belief;
}

Eigen::VectorXd HmmEnvironment::belief_update(const Eigen::VectorXd& belief,
                                              int u, int o_next,
                                              long step) const {
  // joint(x') = sum_x b(x) T_u(x, x') E(x', o_next)
  Eigen::VectorXd joint =
      (belief.transpose() * transition_[static_cast<std::size_t>(u)])
          .transpose()
          .cwiseProduct(emission_.col(o_next));
  const double norm = joint.sum();
  if (norm <= 0.0) {
    std::string msg =
        "belief_update: observed symbol " + std::to_string(o_next) +
        " has zero probability under the current belief (action " +
        std::to_string(u) + ")";
    if (step >= 0) msg += " at step " + std::to_string(step);
    throw AnalysisError(msg);
  }
  return joint / norm;
}

std::pair<int, int> HmmEnvironment::step(int x, int u, Rng& rng) const {
  const auto& t = transition_[static_cast<std::size_t>(u)];
  const int x_next = sample_categorical_fn(
      spaces_.n_hidden, [&](int j) { return t(x, j); }, rng);
  const int o_next = sample_categorical_fn(
      spaces_.n_obs, [&](int o) { return emission_(x_next, o); }, rng);
  return {x_next, o_next};
}

}  // namespace nmq
