#include "nmq/agent.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "nmq/errors.hpp"

namespace nmq {

void AgentStateRecursion::validate() const {
  spaces.validate();
  if (n_gamma < 1)
    throw ConfigError("agent state: n_gamma must be >= 1");
  const std::size_t expect_update = static_cast<std::size_t>(n_gamma) *
                                    static_cast<std::size_t>(spaces.n_act) *
                                    static_cast<std::size_t>(spaces.n_obs);
  if (update.size() != expect_update)
    throw ConfigError("agent state: update table has " +
                      std::to_string(update.size()) + " entries, expected " +
                      std::to_string(expect_update));
  if (readout.size() != static_cast<std::size_t>(n_gamma))
    throw ConfigError("agent state: readout table has " +
                      std::to_string(readout.size()) + " entries, expected " +
                      std::to_string(n_gamma));
  for (int v : update)
    if (v < 0 || v >= n_gamma)
      throw ConfigError("agent state: update entry " + std::to_string(v) +
                        " outside [0, " + std::to_string(n_gamma) + ")");
  std::vector<bool> hit(static_cast<std::size_t>(spaces.n_agent), false);
  for (int v : readout) {
    if (v < 0 || v >= spaces.n_agent)
      throw ConfigError("agent state: readout entry " + std::to_string(v) +
                        " outside [0, " + std::to_string(spaces.n_agent) + ")");
    hit[static_cast<std::size_t>(v)] = true;
  }
  for (int s = 0; s < spaces.n_agent; ++s)
    if (!hit[static_cast<std::size_t>(s)])
      throw ConfigError("agent state: readout misses state " +
                        std::to_string(s) +
                        " (readout must be surjective)");
}

long WindowCode::size() const {
  long sz = n_obs;
  const long pair = static_cast<long>(n_act) * n_obs;
  for (int k = 0; k < window; ++k) sz *= pair;
  return sz;
}

int WindowCode::encode(const Decoded& d) const {
  const long pair = static_cast<long>(n_act) * n_obs;
  long code = 0;
  long radix = 1;
  for (int k = 1; k <= window; ++k) {
    const auto [u, o] = d.lagged[static_cast<std::size_t>(k - 1)];
    code += (u + static_cast<long>(n_act) * o) * radix;
    radix *= pair;
  }
  return static_cast<int>(d.current_obs + static_cast<long>(n_obs) * code);
}

WindowCode::Decoded WindowCode::decode(int gamma) const {
  Decoded d;
  long rest = gamma;
  d.current_obs = static_cast<int>(rest % n_obs);
  rest /= n_obs;
  const long pair = static_cast<long>(n_act) * n_obs;
  d.lagged.resize(static_cast<std::size_t>(window));
  for (int k = 1; k <= window; ++k) {
    const long digit = rest % pair;
    rest /= pair;
    d.lagged[static_cast<std::size_t>(k - 1)] = {
        static_cast<int>(digit % n_act), static_cast<int>(digit / n_act)};
  }
  return d;
}

AgentStateRecursion make_window_recursion(const FiniteSpaces& spaces,
                                          int window, long cap) {
  if (window < 0)
    throw ConfigError("window agent state: window length must be >= 0");
  WindowCode code{spaces.n_obs, spaces.n_act, window};
  const long n_gamma = code.size();
  if (n_gamma > cap)
    throw ConfigError("window agent state: internal state count " +
                      std::to_string(n_gamma) + " exceeds the cap of " +
                      std::to_string(cap));

  AgentStateRecursion rec;
  rec.spaces = spaces;
  rec.spaces.n_agent = static_cast<int>(n_gamma);
  rec.n_gamma = static_cast<int>(n_gamma);
  rec.update.resize(static_cast<std::size_t>(n_gamma) *
                    static_cast<std::size_t>(spaces.n_act) *
                    static_cast<std::size_t>(spaces.n_obs));
  rec.readout.resize(static_cast<std::size_t>(n_gamma));
  for (int g = 0; g < rec.n_gamma; ++g)
    rec.readout[static_cast<std::size_t>(g)] = g;

  for (int g = 0; g < rec.n_gamma; ++g) {
    const WindowCode::Decoded cur = code.decode(g);
    for (int u = 0; u < spaces.n_act; ++u) {
      for (int o = 0; o < spaces.n_obs; ++o) {
        WindowCode::Decoded next;
        next.current_obs = o;
        next.lagged.resize(static_cast<std::size_t>(window));
        if (window > 0) {
          // New lag-1 pair: the action just taken with the outgoing current
          // observation; deeper lags shift by one.
          next.lagged[0] = {u, cur.current_obs};
          for (int k = 2; k <= window; ++k)
            next.lagged[static_cast<std::size_t>(k - 1)] =
                cur.lagged[static_cast<std::size_t>(k - 2)];
        }
        rec.update[static_cast<std::size_t>(
            (g * spaces.n_act + u) * spaces.n_obs + o)] = code.encode(next);
      }
    }
  }
  rec.validate();
  return rec;
}

void Policy::validate(const FiniteSpaces& spaces) const {
  if (phi.rows() != spaces.n_agent || phi.cols() != spaces.n_act)
    throw ConfigError("policy: expected " + std::to_string(spaces.n_agent) +
                      "x" + std::to_string(spaces.n_act) + " table, got " +
                      std::to_string(phi.rows()) + "x" +
                      std::to_string(phi.cols()));
  for (Eigen::Index s = 0; s < phi.rows(); ++s) {
    double sum = 0.0;
    for (Eigen::Index u = 0; u < phi.cols(); ++u) {
      if (!(phi(s, u) >= 0.0) || !std::isfinite(phi(s, u)))
        throw ConfigError("policy: row " + std::to_string(s) +
                          " has a negative or non-finite entry");
      sum += phi(s, u);
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw ConfigError("policy: row " + std::to_string(s) + " sums to " +
                        std::to_string(sum) + ", expected 1");
  }
}

Policy make_uniform_policy(const FiniteSpaces& spaces) {
  Policy p;
  p.phi = Eigen::MatrixXd::Constant(spaces.n_agent, spaces.n_act,
                                    1.0 / spaces.n_act);
  return p;
}

}  // namespace nmq
