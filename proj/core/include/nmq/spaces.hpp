#pragma once

#include "nmq/errors.hpp"

namespace nmq {

// Cardinalities of the finite spaces in play.  `n_hidden` indexes the
// latent chain, `n_obs` the observation alphabet, `n_act` the action set,
// and `n_agent` the recursively maintained agent-state set.  A cell is a
// pair (agent state, action) flattened action-minor.
struct FiniteSpaces {
  int n_hidden = 0;
  int n_obs = 0;
  int n_act = 0;
  int n_agent = 0;

  [[nodiscard]] int n_cells() const { return n_agent * n_act; }
  [[nodiscard]] int cell(int s, int u) const { return s * n_act + u; }
  [[nodiscard]] int cell_state(int z) const { return z / n_act; }
  [[nodiscard]] int cell_action(int z) const { return z % n_act; }

  void validate() const {
    if (n_hidden < 1) throw ConfigError("spaces: n_hidden must be >= 1");
    if (n_obs < 1) throw ConfigError("spaces: n_obs must be >= 1");
    if (n_act < 1) throw ConfigError("spaces: n_act must be >= 1");
    if (n_agent < 1) throw ConfigError("spaces: n_agent must be >= 1");
    if (n_agent * n_act < 2)
      throw ConfigError(
          "spaces: the table needs at least two (state, action) cells");
  }
};

}  // namespace nmq
