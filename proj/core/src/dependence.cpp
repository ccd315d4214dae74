#include "nmq/dependence.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nmq/errors.hpp"

namespace nmq {

namespace {

constexpr int kMaxHorizon = 8;
constexpr double kInitialLawTol = 1e-9;

int joint_index(int x, int g, int n_gamma) { return x * n_gamma + g; }

void check_inputs(const HmmEnvironment& env, const AgentStateRecursion& rec,
                  const Policy& policy, const Eigen::VectorXd& initial_joint,
                  int horizon) {
  rec.validate();
  policy.validate(rec.spaces);
  const FiniteSpaces& sp = env.spaces();
  if (horizon < 1 || horizon > kMaxHorizon) {
    throw ConfigError("dependence horizon must be in [1, " +
                      std::to_string(kMaxHorizon) + "], got " +
                      std::to_string(horizon));
  }
  const long expect = static_cast<long>(sp.n_hidden) * rec.n_gamma;
  if (initial_joint.size() != expect) {
    throw ConfigError("initial joint law has " +
                      std::to_string(initial_joint.size()) +
                      " entries, expected " + std::to_string(expect));
  }
  if (initial_joint.minCoeff() < 0.0 ||
      std::abs(initial_joint.sum() - 1.0) > kInitialLawTol) {
    throw ConfigError(
        "initial joint law must be a probability vector (nonnegative, "
        "summing to one within 1e-9)");
  }
}

// One autonomous step of the joint (hidden, agent) chain with the action
// integrated against the policy.
Eigen::VectorXd apply_kernel(const HmmEnvironment& env,
                             const AgentStateRecursion& rec,
                             const Policy& policy,
                             const Eigen::VectorXd& dist) {
  const FiniteSpaces& sp = env.spaces();
  const int ng = rec.n_gamma;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dist.size());
  for (int x = 0; x < sp.n_hidden; ++x) {
    for (int g = 0; g < ng; ++g) {
      const double mass = dist(joint_index(x, g, ng));
      if (mass == 0.0) continue;
      const int s = rec.state(g);
      for (int u = 0; u < sp.n_act; ++u) {
        const double pu = policy.phi(s, u);
        if (pu == 0.0) continue;
        for (int xn = 0; xn < sp.n_hidden; ++xn) {
          const double pt = env.transition(u)(x, xn);
          if (pt == 0.0) continue;
          for (int on = 0; on < sp.n_obs; ++on) {
            const double pe = env.emission()(xn, on);
            if (pe == 0.0) continue;
            const int gn = rec.next(g, u, on);
            out(joint_index(xn, gn, ng)) += mass * pu * pt * pe;
          }
        }
      }
    }
  }
  return out;
}

// Push a belief over the hidden state through one step with a FIXED
// pending action, returning the joint (hidden, agent) law one step later.
Eigen::VectorXd push_pending(const HmmEnvironment& env,
                             const AgentStateRecursion& rec,
                             const Eigen::VectorXd& belief, int gamma, int u) {
  const FiniteSpaces& sp = env.spaces();
  const int ng = rec.n_gamma;
  Eigen::VectorXd out =
      Eigen::VectorXd::Zero(static_cast<long>(sp.n_hidden) * ng);
  for (int x = 0; x < sp.n_hidden; ++x) {
    const double bx = belief(x);
    if (bx == 0.0) continue;
    for (int xn = 0; xn < sp.n_hidden; ++xn) {
      const double pt = env.transition(u)(x, xn);
      if (pt == 0.0) continue;
      for (int on = 0; on < sp.n_obs; ++on) {
        const double pe = env.emission()(xn, on);
        if (pe == 0.0) continue;
        const int gn = rec.next(gamma, u, on);
        out(joint_index(xn, gn, ng)) += bx * pt * pe;
      }
    }
  }
  return out;
}

// Law of (Z_j, O_{j+1}) from the joint law at time j, indexed
// cell(s, u) * n_obs + o'.
Eigen::VectorXd law_z_obs(const HmmEnvironment& env,
                          const AgentStateRecursion& rec, const Policy& policy,
                          const Eigen::VectorXd& joint) {
  const FiniteSpaces& sp = env.spaces();
  const int ng = rec.n_gamma;
  Eigen::VectorXd out =
      Eigen::VectorXd::Zero(static_cast<long>(sp.n_cells()) * sp.n_obs);
  for (int x = 0; x < sp.n_hidden; ++x) {
    for (int g = 0; g < ng; ++g) {
      const double mass = joint(joint_index(x, g, ng));
      if (mass == 0.0) continue;
      const int s = rec.state(g);
      for (int u = 0; u < sp.n_act; ++u) {
        const double pu = policy.phi(s, u);
        if (pu == 0.0) continue;
        const int base = sp.cell(s, u) * sp.n_obs;
        for (int on = 0; on < sp.n_obs; ++on) {
          out(base + on) += mass * pu * env.obs_given_xu(u)(x, on);
        }
      }
    }
  }
  return out;
}

// Law of (Z_j, Z_{j+1}) from the joint law at time j, indexed
// z * n_cells + z'.
Eigen::VectorXd law_z_z(const HmmEnvironment& env,
                        const AgentStateRecursion& rec, const Policy& policy,
                        const Eigen::VectorXd& joint) {
  const FiniteSpaces& sp = env.spaces();
  const int ng = rec.n_gamma;
  const int nc = sp.n_cells();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<long>(nc) * nc);
  for (int x = 0; x < sp.n_hidden; ++x) {
    for (int g = 0; g < ng; ++g) {
      const double mass = joint(joint_index(x, g, ng));
      if (mass == 0.0) continue;
      const int s = rec.state(g);
      for (int u = 0; u < sp.n_act; ++u) {
        const double pu = policy.phi(s, u);
        if (pu == 0.0) continue;
        const int z = sp.cell(s, u);
        for (int xn = 0; xn < sp.n_hidden; ++xn) {
          const double pt = env.transition(u)(x, xn);
          if (pt == 0.0) continue;
          for (int on = 0; on < sp.n_obs; ++on) {
            const double pe = env.emission()(xn, on);
            if (pe == 0.0) continue;
            const int sn = rec.state(rec.next(g, u, on));
            const double w = mass * pu * pt * pe;
            for (int un = 0; un < sp.n_act; ++un) {
              const double pun = policy.phi(sn, un);
              if (pun == 0.0) continue;
              out(static_cast<long>(z) * nc + sp.cell(sn, un)) += w * pun;
            }
          }
        }
      }
    }
  }
  return out;
}

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return 0.5 * (p - q).lpNorm<1>();
}

void normalize_in_place(Eigen::VectorXd& v) {
  const double s = v.sum();
  if (s > 0.0) v /= s;
}

double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

void finish(DependenceMatrices& result) {
  result.phi_spectral = spectral_norm(result.phi);
  result.psi_spectral = spectral_norm(result.psi);
  result.d4 = std::max(result.phi_spectral, result.psi_spectral);
}

// ---------------------------------------------------------------------
// Conditional-propagation evaluation.

struct NodeA {
  Eigen::VectorXd belief;  // over hidden states, given the prefix
  int gamma = 0;
  int pending_u = 0;  // the action coordinate of the last prefix entry
};

struct EvalA {
  const HmmEnvironment& env;
  const AgentStateRecursion& rec;
  const Policy& policy;
  int horizon;
  Eigen::MatrixXd phi;
  Eigen::MatrixXd psi;

  EvalA(const HmmEnvironment& e, const AgentStateRecursion& r,
        const Policy& p, int h)
      : env(e),
        rec(r),
        policy(p),
        horizon(h),
        phi(Eigen::MatrixXd::Zero(h, h)),
        psi(Eigen::MatrixXd::Zero(h, h)) {}

  // Conditional law of (Z_j, O_{j+1}) and (Z_j, Z_{j+1}) given a prefix
  // ending at index i with the node's pending action.
  void target_laws(const NodeA& node, int i, int j, Eigen::VectorXd& zo,
                   Eigen::VectorXd& zz) const {
    if (j == i) {
      // Z_i is determined by the prefix: s_i from gamma, u_i pending.
      const FiniteSpaces& sp = env.spaces();
      const int nc = sp.n_cells();
      const int z = sp.cell(rec.state(node.gamma), node.pending_u);
      Eigen::VectorXd joint_next =
          push_pending(env, rec, node.belief, node.gamma, node.pending_u);
      zo = Eigen::VectorXd::Zero(static_cast<long>(nc) * sp.n_obs);
      // O_{i+1} marginal sits inside joint_next's construction; recompute
      // directly from the belief for the (z_i, o_{i+1}) law.
      const Eigen::VectorXd obs_law =
          env.observation_law(node.belief, node.pending_u);
      for (int on = 0; on < sp.n_obs; ++on) {
        zo(static_cast<long>(z) * sp.n_obs + on) = obs_law(on);
      }
      // (Z_i, Z_{i+1}): point mass on z_i times the Z_{i+1} marginal.
      zz = Eigen::VectorXd::Zero(static_cast<long>(nc) * nc);
      const int ng = rec.n_gamma;
      for (int xn = 0; xn < sp.n_hidden; ++xn) {
        for (int gn = 0; gn < ng; ++gn) {
          const double mass = joint_next(joint_index(xn, gn, ng));
          if (mass == 0.0) continue;
          const int sn = rec.state(gn);
          for (int un = 0; un < sp.n_act; ++un) {
            zz(static_cast<long>(z) * nc + sp.cell(sn, un)) +=
                mass * policy.phi(sn, un);
          }
        }
      }
      return;
    }
    Eigen::VectorXd joint =
        push_pending(env, rec, node.belief, node.gamma, node.pending_u);
    for (int step = i + 1; step < j; ++step) {
      joint = apply_kernel(env, rec, policy, joint);
    }
    zo = law_z_obs(env, rec, policy, joint);
    zz = law_z_z(env, rec, policy, joint);
  }

  // Handle one sibling family at coordinate index i (1-based): update the
  // sup entries, then recurse into each sibling's children.
  void family(const std::vector<NodeA>& siblings, int i) {
    for (int j = i; j <= horizon; ++j) {
      std::vector<Eigen::VectorXd> zo_laws(siblings.size());
      std::vector<Eigen::VectorXd> zz_laws(siblings.size());
      for (std::size_t k = 0; k < siblings.size(); ++k) {
        target_laws(siblings[k], i, j, zo_laws[k], zz_laws[k]);
      }
      double worst_zo = 0.0;
      double worst_zz = 0.0;
      for (std::size_t a = 0; a < siblings.size(); ++a) {
        for (std::size_t b = a + 1; b < siblings.size(); ++b) {
          worst_zo =
              std::max(worst_zo, total_variation(zo_laws[a], zo_laws[b]));
          worst_zz =
              std::max(worst_zz, total_variation(zz_laws[a], zz_laws[b]));
        }
      }
      if (j > i) phi(i - 1, j - 1) = std::max(phi(i - 1, j - 1), worst_zo);
      psi(i - 1, j - 1) = std::max(psi(i - 1, j - 1), worst_zz);
    }
    if (i == horizon) return;
    const FiniteSpaces& sp = env.spaces();
    for (const NodeA& node : siblings) {
      std::vector<NodeA> children;
      const Eigen::VectorXd obs_law =
          env.observation_law(node.belief, node.pending_u);
      for (int on = 0; on < sp.n_obs; ++on) {
        if (obs_law(on) == 0.0) continue;
        const Eigen::VectorXd next_belief =
            env.belief_update(node.belief, node.pending_u, on);
        const int gn = rec.next(node.gamma, node.pending_u, on);
        const int sn = rec.state(gn);
        for (int un = 0; un < sp.n_act; ++un) {
          if (policy.phi(sn, un) == 0.0) continue;
          children.push_back(NodeA{next_belief, gn, un});
        }
      }
      family(children, i + 1);
    }
  }
};

// ---------------------------------------------------------------------
// Brute-force evaluation: every complete configuration of hidden states,
// observations, and actions is enumerated with its exact probability and
// grouped by prefix.

struct Group {
  double prob = 0.0;
  Eigen::VectorXd zo;
  Eigen::VectorXd zz;
};

struct EvalB {
  const HmmEnvironment& env;
  const AgentStateRecursion& rec;
  const Policy& policy;
  int horizon;
  // groups[i-1][j-1]: prefix (w_1..w_i) -> accumulated joint mass over the
  // (Z_j, O_{j+1}) and (Z_j, Z_{j+1}) slots.
  std::vector<std::vector<std::map<std::vector<int>, Group>>> groups;

  // Per-configuration scratch, indexed by coordinate m = 1..horizon+1.
  std::vector<int> w_ids;    // prefix encoding of w_m
  std::vector<int> cells;    // z_m
  std::vector<int> obs;      // o_m (o_1 unused)

  EvalB(const HmmEnvironment& e, const AgentStateRecursion& r,
        const Policy& p, int h)
      : env(e), rec(r), policy(p), horizon(h) {
    groups.resize(static_cast<std::size_t>(h));
    for (auto& row : groups) row.resize(static_cast<std::size_t>(h));
    w_ids.resize(static_cast<std::size_t>(h) + 2, 0);
    cells.resize(static_cast<std::size_t>(h) + 2, 0);
    obs.resize(static_cast<std::size_t>(h) + 2, 0);
  }

  void record(double prob) {
    const FiniteSpaces& sp = env.spaces();
    const int nc = sp.n_cells();
    for (int i = 1; i <= horizon; ++i) {
      std::vector<int> key(w_ids.begin() + 1, w_ids.begin() + 1 + i);
      for (int j = i; j <= horizon; ++j) {
        Group& g = groups[static_cast<std::size_t>(i - 1)]
                         [static_cast<std::size_t>(j - 1)][key];
        if (g.zo.size() == 0) {
          g.zo = Eigen::VectorXd::Zero(static_cast<long>(nc) * sp.n_obs);
          g.zz = Eigen::VectorXd::Zero(static_cast<long>(nc) * nc);
        }
        g.prob += prob;
        g.zo(static_cast<long>(cells[static_cast<std::size_t>(j)]) *
                 sp.n_obs +
             obs[static_cast<std::size_t>(j) + 1]) += prob;
        g.zz(static_cast<long>(cells[static_cast<std::size_t>(j)]) * nc +
             cells[static_cast<std::size_t>(j) + 1]) += prob;
      }
    }
  }

  // Extend the configuration from coordinate m (hidden state x_m, agent
  // state gamma_m, action u_m already chosen) out to horizon + 1.
  void extend(int m, int x, int gamma, int u, double prob) {
    if (m == horizon + 1) {
      record(prob);
      return;
    }
    const FiniteSpaces& sp = env.spaces();
    for (int xn = 0; xn < sp.n_hidden; ++xn) {
      const double pt = env.transition(u)(x, xn);
      if (pt == 0.0) continue;
      for (int on = 0; on < sp.n_obs; ++on) {
        const double pe = env.emission()(xn, on);
        if (pe == 0.0) continue;
        const int gn = rec.next(gamma, u, on);
        const int sn = rec.state(gn);
        for (int un = 0; un < sp.n_act; ++un) {
          const double pun = policy.phi(sn, un);
          if (pun == 0.0) continue;
          const int mn = m + 1;
          w_ids[static_cast<std::size_t>(mn)] = on * sp.n_act + un;
          cells[static_cast<std::size_t>(mn)] = sp.cell(sn, un);
          obs[static_cast<std::size_t>(mn)] = on;
          extend(mn, xn, gn, un, prob * pt * pe * pun);
        }
      }
    }
  }

  DependenceMatrices collect() const {
    DependenceMatrices out;
    out.phi = Eigen::MatrixXd::Zero(horizon, horizon);
    out.psi = Eigen::MatrixXd::Zero(horizon, horizon);
    for (int i = 1; i <= horizon; ++i) {
      for (int j = i; j <= horizon; ++j) {
        const auto& bucket = groups[static_cast<std::size_t>(i - 1)]
                                   [static_cast<std::size_t>(j - 1)];
        // Normalize each conditional law, then compare siblings: groups
        // whose keys agree except in the last coordinate.
        std::map<std::vector<int>, std::vector<const Group*>> families;
        for (const auto& [key, grp] : bucket) {
          std::vector<int> parent(key.begin(), key.end() - 1);
          families[parent].push_back(&grp);
        }
        double worst_zo = 0.0;
        double worst_zz = 0.0;
        for (const auto& [parent, members] : families) {
          for (std::size_t a = 0; a < members.size(); ++a) {
            for (std::size_t b = a + 1; b < members.size(); ++b) {
              Eigen::VectorXd pa = members[a]->zo;
              Eigen::VectorXd pb = members[b]->zo;
              normalize_in_place(pa);
              normalize_in_place(pb);
              worst_zo = std::max(worst_zo, total_variation(pa, pb));
              Eigen::VectorXd qa = members[a]->zz;
              Eigen::VectorXd qb = members[b]->zz;
              normalize_in_place(qa);
              normalize_in_place(qb);
              worst_zz = std::max(worst_zz, total_variation(qa, qb));
            }
          }
        }
        if (j > i) out.phi(i - 1, j - 1) = worst_zo;
        out.psi(i - 1, j - 1) = worst_zz;
      }
    }
    for (int i = 0; i < horizon; ++i) out.phi(i, i) = 1.0;
    return out;
  }
};

long brute_config_count(const HmmEnvironment& env,
                        const AgentStateRecursion& rec, const Policy& policy,
                        const Eigen::VectorXd& initial_joint, int horizon) {
  const FiniteSpaces& sp = env.spaces();
  long w1 = 0;
  for (int x = 0; x < sp.n_hidden; ++x) {
    for (int g = 0; g < rec.n_gamma; ++g) {
      if (initial_joint(joint_index(x, g, rec.n_gamma)) <= 0.0) continue;
      for (int u = 0; u < sp.n_act; ++u) {
        if (policy.phi(rec.state(g), u) > 0.0) ++w1;
      }
    }
  }
  double configs = static_cast<double>(w1);
  const double branch = static_cast<double>(sp.n_hidden) * sp.n_obs *
                        sp.n_act;
  for (int m = 0; m < horizon; ++m) {
    configs *= branch;
    if (configs > 1e18) return static_cast<long>(1e18);
  }
  return static_cast<long>(configs);
}

}  // namespace

DependenceMatrices dependence_matrices(const HmmEnvironment& env,
                                       const AgentStateRecursion& rec,
                                       const Policy& policy,
                                       const Eigen::VectorXd& initial_joint,
                                       int horizon, long path_budget) {
  check_inputs(env, rec, policy, initial_joint, horizon);
  const long required =
      brute_config_count(env, rec, policy, initial_joint, horizon);
  if (required > path_budget) {
    throw AnalysisError(
        "dependence enumeration needs " + std::to_string(required) +
        " configurations but the budget is " + std::to_string(path_budget) +
        "; reduce the horizon or raise the budget");
  }

  const FiniteSpaces& sp = env.spaces();
  EvalA eval(env, rec, policy, horizon);
  std::vector<NodeA> roots;
  for (int x = 0; x < sp.n_hidden; ++x) {
    for (int g = 0; g < rec.n_gamma; ++g) {
      if (initial_joint(joint_index(x, g, rec.n_gamma)) <= 0.0) continue;
      Eigen::VectorXd belief = Eigen::VectorXd::Zero(sp.n_hidden);
      belief(x) = 1.0;
      for (int u = 0; u < sp.n_act; ++u) {
        if (policy.phi(rec.state(g), u) == 0.0) continue;
        roots.push_back(NodeA{belief, g, u});
      }
    }
  }
  eval.family(roots, 1);
  DependenceMatrices out;
  out.phi = eval.phi;
  out.psi = eval.psi;
  for (int i = 0; i < horizon; ++i) out.phi(i, i) = 1.0;
  finish(out);
  return out;
}

DependenceMatrices dependence_matrices_brute(
    const HmmEnvironment& env, const AgentStateRecursion& rec,
    const Policy& policy, const Eigen::VectorXd& initial_joint, int horizon,
    long path_budget) {
  check_inputs(env, rec, policy, initial_joint, horizon);
  const long required =
      brute_config_count(env, rec, policy, initial_joint, horizon);
  if (required > path_budget) {
    throw AnalysisError(
        "dependence enumeration needs " + std::to_string(required) +
        " configurations but the budget is " + std::to_string(path_budget) +
        "; reduce the horizon or raise the budget");
  }

  const FiniteSpaces& sp = env.spaces();
  EvalB eval(env, rec, policy, horizon);
  for (int x = 0; x < sp.n_hidden; ++x) {
    for (int g = 0; g < rec.n_gamma; ++g) {
      const double mass = initial_joint(joint_index(x, g, rec.n_gamma));
      if (mass <= 0.0) continue;
      const int s = rec.state(g);
      for (int u = 0; u < sp.n_act; ++u) {
        const double pu = policy.phi(s, u);
        if (pu == 0.0) continue;
        eval.w_ids[1] = (x * rec.n_gamma + g) * sp.n_act + u;
        eval.cells[1] = sp.cell(s, u);
        eval.extend(1, x, g, u, mass * pu);
      }
    }
  }
  DependenceMatrices out = eval.collect();
  finish(out);
  return out;
}

Eigen::VectorXd warmup_initial_law(const HmmEnvironment& env,
                                   const AgentStateRecursion& rec,
                                   const Policy& policy, long steps) {
  rec.validate();
  policy.validate(rec.spaces);
  if (steps < 0) {
    throw ConfigError("warm-up step count must be nonnegative");
  }
  const FiniteSpaces& sp = env.spaces();
  Eigen::VectorXd dist =
      Eigen::VectorXd::Zero(static_cast<long>(sp.n_hidden) * rec.n_gamma);
  for (int x = 0; x < sp.n_hidden; ++x) {
    dist(joint_index(x, 0, rec.n_gamma)) = 1.0 / sp.n_hidden;
  }
  for (long k = 0; k < steps; ++k) {
    dist = apply_kernel(env, rec, policy, dist);
  }
  return dist;
}

}  // namespace nmq
