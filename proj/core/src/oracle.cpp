#include "nmq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmq/errors.hpp"

namespace nmq {

ConditionalLaws conditional_agent_laws(const HmmEnvironment& env,
                                       const AgentStateRecursion& rec,
                                       const Eigen::VectorXd& belief,
                                       int gamma_state, int u) {
  const auto& sp = rec.spaces;
  const Eigen::VectorXd obs_law = env.observation_law(belief, u);
  ConditionalLaws out;
  out.next_state_law = Eigen::VectorXd::Zero(sp.n_agent);
  const int s = rec.state(gamma_state);
  for (int o = 0; o < sp.n_obs; ++o) {
    const int s_next = rec.state(rec.next(gamma_state, u, o));
    out.next_state_law(s_next) += obs_law(o);
    out.expected_reward += env.reward(s, u, o) * obs_law(o);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JointChainOracle
// ---------------------------------------------------------------------------

JointChainOracle::JointChainOracle(const HmmEnvironment& env,
                                   const AgentStateRecursion& rec,
                                   const Policy& pol, Options opts)
    : env_(env), rec_(rec), pol_(pol), opts_(opts) {
  rec_.validate();
  pol_.validate(rec_.spaces);
  if (env_.spaces().n_hidden != rec_.spaces.n_hidden ||
      env_.spaces().n_obs != rec_.spaces.n_obs ||
      env_.spaces().n_act != rec_.spaces.n_act ||
      env_.spaces().n_agent != rec_.spaces.n_agent)
    throw ConfigError("oracle: environment and agent-state spaces disagree");

  n_joint_ = rec_.spaces.n_hidden * rec_.n_gamma;
  if (n_joint_ > opts_.max_joint_states)
    throw AnalysisError("oracle: joint chain needs " +
                        std::to_string(n_joint_) +
                        " states, above the budget of " +
                        std::to_string(opts_.max_joint_states));
  if (rec_.spaces.n_cells() > opts_.max_cells)
    throw AnalysisError("oracle: " + std::to_string(rec_.spaces.n_cells()) +
                        " (state, action) cells exceed the budget of " +
                        std::to_string(opts_.max_cells));

  build_kernel();
  find_closed_class();
  solve_stationary();
  derive_cell_tables();
}

void JointChainOracle::build_kernel() {
  const auto& sp = rec_.spaces;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n_joint_) * sp.n_act * sp.n_obs);
  for (int x = 0; x < sp.n_hidden; ++x) {
    for (int g = 0; g < rec_.n_gamma; ++g) {
      const int j = joint_index(x, g);
      const int s = rec_.state(g);
      for (int u = 0; u < sp.n_act; ++u) {
        const double pu = pol_.phi(s, u);
        if (pu == 0.0) continue;
        const auto& t = env_.transition(u);
        for (int xn = 0; xn < sp.n_hidden; ++xn) {
          const double pt = t(x, xn);
          if (pt == 0.0) continue;
          for (int o = 0; o < sp.n_obs; ++o) {
            const double pe = env_.emission()(xn, o);
            if (pe == 0.0) continue;
            const int jn = joint_index(xn, rec_.next(g, u, o));
            trips.emplace_back(j, jn, pu * pt * pe);
          }
        }
      }
    }
  }
  kernel_.resize(n_joint_, n_joint_);
  kernel_.setFromTriplets(trips.begin(), trips.end());
}

namespace {

// Strongly connected components (iterative Tarjan); returns component ids
// and the component count.
int strongly_connected_components(const std::vector<std::vector<int>>& adj,
                                  std::vector<int>& comp) {
  const int n = static_cast<int>(adj.size());
  comp.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> index(static_cast<std::size_t>(n), -1);
  std::vector<int> low(static_cast<std::size_t>(n), 0);
  std::vector<bool> on_stack(static_cast<std::size_t>(n), false);
  std::vector<int> stack;
  struct Frame {
    int v;
    std::size_t child;
  };
  std::vector<Frame> frames;
  int next_index = 0;
  int n_comp = 0;

  for (int root = 0; root < n; ++root) {
    if (index[static_cast<std::size_t>(root)] != -1) continue;
    frames.push_back({root, 0});
    index[static_cast<std::size_t>(root)] =
        low[static_cast<std::size_t>(root)] = next_index++;
    stack.push_back(root);
    on_stack[static_cast<std::size_t>(root)] = true;

    while (!frames.empty()) {
      Frame& f = frames.back();
      const auto& out = adj[static_cast<std::size_t>(f.v)];
      if (f.child < out.size()) {
        const int w = out[f.child++];
        if (index[static_cast<std::size_t>(w)] == -1) {
          index[static_cast<std::size_t>(w)] =
              low[static_cast<std::size_t>(w)] = next_index++;
          stack.push_back(w);
          on_stack[static_cast<std::size_t>(w)] = true;
          frames.push_back({w, 0});
        } else if (on_stack[static_cast<std::size_t>(w)]) {
          low[static_cast<std::size_t>(f.v)] =
              std::min(low[static_cast<std::size_t>(f.v)],
                       index[static_cast<std::size_t>(w)]);
        }
      } else {
        if (low[static_cast<std::size_t>(f.v)] ==
            index[static_cast<std::size_t>(f.v)]) {
          int w;
          do {
            w = stack.back();
            stack.pop_back();
            on_stack[static_cast<std::size_t>(w)] = false;
            comp[static_cast<std::size_t>(w)] = n_comp;
          } while (w != f.v);
          ++n_comp;
        }
        const int done = f.v;
        frames.pop_back();
        if (!frames.empty())
          low[static_cast<std::size_t>(frames.back().v)] =
              std::min(low[static_cast<std::size_t>(frames.back().v)],
                       low[static_cast<std::size_t>(done)]);
      }
    }
  }
  return n_comp;
}

}  // namespace

void JointChainOracle::find_closed_class() {
  // Adjacency on the support of the kernel.
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_joint_));
  for (int i = 0; i < n_joint_; ++i)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
             kernel_, i);
         it; ++it)
      if (it.value() > 0.0) adj[static_cast<std::size_t>(i)].push_back(
          static_cast<int>(it.col()));

  std::vector<int> comp;
  const int n_comp = strongly_connected_components(adj, comp);

  std::vector<bool> closed(static_cast<std::size_t>(n_comp), true);
  for (int i = 0; i < n_joint_; ++i)
    for (int w : adj[static_cast<std::size_t>(i)])
      if (comp[static_cast<std::size_t>(i)] !=
          comp[static_cast<std::size_t>(w)])
        closed[static_cast<std::size_t>(comp[static_cast<std::size_t>(i)])] =
            false;

  std::vector<int> closed_ids;
  for (int c = 0; c < n_comp; ++c)
    if (closed[static_cast<std::size_t>(c)]) closed_ids.push_back(c);

  if (closed_ids.size() != 1) {
    std::string msg = "oracle: the joint chain has " +
                      std::to_string(closed_ids.size()) +
                      " closed communicating classes; the analysis needs "
                      "exactly one. Examples:";
    for (int c : closed_ids) {
      for (int i = 0; i < n_joint_; ++i) {
        if (comp[static_cast<std::size_t>(i)] == c) {
          const auto [x, g] = joint_unpack(i);
          msg += " (x=" + std::to_string(x) + ", gamma=" + std::to_string(g) +
                 ")";
          break;
        }
      }
    }
    throw AnalysisError(msg);
  }

  closed_class_.clear();
  for (int i = 0; i < n_joint_; ++i)
    if (comp[static_cast<std::size_t>(i)] == closed_ids[0])
      closed_class_.push_back(i);

  // Aperiodicity within the class: the period equals the gcd of
  // level(i) + 1 - level(j) over all edges i -> j, with levels from any
  // breadth-first search inside the (strongly connected) class.
  std::vector<long> level(static_cast<std::size_t>(n_joint_), -1);
  std::vector<int> queue;
  queue.push_back(closed_class_.front());
  level[static_cast<std::size_t>(closed_class_.front())] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int v = queue[head];
    for (int w : adj[static_cast<std::size_t>(v)]) {
      if (level[static_cast<std::size_t>(w)] == -1) {
        level[static_cast<std::size_t>(w)] =
            level[static_cast<std::size_t>(v)] + 1;
        queue.push_back(w);
      }
    }
  }
  long period = 0;
  for (int v : closed_class_)
    for (int w : adj[static_cast<std::size_t>(v)])
      period = std::gcd(period, std::abs(level[static_cast<std::size_t>(v)] +
                                         1 -
                                         level[static_cast<std::size_t>(w)]));
  if (period != 1)
    throw AnalysisError(
        "oracle: the closed class of the joint chain is periodic with "
        "period " +
        std::to_string(period) + "; the analysis needs an aperiodic chain");
}

void JointChainOracle::solve_stationary() {
  const int nc = static_cast<int>(closed_class_.size());
  std::vector<int> pos(static_cast<std::size_t>(n_joint_), -1);
  for (int k = 0; k < nc; ++k)
    pos[static_cast<std::size_t>(closed_class_[static_cast<std::size_t>(k)])] =
        k;

  Eigen::VectorXd pi_class;
  if (nc <= opts_.dense_solver_max) {
    // Direct solve of (I - P^T) pi = 0 with the last equation replaced by
    // the normalization sum(pi) = 1.
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(nc, nc);
    for (int k = 0; k < nc; ++k) {
      const int i = closed_class_[static_cast<std::size_t>(k)];
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
               kernel_, i);
           it; ++it) {
        const int kp = pos[static_cast<std::size_t>(it.col())];
        a(kp, k) -= it.value();
      }
    }
    a.row(nc - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nc);
    rhs(nc - 1) = 1.0;
    pi_class = Eigen::PartialPivLU<Eigen::MatrixXd>(a).solve(rhs);
  } else {
    // Power iteration on the class-restricted kernel.
    pi_class = Eigen::VectorXd::Constant(nc, 1.0 / nc);
    Eigen::VectorXd next(nc);
    long iter = 0;
    for (;; ++iter) {
      if (iter >= opts_.power_max_iters)
        throw AnalysisError(
            "oracle: stationary power iteration did not converge within " +
            std::to_string(opts_.power_max_iters) + " iterations");
      next.setZero();
      for (int k = 0; k < nc; ++k) {
        const int i = closed_class_[static_cast<std::size_t>(k)];
        const double w = pi_class(k);
        if (w == 0.0) continue;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
                 kernel_, i);
             it; ++it)
          next(pos[static_cast<std::size_t>(it.col())]) += w * it.value();
      }
      next /= next.sum();
      const double diff = (next - pi_class).cwiseAbs().sum();
      pi_class.swap(next);
      if (diff <= opts_.power_tol) break;
    }
  }

  // Clamp solver crumbs and renormalize once.
  for (int k = 0; k < nc; ++k) {
    if (pi_class(k) < 0.0) {
      if (pi_class(k) < -1e-12)
        throw AnalysisError(
            "oracle: stationary solve produced a negative probability " +
            std::to_string(pi_class(k)));
      pi_class(k) = 0.0;
    }
  }
  pi_class /= pi_class.sum();

  stationary_ = Eigen::VectorXd::Zero(n_joint_);
  for (int k = 0; k < nc; ++k)
    stationary_(closed_class_[static_cast<std::size_t>(k)]) = pi_class(k);

  // Residual || pi^T P - pi^T ||_1 over the full chain.
  Eigen::VectorXd pushed = Eigen::VectorXd::Zero(n_joint_);
  for (int i = 0; i < n_joint_; ++i) {
    const double w = stationary_(i);
    if (w == 0.0) continue;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
             kernel_, i);
         it; ++it)
      pushed(static_cast<int>(it.col())) += w * it.value();
  }
  stationary_residual_ = (pushed - stationary_).cwiseAbs().sum();
  if (stationary_residual_ > 1e-10)
    throw AnalysisError(
        "oracle: stationary law residual " +
        std::to_string(stationary_residual_) +
        " exceeds 1e-10; the chain is too ill-conditioned to analyze");
}

void JointChainOracle::derive_cell_tables() {
  const auto& sp = rec_.spaces;
  const int nz = sp.n_cells();

  pi_states_ = Eigen::VectorXd::Zero(sp.n_agent);
  for (int j : closed_class_) {
    const auto [x, g] = joint_unpack(j);
    (void)x;
    pi_states_(rec_.state(g)) += stationary_(j);
  }

  pi_cells_ = Eigen::VectorXd::Zero(nz);
  for (int s = 0; s < sp.n_agent; ++s)
    for (int u = 0; u < sp.n_act; ++u)
      pi_cells_(sp.cell(s, u)) = pi_states_(s) * pol_.phi(s, u);

  pi_min_ = pi_cells_.minCoeff();
  if (pi_min_ < opts_.eps_stat) {
    int zmin = 0;
    pi_cells_.minCoeff(&zmin);
    throw AnalysisError(
        "oracle: stationary mass of cell (s=" +
        std::to_string(sp.cell_state(zmin)) +
        ", u=" + std::to_string(sp.cell_action(zmin)) + ") is " +
        std::to_string(pi_min_) + ", below the floor " +
        std::to_string(opts_.eps_stat) +
        "; every (state, action) pair must be visited with positive "
        "stationary frequency");
  }

  // Cell tables by exact enumeration with point-mass beliefs.  The weights
  // pi(x,gamma)/pi_S(s) are the stationary conditional law of the joint
  // state given the agent state; when a state has a single joint
  // representative the weight is exactly 1.0 and the rows below are
  // bitwise equal to the per-representative conditional laws.
  q_kernel_ = Eigen::MatrixXd::Zero(nz, sp.n_agent);
  rbar_ = Eigen::VectorXd::Zero(nz);
  Eigen::VectorXd point_mass = Eigen::VectorXd::Zero(sp.n_hidden);
  for (int j : closed_class_) {
    const auto [x, g] = joint_unpack(j);
    const int s = rec_.state(g);
    const double w = stationary_(j) / pi_states_(s);
    point_mass.setZero();
    point_mass(x) = 1.0;
    for (int u = 0; u < sp.n_act; ++u) {
      const auto laws = conditional_agent_laws(env_, rec_, point_mass, g, u);
      const int z = sp.cell(s, u);
      q_kernel_.row(z) += w * laws.next_state_law.transpose();
      rbar_(z) += w * laws.expected_reward;
    }
  }

  for (int z = 0; z < nz; ++z) {
    const double row_sum = q_kernel_.row(z).sum();
    if (std::abs(row_sum - 1.0) > 1e-12)
      throw AnalysisError("oracle: derived kernel row " + std::to_string(z) +
                          " sums to " + std::to_string(row_sum) +
                          "; conditioning failure");
  }

  psi_ = Eigen::MatrixXd::Zero(nz, nz);
  for (int z = 0; z < nz; ++z)
    for (int sn = 0; sn < sp.n_agent; ++sn)
      for (int un = 0; un < sp.n_act; ++un)
        psi_(z, sp.cell(sn, un)) = q_kernel_(z, sn) * pol_.phi(sn, un);

  psi_residual_ = (psi_.transpose() * pi_cells_ - pi_cells_).cwiseAbs().sum();
  if (psi_residual_ > 1e-10)
    throw AnalysisError(
        "oracle: cell-level stationary residual " +
        std::to_string(psi_residual_) + " exceeds 1e-10");
}

Eigen::VectorXd JointChainOracle::belief_given_gamma(int gamma) const {
  Eigen::VectorXd b(rec_.spaces.n_hidden);
  double total = 0.0;
  for (int x = 0; x < rec_.spaces.n_hidden; ++x) {
    b(x) = stationary_(joint_index(x, gamma));
    total += b(x);
  }
  if (total <= 0.0)
    throw std::logic_error(
        "belief_given_gamma: internal state " + std::to_string(gamma) +
        " carries no stationary mass");
  return b / total;
}

Eigen::VectorXd JointChainOracle::stationary_gamma() const {
  Eigen::VectorXd pg = Eigen::VectorXd::Zero(rec_.n_gamma);
  for (int j : closed_class_) {
    const auto [x, g] = joint_unpack(j);
    (void)x;
    pg(g) += stationary_(j);
  }
  return pg;
}

// ---------------------------------------------------------------------------
// Fixed points
// ---------------------------------------------------------------------------

namespace {

constexpr double kFixedPointTol = 1e-12;
constexpr long kFixedPointMaxIters = 2000000;

void check_discount(double discount) {
  if (!(discount > 0.0) || !(discount < 1.0))
    throw ConfigError("discount must lie in (0, 1)");
}

}  // namespace

QTable fixed_point_qstar(const JointChainOracle& oracle, double discount) {
  check_discount(discount);
  const auto& sp = oracle.spaces();
  QTable q(sp.n_agent, sp.n_act, discount);
  Eigen::VectorXd maxvec(sp.n_agent);
  Eigen::MatrixXd next(sp.n_agent, sp.n_act);
  for (long iter = 0; iter < kFixedPointMaxIters; ++iter) {
    for (int s = 0; s < sp.n_agent; ++s) maxvec(s) = q.values.row(s).maxCoeff();
    double resid = 0.0;
    for (int s = 0; s < sp.n_agent; ++s) {
      for (int u = 0; u < sp.n_act; ++u) {
        const int z = sp.cell(s, u);
        const double t = oracle.rbar()(z) +
                         discount * oracle.q_kernel().row(z).dot(maxvec);
        resid = std::max(resid, std::abs(t - q.values(s, u)));
        next(s, u) = t;
      }
    }
    q.values.swap(next);
    if (resid <= kFixedPointTol) return q;
  }
  throw AnalysisError("fixed point iteration did not reach residual 1e-12");
}

QTable history_averaged_fixed_point(const JointChainOracle& oracle,
                                    double discount) {
  check_discount(discount);
  const auto& sp = oracle.spaces();
  const auto& rec = oracle.recursion();

  // Precompute the information-conditioned laws of every class member.
  struct Record {
    int z = 0;
    double weight = 0.0;
    double expected_reward = 0.0;
    Eigen::VectorXd next_state_law;
  };
  const std::size_t budget =
      oracle.closed_class().size() * static_cast<std::size_t>(sp.n_act);
  if (budget * static_cast<std::size_t>(sp.n_agent) > 50000000)
    throw AnalysisError(
        "history-averaged fixed point: instance too large to enumerate");
  std::vector<Record> records;
  records.reserve(budget);
  Eigen::VectorXd point_mass = Eigen::VectorXd::Zero(sp.n_hidden);
  for (int j : oracle.closed_class()) {
    const auto [x, g] = oracle.joint_unpack(j);
    const int s = rec.state(g);
    const double w =
        oracle.stationary()(j) / oracle.stationary_states()(s);
    point_mass.setZero();
    point_mass(x) = 1.0;
    for (int u = 0; u < sp.n_act; ++u) {
      Record r;
      r.z = sp.cell(s, u);
      r.weight = w;
      auto laws = conditional_agent_laws(oracle.env(), rec, point_mass, g, u);
      r.expected_reward = laws.expected_reward;
      r.next_state_law = std::move(laws.next_state_law);
      records.push_back(std::move(r));
    }
  }

  QTable q(sp.n_agent, sp.n_act, discount);
  Eigen::VectorXd maxvec(sp.n_agent);
  Eigen::VectorXd flat(sp.n_cells());
  for (long iter = 0; iter < kFixedPointMaxIters; ++iter) {
    for (int s = 0; s < sp.n_agent; ++s) maxvec(s) = q.values.row(s).maxCoeff();
    flat.setZero();
    for (const auto& r : records)
      flat(r.z) += r.weight * (r.expected_reward +
                               discount * r.next_state_law.dot(maxvec));
    double resid = 0.0;
    for (int s = 0; s < sp.n_agent; ++s) {
      for (int u = 0; u < sp.n_act; ++u) {
        const double t = flat(sp.cell(s, u));
        resid = std::max(resid, std::abs(t - q.values(s, u)));
        q.values(s, u) = t;
      }
    }
    if (resid <= kFixedPointTol) return q;
  }
  throw AnalysisError("fixed point iteration did not reach residual 1e-12");
}

// ---------------------------------------------------------------------------
// Poisson basis
// ---------------------------------------------------------------------------

PoissonBasis::PoissonBasis(const JointChainOracle& oracle)
    : spaces_(oracle.spaces()),
      q_kernel_(oracle.q_kernel()),
      rbar_(oracle.rbar()),
      pi_cells_(oracle.stationary_cells()),
      psi_(oracle.psi()),
      z0_(0) {
  const int nz = spaces_.n_cells();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(nz, nz) - psi_;
  a.row(z0_).setZero();
  a(z0_, z0_) = 1.0;

  // Right-hand sides: column c is e_c - pi_tilde(c) * ones, with the pinned
  // row zeroed.
  Eigen::MatrixXd g = Eigen::MatrixXd::Identity(nz, nz) -
                      Eigen::VectorXd::Ones(nz) * pi_cells_.transpose();
  g.row(z0_).setZero();

  const Eigen::MatrixXd w1 = Eigen::PartialPivLU<Eigen::MatrixXd>(a).solve(g);
  const Eigen::MatrixXd w2 = Eigen::FullPivLU<Eigen::MatrixXd>(a).solve(g);
  pivot_discrepancy_ = (w1 - w2).cwiseAbs().maxCoeff();
  if (!(pivot_discrepancy_ <= 1e-8))
    throw AnalysisError(
        "poisson basis: two pivoting strategies disagree by " +
        std::to_string(pivot_discrepancy_) +
        "; the pinned system is too ill-conditioned");

  w_ = w1;
  // Shift each column so the pinned entry is exactly zero (solutions are
  // unique up to a constant; the solver leaves rounding crumbs there).
  for (int c = 0; c < nz; ++c) w_.col(c).array() -= w_(z0_, c);

  // Residual of the unpinned equation, all rows, all columns.
  double res = 0.0;
  for (int c = 0; c < nz; ++c) {
    Eigen::VectorXd g_true = -pi_cells_(c) * Eigen::VectorXd::Ones(nz);
    g_true(c) += 1.0;
    const Eigen::VectorXd r = w_.col(c) - g_true - psi_ * w_.col(c);
    res = std::max(res, r.cwiseAbs().maxCoeff());
  }
  residual_ = res;
  if (!(residual_ <= 1e-9))
    throw AnalysisError("poisson basis: equation residual " +
                        std::to_string(residual_) + " exceeds 1e-9");
}

Eigen::VectorXd PoissonBasis::expected_update(const QTable& q) const {
  const int nz = spaces_.n_cells();
  Eigen::VectorXd maxvec(spaces_.n_agent);
  for (int s = 0; s < spaces_.n_agent; ++s)
    maxvec(s) = q.values.row(s).maxCoeff();
  Eigen::VectorXd f(nz);
  for (int s = 0; s < spaces_.n_agent; ++s)
    for (int u = 0; u < spaces_.n_act; ++u) {
      const int z = spaces_.cell(s, u);
      f(z) = rbar_(z) + q.discount * q_kernel_.row(z).dot(maxvec) -
             q.values(s, u);
    }
  return f;
}

PoissonSolution PoissonBasis::solve(const QTable& q) const {
  PoissonSolution out;
  out.z0 = z0_;
  const Eigen::VectorXd f = expected_update(q);
  out.v = w_ * f;
  const double fbar = pi_cells_.dot(f);
  const Eigen::VectorXd r =
      out.v - (f.array() - fbar).matrix() - psi_ * out.v;
  out.residual = r.cwiseAbs().maxCoeff();
  return out;
}

double PoissonBasis::v_max_bound(double discount) const {
  check_discount(discount);
  const int nz = spaces_.n_cells();
  const double ub = 1.0 / (1.0 - discount);

  QTable q(spaces_.n_agent, spaces_.n_act, discount);
  const auto eval = [&](const Eigen::VectorXd& flat) {
    for (int s = 0; s < spaces_.n_agent; ++s)
      for (int u = 0; u < spaces_.n_act; ++u)
        q.values(s, u) = flat(spaces_.cell(s, u));
    return (w_ * expected_update(q)).cwiseAbs().maxCoeff();
  };

  double best = 0.0;
  const Eigen::VectorXd bases[3] = {Eigen::VectorXd::Zero(nz),
                                    Eigen::VectorXd::Constant(nz, ub),
                                    Eigen::VectorXd::Constant(nz, ub / 2.0)};
  for (const auto& base : bases) {
    best = std::max(best, eval(base));
    for (int c = 0; c < nz; ++c) {
      Eigen::VectorXd probe = base;
      for (int k = 0; k < 17; ++k) {
        probe(c) = ub * static_cast<double>(k) / 16.0;
        best = std::max(best, eval(probe));
      }
    }
  }
  if (nz <= 12) {
    for (long mask = 0; mask < (1L << nz); ++mask) {
      Eigen::VectorXd corner(nz);
      for (int c = 0; c < nz; ++c)
        corner(c) = ((mask >> c) & 1) ? ub : 0.0;
      best = std::max(best, eval(corner));
    }
  }
  return 2.0 * best;
}

// ---------------------------------------------------------------------------
// Stationary start and offset means
// ---------------------------------------------------------------------------

SimInit stationary_init(const JointChainOracle& oracle, Rng& rng) {
  const auto& pi = oracle.stationary();
  const int j = sample_categorical_fn(
      oracle.n_joint(), [&](int i) { return pi(i); }, rng);
  const auto [x, g] = oracle.joint_unpack(j);
  SimInit init;
  init.x0 = x;
  init.gamma0 = g;
  init.belief0 = oracle.belief_given_gamma(g);
  return init;
}

Eigen::VectorXd zeta_stationary_mean(const JointChainOracle& oracle,
                                     const QTable& q) {
  const auto& sp = oracle.spaces();
  const auto& rec = oracle.recursion();
  Eigen::VectorXd maxvec(sp.n_agent);
  for (int s = 0; s < sp.n_agent; ++s) maxvec(s) = q.values.row(s).maxCoeff();

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(sp.n_cells());
  Eigen::VectorXd point_mass = Eigen::VectorXd::Zero(sp.n_hidden);
  for (int j : oracle.closed_class()) {
    const auto [x, g] = oracle.joint_unpack(j);
    const int s = rec.state(g);
    point_mass.setZero();
    point_mass(x) = 1.0;
    for (int u = 0; u < sp.n_act; ++u) {
      const int z = sp.cell(s, u);
      const auto laws =
          conditional_agent_laws(oracle.env(), rec, point_mass, g, u);
      const double zeta =
          (laws.expected_reward - oracle.rbar()(z)) +
          q.discount * (laws.next_state_law.dot(maxvec) -
                        oracle.q_kernel().row(z).dot(maxvec));
      mean(z) += oracle.stationary()(j) * oracle.policy().phi(s, u) * zeta;
    }
  }
  return mean;
}

Eigen::VectorXd omega_stationary_mean(const JointChainOracle& oracle,
                                      const PoissonBasis& basis,
                                      const QTable& q) {
  const auto& sp = oracle.spaces();
  const auto& rec = oracle.recursion();
  const Eigen::VectorXd v = basis.solve(q).v;

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(sp.n_cells());
  Eigen::VectorXd point_mass = Eigen::VectorXd::Zero(sp.n_hidden);
  for (int j : oracle.closed_class()) {
    const auto [x, g] = oracle.joint_unpack(j);
    const int s = rec.state(g);
    point_mass.setZero();
    point_mass(x) = 1.0;
    for (int u = 0; u < sp.n_act; ++u) {
      const int z = sp.cell(s, u);
      const auto laws =
          conditional_agent_laws(oracle.env(), rec, point_mass, g, u);
      double omega = 0.0;
      for (int sn = 0; sn < sp.n_agent; ++sn)
        for (int un = 0; un < sp.n_act; ++un) {
          const int zn = sp.cell(sn, un);
          omega += (laws.next_state_law(sn) * oracle.policy().phi(sn, un) -
                    oracle.psi()(z, zn)) *
                   v(zn);
        }
      mean(z) += oracle.stationary()(j) * oracle.policy().phi(s, u) * omega;
    }
  }
  return mean;
}

}  // namespace nmq
