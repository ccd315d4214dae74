#include "nmq/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "nmq/errors.hpp"

namespace nmq {

namespace {

// omega at cell z given the information-conditioned next-state law and a
// Poisson solution v: the action coordinate integrates against the policy
// in both terms, so only the next-state marginals differ.
double omega_from_value(const JointChainOracle& oracle,
                        const Eigen::VectorXd& next_state_law, int z,
                        const Eigen::VectorXd& v) {
  const FiniteSpaces& sp = oracle.spaces();
  const Eigen::MatrixXd& phi = oracle.policy().phi;
  double omega = 0.0;
  for (int sn = 0; sn < sp.n_agent; ++sn) {
    const double gap = next_state_law(sn) - oracle.q_kernel()(z, sn);
    if (gap == 0.0) continue;
    double value_given_state = 0.0;
    for (int un = 0; un < sp.n_act; ++un) {
      value_given_state += phi(sn, un) * v(sp.cell(sn, un));
    }
    omega += gap * value_given_state;
  }
  return omega;
}

struct OlsFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

OlsFit ols(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) {
    throw AnalysisError("least-squares fit needs at least two points, got " +
                        std::to_string(n));
  }
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) {
    throw AnalysisError(
        "least-squares fit is degenerate: all abscissae coincide");
  }
  OlsFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double ss_res = syy - fit.slope * sxy;
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

}  // namespace

DecompTerms decomp_step(const JointChainOracle& oracle,
                        const Eigen::VectorXd& belief, int gamma_state, int s,
                        int u, int o_next, int s_next, const QTable& q,
                        double reward) {
  const FiniteSpaces& sp = oracle.spaces();
  const int z = sp.cell(s, u);
  const double discount = q.discount;

  Eigen::VectorXd maxvec(sp.n_agent);
  for (int i = 0; i < sp.n_agent; ++i) maxvec(i) = q.max_over_actions(i);

  DecompTerms t;
  t.cell = z;
  t.f = oracle.rbar()(z) + discount * oracle.q_kernel().row(z).dot(maxvec) -
        q.values(s, u);

  const ConditionalLaws laws = conditional_agent_laws(
      oracle.env(), oracle.recursion(), belief, gamma_state, u);
  t.zeta = (laws.expected_reward - oracle.rbar()(z)) +
           discount *
               (laws.next_state_law - oracle.q_kernel().row(z).transpose())
                   .dot(maxvec);
  t.m_noise = (reward - laws.expected_reward) +
              discount * (maxvec(s_next) - laws.next_state_law.dot(maxvec));
  (void)o_next;
  return t;
}

double omega_step(const JointChainOracle& oracle, const PoissonBasis& basis,
                  const Eigen::VectorXd& belief, int gamma_state, int s, int u,
                  const QTable& q) {
  const ConditionalLaws laws = conditional_agent_laws(
      oracle.env(), oracle.recursion(), belief, gamma_state, u);
  const PoissonSolution sol = basis.solve(q);
  return omega_from_value(oracle, laws.next_state_law,
                          oracle.spaces().cell(s, u), sol.v);
}

double chi(long n, long m, const StepSchedule& sched) {
  if (n < m) return 1.0;
  double prod = 1.0;
  for (long k = m; k <= n; ++k) prod *= 1.0 - sched(k);
  return prod;
}

double schedule_sum(long k, long n, const StepSchedule& sched) {
  double sum = 0.0;
  for (long m = k; m <= n; ++m) sum += sched(m);
  return sum;
}

double beta_bound(long k, long n, double d1, double d2) {
  if (k < 1 || n < 1) {
    throw std::invalid_argument("beta_bound needs k >= 1 and n >= 1");
  }
  const double kd = static_cast<double>(k);
  const double nd = static_cast<double>(n);
  if (d1 <= d2) {
    return 1.0 / (std::pow(kd, d2 - d1) * std::pow(nd, d1));
  }
  return 1.0 / std::pow(nd, d2);
}

void DeltaAccumulator::add_step(long m, double a_m, int cell,
                                double zeta_plus_omega) {
  if (m != steps_) {
    throw std::logic_error("DeltaAccumulator fed step " + std::to_string(m) +
                           " but expected step " + std::to_string(steps_));
  }
  if (cell < 0 || cell >= delta_.size()) {
    throw std::logic_error("DeltaAccumulator cell index out of range");
  }
  ++steps_;
  if (m == 0) return;
  delta_ *= 1.0 - a_m;
  delta_(cell) += a_m * zeta_plus_omega;
}

DecompRecorder::DecompRecorder(const JointChainOracle& oracle,
                               const PoissonBasis* basis, Options opts)
    : oracle_(oracle),
      basis_(basis),
      opts_(std::move(opts)),
      accumulator_(oracle.spaces().n_cells()) {
  if (opts_.full && basis_ == nullptr) {
    throw std::logic_error(
        "DecompRecorder full mode requires a Poisson basis");
  }
  if (!std::is_sorted(opts_.delta_checkpoints.begin(),
                      opts_.delta_checkpoints.end())) {
    throw std::logic_error(
        "DecompRecorder delta checkpoints must be ascending");
  }
}

void DecompRecorder::operator()(const StepContext& ctx) {
  // Delta(ctx.n) is the accumulator value before this step is fed.
  while (next_checkpoint_ < opts_.delta_checkpoints.size() &&
         opts_.delta_checkpoints[next_checkpoint_] == ctx.n) {
    delta_series_steps_.push_back(ctx.n);
    delta_series_norms_.push_back(
        accumulator_.delta().lpNorm<Eigen::Infinity>());
    ++next_checkpoint_;
  }

  if (ctx.belief == nullptr) {
    throw std::logic_error(
        "DecompRecorder requires belief tracking to be enabled");
  }
  const QTable& q = *ctx.q;
  const DecompTerms terms =
      decomp_step(oracle_, *ctx.belief, ctx.gamma_state, ctx.s, ctx.u,
                  ctx.o_next, ctx.s_next, q, ctx.reward);

  // Realized bracket with the same floating-point expression the update
  // rule evaluates, so the identity gap measures the decomposition, not
  // arithmetic reordering.
  const double target = ctx.reward + q.discount * q.max_over_actions(ctx.s_next);
  const double bracket = target - q.values(ctx.s, ctx.u);
  const double gap = std::abs(
      ctx.a_n * ((terms.f + terms.zeta + terms.m_noise) - bracket));
  max_identity_gap_ = std::max(max_identity_gap_, gap);
  max_abs_zeta_ = std::max(max_abs_zeta_, std::abs(terms.zeta));

  double omega = 0.0;
  if (opts_.full) {
    const ConditionalLaws laws =
        conditional_agent_laws(oracle_.env(), oracle_.recursion(), *ctx.belief,
                               ctx.gamma_state, ctx.u);
    const PoissonSolution sol = basis_->solve(q);
    omega = omega_from_value(oracle_, laws.next_state_law, terms.cell, sol.v);
    max_abs_omega_ = std::max(max_abs_omega_, std::abs(omega));
    if (opts_.keep_rows) {
      Row row;
      row.n = ctx.n;
      row.cell = terms.cell;
      row.a_n = ctx.a_n;
      row.f = terms.f;
      row.zeta = terms.zeta;
      row.m_noise = terms.m_noise;
      row.omega = omega;
      row.delta = accumulator_.delta();
      rows_.push_back(std::move(row));
    }
    accumulator_.add_step(ctx.n, ctx.a_n, terms.cell, terms.zeta + omega);
  }
}

void DecompRecorder::finalize() {
  while (next_checkpoint_ < opts_.delta_checkpoints.size()) {
    const long cp = opts_.delta_checkpoints[next_checkpoint_];
    if (cp != accumulator_.steps()) break;
    delta_series_steps_.push_back(cp);
    delta_series_norms_.push_back(
        accumulator_.delta().lpNorm<Eigen::Infinity>());
    ++next_checkpoint_;
  }
}

BoundResult finite_time_bound(const BoundInputs& in, int n_cells) {
  if (in.schedule == nullptr) {
    throw std::invalid_argument("finite_time_bound needs a schedule");
  }
  if (!(in.discount > 0.0 && in.discount < 1.0)) {
    throw std::invalid_argument("finite_time_bound needs discount in (0,1)");
  }
  if (!(in.pi_min > 0.0 && in.pi_min <= 1.0)) {
    throw std::invalid_argument(
        "finite_time_bound needs stationary cell minimum in (0,1]");
  }
  if (in.n0 < 1 || in.n < in.n0) {
    throw std::invalid_argument(
        "finite_time_bound needs 1 <= n0 <= n");
  }
  if (!(in.delta1 > 0.0)) {
    throw std::invalid_argument("finite_time_bound needs delta1 > 0");
  }
  if (n_cells < 1) {
    throw std::invalid_argument("finite_time_bound needs n_cells >= 1");
  }

  const StepSchedule& sched = *in.schedule;
  BoundResult out;
  out.alpha = 1.0 - (1.0 - in.discount) * in.pi_min;
  const double one_minus_alpha = 1.0 - out.alpha;

  const double b = schedule_sum(in.n0, in.n, sched);
  out.transient_term =
      std::exp(-one_minus_alpha * b) * in.q_start_error_norm;
  out.offset_term = (in.delta1 + sched(in.n0) * in.c1) / one_minus_alpha;
  out.error_bound = out.transient_term + out.offset_term;

  out.threshold_c =
      std::exp(2.0 * (1.0 + in.q_ref_norm + 1.0 / (1.0 - in.discount)) +
               in.c2);
  out.squared_branch = in.delta1 <= out.threshold_c;
  const double deviation =
      out.squared_branch ? in.delta1 * in.delta1 : in.delta1;

  double tail_sum = 0.0;
  for (long m = in.n0 + 1; m <= in.n; ++m) {
    const double beta = beta_bound(in.n0, m, sched.d1(), sched.d2());
    tail_sum += std::exp(-in.concentration_rate * deviation / beta);
  }
  out.probability_lower_bound = 1.0 - 2.0 * n_cells * tail_sum;
  out.vacuous = out.probability_lower_bound <= 0.0;
  out.constants_identified = false;
  return out;
}

TailFitResult tail_concentration_fit(const TailFitInput& in) {
  if (in.horizons.size() != in.delta_norms.size()) {
    throw std::invalid_argument(
        "tail fit: horizons and sample blocks must align");
  }
  if (in.horizons.size() < 3) {
    throw AnalysisError("tail fit needs at least 3 horizons, got " +
                        std::to_string(in.horizons.size()));
  }
  const auto [lo_it, hi_it] =
      std::minmax_element(in.horizons.begin(), in.horizons.end());
  if (*lo_it < 1 || *hi_it < 10 * *lo_it) {
    throw AnalysisError(
        "tail fit horizons must be positive and span at least a factor of "
        "10; got range [" +
        std::to_string(*lo_it) + ", " + std::to_string(*hi_it) + "]");
  }
  if (in.grid_points < 2) {
    throw std::invalid_argument("tail fit needs at least 2 grid points");
  }
  if (!(in.d2 > 0.5 && in.d2 <= 1.0)) {
    throw std::invalid_argument("tail fit needs d2 in (0.5, 1]");
  }

  TailFitResult out;
  std::vector<double> pooled_x;
  std::vector<double> pooled_y;
  for (std::size_t h = 0; h < in.horizons.size(); ++h) {
    const std::vector<double>& samples = in.delta_norms[h];
    const long n = in.horizons[h];
    if (static_cast<int>(samples.size()) < in.min_seeds) {
      throw AnalysisError(
          "tail fit at horizon " + std::to_string(n) + " has " +
          std::to_string(samples.size()) + " samples but needs at least " +
          std::to_string(in.min_seeds));
    }
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());

    TailHorizonFit fit;
    fit.n = n;
    const std::size_t m = sorted.size();
    for (int j = 0; j < in.grid_points; ++j) {
      const double quantile = static_cast<double>(j + 1) /
                              static_cast<double>(in.grid_points + 1);
      const auto idx = static_cast<std::size_t>(
          std::llround(quantile * static_cast<double>(m - 1)));
      const double threshold = sorted[idx];
      if (!fit.delta_grid.empty() && threshold <= fit.delta_grid.back()) {
        continue;  // duplicate quantile value
      }
      const auto first_ge =
          std::lower_bound(sorted.begin(), sorted.end(), threshold);
      const double tail =
          static_cast<double>(sorted.end() - first_ge) /
          static_cast<double>(m);
      if (tail <= 0.0) continue;
      fit.delta_grid.push_back(threshold);
      fit.tail_prob.push_back(tail);
    }
    if (fit.delta_grid.size() < 2) {
      throw AnalysisError(
          "tail fit at horizon " + std::to_string(n) +
          " has fewer than 2 distinct thresholds; the sample is degenerate");
    }

    std::vector<double> xs(fit.delta_grid.size());
    std::vector<double> ys(fit.delta_grid.size());
    const double horizon_scale =
        std::pow(static_cast<double>(n), 2.0 * in.d2 - 1.0);
    for (std::size_t j = 0; j < fit.delta_grid.size(); ++j) {
      xs[j] = fit.delta_grid[j] * fit.delta_grid[j];
      ys[j] = std::log(fit.tail_prob[j]);
      pooled_x.push_back(xs[j] * horizon_scale);
      pooled_y.push_back(ys[j]);
    }
    const OlsFit line = ols(xs, ys);
    fit.slope = line.slope;
    fit.intercept = line.intercept;
    fit.r_squared = line.r_squared;
    out.per_horizon.push_back(std::move(fit));
  }

  const OlsFit pooled = ols(pooled_x, pooled_y);
  out.rate_constant = -pooled.slope;
  out.pooled_intercept = pooled.intercept;
  out.pooled_r_squared = pooled.r_squared;
  return out;
}

}  // namespace nmq
