#include "nmq/embed.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "nmq/errors.hpp"

namespace nmq {

namespace {

void check_samples(const std::vector<int>& xs, const std::vector<int>& ys,
                   int dim_x, int dim_y) {
  if (xs.empty()) {
    throw AnalysisError("moment fit needs a nonempty sample");
  }
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("moment fit: sample arrays must align");
  }
  if (dim_x < 1 || dim_y < 1) {
    throw std::invalid_argument("moment fit: dimensions must be positive");
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] < 0 || xs[i] >= dim_x || ys[i] < 0 || ys[i] >= dim_y) {
      throw std::invalid_argument("moment fit: sample index out of range");
    }
  }
}

// Median of a multiset (lower middle for even sizes).
double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

}  // namespace

CrossCovariance fit_cross_covariance(const std::vector<int>& xs,
                                     const std::vector<int>& ys, int dim_x,
                                     int dim_y) {
  check_samples(xs, ys, dim_x, dim_y);
  const double m = static_cast<double>(xs.size());
  CrossCovariance out;
  out.mu_x = Eigen::VectorXd::Zero(dim_x);
  out.mu_y = Eigen::VectorXd::Zero(dim_y);
  Eigen::MatrixXd raw_xx = Eigen::MatrixXd::Zero(dim_x, dim_x);
  Eigen::MatrixXd raw_yx = Eigen::MatrixXd::Zero(dim_y, dim_x);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.mu_x(xs[i]) += 1.0;
    out.mu_y(ys[i]) += 1.0;
    raw_xx(xs[i], xs[i]) += 1.0;
    raw_yx(ys[i], xs[i]) += 1.0;
  }
  out.mu_x /= m;
  out.mu_y /= m;
  raw_xx /= m;
  raw_yx /= m;
  out.c_xx = raw_xx - out.mu_x * out.mu_x.transpose();
  out.c_yx = raw_yx - out.mu_y * out.mu_x.transpose();
  return out;
}

SecondMoments fit_second_moments(const std::vector<int>& xs,
                                 const std::vector<int>& ys, int dim_x,
                                 int dim_y) {
  check_samples(xs, ys, dim_x, dim_y);
  const double m = static_cast<double>(xs.size());
  SecondMoments out;
  out.m_xx = Eigen::MatrixXd::Zero(dim_x, dim_x);
  out.m_yx = Eigen::MatrixXd::Zero(dim_y, dim_x);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.m_xx(xs[i], xs[i]) += 1.0;
    out.m_yx(ys[i], xs[i]) += 1.0;
  }
  out.m_xx /= m;
  out.m_yx /= m;
  return out;
}

Eigen::MatrixXd conditional_operator(const Eigen::MatrixXd& c_yx,
                                     const Eigen::MatrixXd& c_xx,
                                     double lambda) {
  if (c_xx.rows() != c_xx.cols()) {
    throw std::invalid_argument("conditional operator: C_xx must be square");
  }
  if (c_yx.cols() != c_xx.rows()) {
    throw std::invalid_argument(
        "conditional operator: C_yx and C_xx dimensions must agree");
  }
  if (lambda < 0.0) {
    throw std::invalid_argument(
        "conditional operator: lambda must be nonnegative");
  }
  Eigen::MatrixXd reg = c_xx;
  reg.diagonal().array() += lambda;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(reg);
  if (!lu.isInvertible()) {
    throw AnalysisError(
        "conditional operator: the regularized covariance is singular; "
        "increase the ridge parameter lambda");
  }
  // Solve reg^T X^T = C_yx^T so that X = C_yx reg^{-1} (reg is symmetric
  // up to round-off; use it as given).
  return lu.solve(c_yx.transpose()).transpose();
}

FilterOperators fit_filter_operators(const std::vector<int>& labels,
                                     const std::vector<int>& obs_next,
                                     const std::vector<int>& labels_next,
                                     int n_label, int n_obs, double lambda) {
  if (labels.empty()) {
    throw AnalysisError("filter fit needs a nonempty sample");
  }
  if (labels.size() != obs_next.size() ||
      labels.size() != labels_next.size()) {
    throw std::invalid_argument("filter fit: sample arrays must align");
  }
  if (n_label < 1 || n_obs < 1) {
    throw std::invalid_argument("filter fit: dimensions must be positive");
  }
  const int dim = n_label + n_obs;
  const double m = static_cast<double>(labels.size());
  Eigen::MatrixXd m_xx = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd m_yx = Eigen::MatrixXd::Zero(n_label, dim);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int a = labels[i];
    const int b = obs_next[i];
    const int y = labels_next[i];
    if (a < 0 || a >= n_label || y < 0 || y >= n_label || b < 0 ||
        b >= n_obs) {
      throw std::invalid_argument("filter fit: sample index out of range");
    }
    const int bo = n_label + b;
    m_xx(a, a) += 1.0;
    m_xx(bo, bo) += 1.0;
    m_xx(a, bo) += 1.0;
    m_xx(bo, a) += 1.0;
    m_yx(y, a) += 1.0;
    m_yx(y, bo) += 1.0;
  }
  m_xx /= m;
  m_yx /= m;

  double lam = lambda;
  if (lam < 0.0) {
    lam = 1e-3 * m_xx.trace() / static_cast<double>(dim);
  }
  const Eigen::MatrixXd theta = conditional_operator(m_yx, m_xx, lam);

  FilterOperators ops;
  ops.lambda = lam;
  ops.t1 = theta.leftCols(n_label);
  ops.t2 = theta.rightCols(n_obs);

  // Gauge fix: on one-hot inputs the prediction only sees T1 + T2 through
  // row-wise sums, so shift each row to the L1-minimal representative.
  for (int r = 0; r < n_label; ++r) {
    std::vector<double> entries;
    entries.reserve(static_cast<std::size_t>(dim));
    for (int c = 0; c < n_label; ++c) entries.push_back(ops.t1(r, c));
    for (int c = 0; c < n_obs; ++c) entries.push_back(-ops.t2(r, c));
    const double shift = median(std::move(entries));
    ops.t1.row(r).array() -= shift;
    ops.t2.row(r).array() += shift;
  }
  return ops;
}

Eigen::VectorXd simplex_project(const Eigen::VectorXd& v) {
  constexpr double kUnitTol = 1e-12;
  if (v.size() == 0) {
    throw std::invalid_argument("simplex projection of an empty vector");
  }
  if (v.minCoeff() >= 0.0 && std::abs(v.sum() - 1.0) <= kUnitTol) {
    return v;  // already a probability vector: projection is the identity
  }
  Eigen::VectorXd clipped = v.cwiseMax(0.0);
  const double total = clipped.sum();
  if (total <= 0.0) {
    // Every coordinate clipped away: the filter state is uninformative,
    // fall back to the uniform law rather than fail.
    return Eigen::VectorXd::Constant(v.size(),
                                     1.0 / static_cast<double>(v.size()));
  }
  return clipped / total;
}

Eigen::VectorXd filter_update(const FilterOperators& ops,
                              const Eigen::VectorXd& mu, int o_next) {
  if (mu.size() != ops.t1.cols()) {
    throw std::invalid_argument("filter update: state dimension mismatch");
  }
  if (o_next < 0 || o_next >= ops.t2.cols()) {
    throw std::invalid_argument("filter update: observation out of range");
  }
  const Eigen::VectorXd raw = ops.t1 * mu + ops.t2.col(o_next);
  return simplex_project(raw);
}

int infer_state(const Eigen::VectorXd& mu) {
  const Eigen::VectorXd p = simplex_project(mu);
  int best = 0;
  for (int i = 1; i < p.size(); ++i) {
    if (p(i) > p(best)) best = i;
  }
  return best;
}

}  // namespace nmq
