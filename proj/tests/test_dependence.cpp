#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "nmq/dependence.hpp"
#include "nmq/errors.hpp"
#include "nmq/oracle.hpp"
#include "nmq/presets.hpp"

using namespace nmq;

namespace {

Eigen::VectorXd stationary_joint(const Preset& p) {
  JointChainOracle oracle(p.env, p.recursion, p.policy);
  return oracle.stationary();
}

}  // namespace

TEST_CASE("dependence: filtered and brute-force evaluations coincide") {
  for (const char* name : {"markov-consistent", "iid-window1"}) {
    CAPTURE(name);
    const auto p = make_preset(name);
    const auto initial = stationary_joint(p);
    const int horizon = 4;
    const auto a = dependence_matrices(p.env, p.recursion, p.policy, initial,
                                       horizon, 100000000);
    const auto b = dependence_matrices_brute(p.env, p.recursion, p.policy,
                                             initial, horizon, 100000000);
    CHECK((a.phi - b.phi).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.psi - b.psi).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.phi_spectral == doctest::Approx(b.phi_spectral).epsilon(1e-12));
    CHECK(a.d4 == doctest::Approx(std::max(a.phi_spectral, a.psi_spectral))
                      .epsilon(1e-15));
  }
}

TEST_CASE("dependence: matrix conventions") {
  const auto p = make_preset("markov-consistent");
  const auto initial = stationary_joint(p);
  const auto m =
      dependence_matrices(p.env, p.recursion, p.policy, initial, 4, 10000000);
  REQUIRE(m.phi.rows() == 4);
  REQUIRE(m.phi.cols() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(m.phi(i, i) == 1.0);  // diagonal pinned by convention
    for (int j = 0; j < i; ++j) CHECK(m.phi(i, j) == 0.0);
    CHECK(m.psi(i, i) >= 0.0);  // psi diagonal genuinely evaluated
    CHECK(m.psi(i, i) <= 1.0);
  }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(m.phi(i, j) >= 0.0);
      CHECK(m.phi(i, j) <= 1.0 + 1e-12);
      CHECK(m.psi(i, j) >= 0.0);
      CHECK(m.psi(i, j) <= 1.0 + 1e-12);
    }
}

TEST_CASE("dependence: frozen chain keeps only first-coordinate coupling") {
  // The copy process pins the hidden state at time one forever, so the
  // first coordinate influences everything (total variation one) while
  // later coordinates are conditionally redundant.
  const auto p = make_preset("copy-process");
  const auto initial = warmup_initial_law(p.env, p.recursion, p.policy, 8);
  const int horizon = 5;
  const auto a = dependence_matrices(p.env, p.recursion, p.policy, initial,
                                     horizon, 100000000);
  const auto b = dependence_matrices_brute(p.env, p.recursion, p.policy,
                                           initial, horizon, 100000000);
  CHECK((a.phi - b.phi).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.psi - b.psi).cwiseAbs().maxCoeff() < 1e-12);

  for (int j = 1; j < horizon; ++j)
    CHECK(a.phi(0, j) == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 1; i < horizon; ++i)
    for (int j = i + 1; j < horizon; ++j)
      CHECK(std::abs(a.phi(i, j)) < 1e-12);
  for (int i = 0; i < horizon; ++i)
    CHECK(a.psi(i, i) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dependence: iid window chain decouples beyond the window") {
  const auto p = make_preset("iid-window1");
  const auto initial = stationary_joint(p);
  const int horizon = 5;
  const auto m = dependence_matrices(p.env, p.recursion, p.policy, initial,
                                     horizon, 100000000);
  for (int i = 0; i < horizon; ++i)
    for (int j = i + 2; j < horizon; ++j) {
      CHECK(std::abs(m.phi(i, j)) < 1e-12);
      CHECK(std::abs(m.psi(i, j)) < 1e-12);
    }
  // Inside the window the coupling is maximal: the pair enters the next
  // agent state verbatim.
  for (int i = 0; i + 1 < horizon; ++i)
    CHECK(m.phi(i, i + 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dependence: budget refusal names both numbers") {
  const auto p = make_preset("markov-consistent");
  const auto initial = stationary_joint(p);
  try {
    (void)dependence_matrices(p.env, p.recursion, p.policy, initial, 6, 100);
    FAIL("expected AnalysisError");
  } catch (const AnalysisError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("100") != std::string::npos);
    CHECK(msg.find("budget") != std::string::npos);
  }
}

TEST_CASE("dependence: horizon and initial-law validation") {
  const auto p = make_preset("markov-consistent");
  const auto initial = stationary_joint(p);
  CHECK_THROWS_AS((void)dependence_matrices(p.env, p.recursion, p.policy,
                                            initial, 0, 1000),
                  ConfigError);
  CHECK_THROWS_AS((void)dependence_matrices(p.env, p.recursion, p.policy,
                                            initial, 9, 1000),
                  ConfigError);
  Eigen::VectorXd bad = initial;
  bad(0) += 0.5;  // does not sum to one
  CHECK_THROWS_AS((void)dependence_matrices(p.env, p.recursion, p.policy,
                                            bad, 3, 1000000),
                  ConfigError);
  Eigen::VectorXd wrong_size = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  CHECK_THROWS_AS((void)dependence_matrices(p.env, p.recursion, p.policy,
                                            wrong_size, 3, 1000000),
                  ConfigError);
}

TEST_CASE("warmup law: valid distribution, uniform times delta at zero") {
  const auto p = make_preset("copy-process");
  const auto zero = warmup_initial_law(p.env, p.recursion, p.policy, 0);
  const int n_gamma = p.recursion.n_gamma;
  REQUIRE(zero.size() == p.env.spaces().n_hidden * n_gamma);
  for (int x = 0; x < p.env.spaces().n_hidden; ++x)
    for (int g = 0; g < n_gamma; ++g)
      CHECK(zero(x * n_gamma + g) ==
            doctest::Approx(g == 0 ? 0.5 : 0.0).epsilon(1e-15));

  const auto pushed = warmup_initial_law(p.env, p.recursion, p.policy, 8);
  CHECK(pushed.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pushed.minCoeff() >= 0.0);
}
