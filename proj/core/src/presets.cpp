#include "nmq/presets.hpp"

#include <Eigen/Dense>

#include "nmq/errors.hpp"

namespace nmq {

namespace {

Eigen::MatrixXd mat2(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

Preset make_markov_consistent() {
  FiniteSpaces spaces{2, 2, 2, 2};
  std::vector<Eigen::MatrixXd> t = {mat2(0.7, 0.3, 0.3, 0.7),
                                    mat2(0.2, 0.8, 0.6, 0.4)};
  Eigen::MatrixXd e = Eigen::MatrixXd::Identity(2, 2);
  std::vector<Eigen::MatrixXd> r = {mat2(0.1, 0.9, 0.8, 0.3),
                                    mat2(0.5, 0.2, 0.15, 0.7)};
  HmmEnvironment env(spaces, std::move(t), std::move(e), std::move(r));
  AgentStateRecursion rec = make_window_recursion(spaces, 0);
  Policy pol{mat2(0.7, 0.3, 0.4, 0.6)};
  return Preset{"markov-consistent",
                std::move(env),
                std::move(rec),
                std::move(pol),
                StepSchedule::power(1.0, 1.0, 0.75, 0.5, 1.0, 1),
                0.9};
}

Preset make_hmm2_window1() {
  FiniteSpaces spaces{2, 2, 1, 4};
  std::vector<Eigen::MatrixXd> t = {mat2(0.65, 0.35, 0.3, 0.7)};
  Eigen::MatrixXd e = mat2(0.8, 0.2, 0.25, 0.75);
  Eigen::MatrixXd r(4, 2);
  r << 0.33, 0.65,  //
      0.37, 0.63,   //
      0.35, 0.67,   //
      0.31, 0.61;
  HmmEnvironment env(spaces, std::move(t), std::move(e), {r});
  AgentStateRecursion rec = make_window_recursion(spaces, 1);
  Policy pol{Eigen::MatrixXd::Ones(4, 1)};
  return Preset{"hmm2-window1",
                std::move(env),
                std::move(rec),
                std::move(pol),
                StepSchedule::power(6.0, 11.0, 0.75, 0.5, 6.0, 1),
                0.9};
}

Preset make_hmm3_window2() {
  FiniteSpaces spaces{3, 2, 1, 8};
  Eigen::MatrixXd t(3, 3);
  t << 0.70, 0.20, 0.10,  //
      0.15, 0.70, 0.15,   //
      0.10, 0.25, 0.65;
  Eigen::MatrixXd e(3, 2);
  e << 0.85, 0.15,  //
      0.40, 0.60,   //
      0.10, 0.90;
  Eigen::MatrixXd r(8, 2);
  for (int s = 0; s < 8; ++s) {
    r(s, 0) = 0.40 + 0.02 * ((s % 3) - 1);
    r(s, 1) = 0.60 + 0.02 * (((s + 1) % 3) - 1);
  }
  HmmEnvironment env(spaces, {t}, std::move(e), {r});
  AgentStateRecursion rec = make_window_recursion(spaces, 2);
  Policy pol{Eigen::MatrixXd::Ones(8, 1)};
  return Preset{"hmm3-window2",
                std::move(env),
                std::move(rec),
                std::move(pol),
                StepSchedule::power(6.0, 11.0, 0.75, 0.5, 6.0, 1),
                0.9};
}

Preset make_copy_process() {
  FiniteSpaces spaces{2, 2, 2, 2};
  std::vector<Eigen::MatrixXd> t = {Eigen::MatrixXd::Identity(2, 2),
                                    Eigen::MatrixXd::Identity(2, 2)};
  Eigen::MatrixXd e = Eigen::MatrixXd::Identity(2, 2);
  std::vector<Eigen::MatrixXd> r = {mat2(0.2, 0.8, 0.6, 0.4),
                                    mat2(0.7, 0.1, 0.3, 0.9)};
  HmmEnvironment env(spaces, std::move(t), std::move(e), std::move(r));
  AgentStateRecursion rec = make_window_recursion(spaces, 0);
  Policy pol{mat2(0.8, 0.2, 0.3, 0.7)};
  return Preset{"copy-process",
                std::move(env),
                std::move(rec),
                std::move(pol),
                StepSchedule::power(1.0, 1.0, 0.75, 0.5, 1.0, 1),
                0.9};
}

Preset make_iid_window1() {
  FiniteSpaces spaces{1, 2, 2, 8};
  std::vector<Eigen::MatrixXd> t = {Eigen::MatrixXd::Ones(1, 1),
                                    Eigen::MatrixXd::Ones(1, 1)};
  Eigen::MatrixXd e(1, 2);
  e << 0.5, 0.5;
  Eigen::MatrixXd r0(8, 2);
  Eigen::MatrixXd r1(8, 2);
  for (int s = 0; s < 8; ++s) {
    r0(s, 0) = 0.10 + 0.05 * s;
    r0(s, 1) = 0.40 + 0.05 * s;
    r1(s, 0) = 0.90 - 0.05 * s;
    r1(s, 1) = 0.65 - 0.05 * s;
  }
  HmmEnvironment env(spaces, std::move(t), std::move(e), {r0, r1});
  AgentStateRecursion rec = make_window_recursion(spaces, 1);
  Policy pol = make_uniform_policy(spaces);
  return Preset{"iid-window1",
                std::move(env),
                std::move(rec),
                std::move(pol),
                StepSchedule::power(1.0, 1.0, 0.75, 0.5, 1.0, 1),
                0.9};
}

}  // namespace

Preset make_preset(const std::string& name) {
  if (name == "markov-consistent") return make_markov_consistent();
  if (name == "hmm2-window1") return make_hmm2_window1();
  if (name == "hmm3-window2") return make_hmm3_window2();
  if (name == "copy-process") return make_copy_process();
  if (name == "iid-window1") return make_iid_window1();
  std::string known;
  for (const std::string& n : preset_names()) {
    if (!known.empty()) known += ", ";
    known += n;
  }
  throw ConfigError("unknown preset '" + name + "'; known presets: " + known);
}

std::vector<std::string> preset_names() {
  return {"markov-consistent", "hmm2-window1", "hmm3-window2", "copy-process",
          "iid-window1"};
}

}  // namespace nmq
