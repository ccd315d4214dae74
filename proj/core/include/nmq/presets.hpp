#pragma once

#include <string>
#include <vector>

#include "nmq/agent.hpp"
#include "nmq/env.hpp"
#include "nmq/schedule.hpp"

namespace nmq {

// A self-contained experiment setup: environment, agent-state recursion,
// behavior policy, step-size schedule, and discount.
struct Preset {
  std::string name;
  HmmEnvironment env;
  AgentStateRecursion recursion;
  Policy policy;
  StepSchedule schedule;
  double discount = 0.9;
};

// Built-in setups:
//   markov-consistent  two hidden states observed exactly (identity
//                      emission), window 0, two actions: the agent state
//                      coincides with the hidden state, so the
//                      information-gap terms vanish identically.
//   hmm2-window1       two hidden states, noisy binary observations, one
//                      action, window 1 (four agent states); also the
//                      filtering benchmark environment.
//   hmm3-window2       three hidden states, noisy binary observations, one
//                      action, window 2 (eight agent states).
//   copy-process       frozen hidden state observed exactly, window 0, two
//                      actions; the joint chain splits into two closed
//                      classes, so stationary analyses refuse it and the
//                      dependence analysis runs from a warm-up law.
//   iid-window1        a single hidden state emitting coin-flip
//                      observations, two actions, window 1, uniform
//                      policy; past coordinates beyond the window length
//                      provably stop mattering.
Preset make_preset(const std::string& name);

std::vector<std::string> preset_names();

}  // namespace nmq
