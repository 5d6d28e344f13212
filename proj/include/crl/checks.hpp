#pragma once

#include "crl/experiment.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace crl {

/// Outcome of one acceptance check.
struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string summary;
};

CheckResult check_td0_convergence();
CheckResult check_laurent();
CheckResult check_shift_equivariance();
CheckResult check_offset_harm();
CheckResult check_large_gamma();
CheckResult check_wrappers();
CheckResult check_gradients();
CheckResult check_reductions();
CheckResult check_reset_cost();
CheckResult check_statistics();
/// Re-runs every config in `golden_dir` and compares against the stored
/// outputs next to it.
CheckResult check_golden(const std::filesystem::path& golden_dir);

/// Names accepted by run_checks: laurent, td0-convergence, shift-equivariance,
/// offset-harm, large-gamma, wrappers, gradients, reductions, reset-cost,
/// statistics, golden, and "all".
const std::vector<std::string>& check_names();
std::vector<CheckResult> run_checks(const std::vector<std::string>& names, const std::filesystem::path& golden_dir);

/// One line per check: "[PASS] 2 laurent: ...".
std::string format_check(const CheckResult& result);

/// Experiment configs behind the learning checks, exposed so the same
/// settings can be run from the command line.
ExperimentConfig offset_harm_config();
ExperimentConfig large_gamma_config();

/// The failure-prone chain used by the reset-cost check: states 0-4 form a
/// ring, state 5 is the failure state. Action 0 is safe, action 1 earns more
/// but may fall into state 5.
DiscreteMdp reset_cost_mdp();
/// The MDP an agent actually faces under reset_as_transition: mass entering a
/// failure state goes to the initial distribution and pays `reset_cost`.
DiscreteMdp reset_as_transition_mdp(const DiscreteMdp& mdp, const std::vector<int>& failure_states, double reset_cost);
/// Expected resets per step of a stationary policy on the base MDP wrapped
/// by reset_as_transition.
double exact_reset_rate(const DiscreteMdp& mdp, const std::vector<int>& failure_states, const TabularPolicy& policy);

/// Writes the outputs for every config in `golden_dir` (the files the golden
/// check compares against).
void write_golden(const std::filesystem::path& golden_dir);

}  // namespace crl
