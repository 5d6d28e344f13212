#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace crl {

/// Raised when an exact solver cannot produce a unique answer, e.g. the
/// stationary distribution of a policy whose chain has several recurrent
/// classes.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Finite MDP with expected rewards.
///
/// `transition[a](s, s2)` is p(s2 | s, a); every row of every per-action
/// matrix is a probability vector. `reward(s, a)` is the expected reward.
struct DiscreteMdp {
  int num_states = 0;
  int num_actions = 0;
  std::vector<Eigen::MatrixXd> transition;
  Eigen::MatrixXd reward;
  Eigen::VectorXd initial_dist;

  double p(int s, int a, int next) const { return transition[static_cast<std::size_t>(a)](s, next); }
};

/// Row-stochastic matrix pi(s, a).
struct TabularPolicy {
  Eigen::MatrixXd probs;

  static TabularPolicy uniform(int num_states, int num_actions);
  static TabularPolicy deterministic(const std::vector<int>& actions, int num_actions);
};

struct ExactSolution {
  Eigen::VectorXd v_pi;
  Eigen::VectorXd d_pi;
  double reward_rate = 0.0;
  double gamma = 0.0;
};

/// Throws std::invalid_argument if shapes or probabilities are off (1e-12).
void validate(const DiscreteMdp& mdp);
void validate(const TabularPolicy& policy, const DiscreteMdp& mdp);

Eigen::MatrixXd policy_transition(const DiscreteMdp& mdp, const TabularPolicy& policy);
Eigen::VectorXd policy_reward(const DiscreteMdp& mdp, const TabularPolicy& policy);

/// Solves v = r_pi + gamma P_pi v directly. gamma must lie in [0, 1).
Eigen::VectorXd exact_discounted_values(const DiscreteMdp& mdp, const TabularPolicy& policy, double gamma);

/// Solves d^T (P_pi - I) = 0 with sum(d) = 1. Throws SolverError when the
/// chain has more than one recurrent class.
Eigen::VectorXd stationary_distribution(const DiscreteMdp& mdp, const TabularPolicy& policy);

/// d_pi^T r_pi for a single-recurrent-class chain.
double reward_rate_exact(const DiscreteMdp& mdp, const TabularPolicy& policy);

ExactSolution solve_exact(const DiscreteMdp& mdp, const TabularPolicy& policy, double gamma);

/// Optimal action values by value iteration, stopped at a max-norm Bellman
/// residual below `tolerance`.
Eigen::MatrixXd optimal_action_values(const DiscreteMdp& mdp, double gamma, double tolerance = 1e-12,
                                      int max_iterations = 10'000'000);

/// Greedy action per state; ties go to the lowest index.
std::vector<int> greedy_actions(const Eigen::MatrixXd& q);

/// True iff the support graph (edge s -> s2 when some action reaches s2 with
/// positive probability) has exactly one closed strongly connected component.
/// States outside that component are transient.
bool is_weakly_communicating(const DiscreteMdp& mdp);

/// Random MDP whose rows are mixed with a uniform component of weight
/// `mixing`, so every policy induces an ergodic chain. Rewards are uniform in
/// [-reward_span, reward_span]. Deterministic in `seed`.
DiscreteMdp generate_random_mdp(std::uint64_t seed, int num_states, int num_actions, double reward_span,
                                double mixing = 0.05);

/// Random stochastic policy with every probability bounded away from zero.
TabularPolicy generate_random_policy(std::uint64_t seed, int num_states, int num_actions);

std::string mdp_to_json(const DiscreteMdp& mdp);
DiscreteMdp mdp_from_json(const std::string& text);

}  // namespace crl
