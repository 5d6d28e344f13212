#pragma once

#include "crl/agent.hpp"
#include "crl/mdp.hpp"

namespace crl {

struct TabularTransition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
};

/// TD(0): delta = R - rbar + gamma V(S') - V(S); V(S) += alpha delta. With
/// td_based centering, rbar += eta alpha delta. Returns the TD error used.
double tabular_td0_update(Eigen::VectorXd& values, const TabularTransition& t, double alpha, double gamma,
                          RewardRateEstimator& estimator, double eta);

/// Q-learning with the same centering rule, bootstrapping from max_a Q(S', a).
double tabular_q_update(Eigen::MatrixXd& q, const TabularTransition& t, double alpha, double gamma,
                        RewardRateEstimator& estimator, double eta);

/// f(Q) for relative Q-learning.
double relative_q_offset(const Eigen::MatrixXd& q, RelativeQMode mode,
                         const std::vector<std::pair<int, int>>& reference_pairs);

/// Q(S,A) += alpha (R - f(Q) + gamma max_a Q(S', a) - Q(S, A)).
double relative_q_update(Eigen::MatrixXd& q, const TabularTransition& t, double alpha, double gamma,
                         RelativeQMode mode, const std::vector<std::pair<int, int>>& reference_pairs);

/// alpha / (1 + updates / decay_steps), or alpha when decay_steps is 0.
double scheduled_step_size(double alpha, double decay_steps, long updates);

/// Evaluates a fixed tabular policy with TD(0).
class TabularTd0Agent final : public Agent {
 public:
  TabularTd0Agent(AgentConfig config, int num_states, int num_actions, TabularPolicy policy, std::uint64_t seed);

  Action act(const Observation& observation, ActMode mode) override;
  void observe(const Transition& transition) override;
  const RewardRateEstimator& estimator() const override { return estimator_; }

  const Eigen::VectorXd& values() const { return values_; }

 private:
  AgentConfig config_;
  TabularPolicy policy_;
  Eigen::VectorXd values_;
  RewardRateEstimator estimator_;
  Rng explore_rng_;
  long updates_ = 0;
};

/// Epsilon-greedy Q-learning, optionally centered.
class TabularQAgent final : public Agent {
 public:
  TabularQAgent(AgentConfig config, int num_states, int num_actions, std::uint64_t seed);

  Action act(const Observation& observation, ActMode mode) override;
  void observe(const Transition& transition) override;
  const RewardRateEstimator& estimator() const override { return estimator_; }

  const Eigen::MatrixXd& q() const { return q_; }

 private:
  AgentConfig config_;
  Eigen::MatrixXd q_;
  RewardRateEstimator estimator_;
  Rng explore_rng_;
  long updates_ = 0;
};

/// Relative Q-learning with a fixed offset function f.
class RelativeQAgent final : public Agent {
 public:
  RelativeQAgent(AgentConfig config, int num_states, int num_actions, std::uint64_t seed);

  Action act(const Observation& observation, ActMode mode) override;
  void observe(const Transition& transition) override;
  const RewardRateEstimator& estimator() const override { return estimator_; }

  const Eigen::MatrixXd& q() const { return q_; }

 private:
  AgentConfig config_;
  Eigen::MatrixXd q_;
  RewardRateEstimator estimator_;
  Rng explore_rng_;
  long updates_ = 0;
};

/// Uniform random policy; the baseline arm of every comparison.
class RandomAgent final : public Agent {
 public:
  RandomAgent(const Space& action_space, std::uint64_t seed);

  Action act(const Observation& observation, ActMode mode) override;
  void observe(const Transition&) override {}
  const RewardRateEstimator& estimator() const override { return estimator_; }

 private:
  Space action_space_;
  Rng rng_;
  RewardRateEstimator estimator_;
};

}  // namespace crl
