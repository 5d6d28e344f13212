#pragma once

#include "crl/agent.hpp"

namespace crl {

/// A_t = sum_k (gamma lambda)^k delta_{t+k}, truncated at the end of the round.
Eigen::VectorXd gae_advantages(const Eigen::VectorXd& deltas, double gamma, double lambda);

/// Categorical policy over logits, or a Gaussian whose mean is the network
/// output and whose log-std is a state-independent parameter vector.
struct PpoPolicy {
  Network net;
  bool discrete = true;
  ParamVector log_std;  // empty for categorical policies
  AdamState adam;       // over [net.params; log_std]

  Eigen::Index num_params() const { return net.params.size() + log_std.size(); }
};

PpoPolicy make_ppo_policy(const Space& observation_space, const Space& action_space, const AgentConfig& config,
                          Rng& init_rng);

/// Actions are stored one per column: a single row holding the index for
/// categorical policies, the unclipped sample for Gaussian ones.
struct PolicyEvaluation {
  Eigen::VectorXd log_prob;
  Eigen::VectorXd entropy;
};

PolicyEvaluation evaluate_policy(const PpoPolicy& policy, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions);

/// Gradient of sum_i [w_i log pi(a_i|s_i) + e_i H(s_i)] with respect to
/// [net.params; log_std].
ParamVector policy_weighted_gradient(const PpoPolicy& policy, const Eigen::MatrixXd& states,
                                     const Eigen::MatrixXd& actions, const Eigen::VectorXd& log_prob_weights,
                                     const Eigen::VectorXd& entropy_weights);

/// Gradient of the clipped surrogate loss
///   -(1/n) sum_i min(rho_i A_i, clip(rho_i, 1 - eps, 1 + eps) A_i) - c_H (1/n) sum_i H(s_i)
/// with rho_i = pi(a_i|s_i) / pi_old(a_i|s_i).
ParamVector ppo_policy_loss_gradient(const PpoPolicy& policy, const Eigen::MatrixXd& states,
                                     const Eigen::MatrixXd& actions, const Eigen::VectorXd& old_log_prob,
                                     const Eigen::VectorXd& advantages, double clip_range, double entropy_coef);

/// Gradient of -(1/n) sum_i A_i log pi(a_i|s_i).
ParamVector policy_score_gradient(const PpoPolicy& policy, const Eigen::MatrixXd& states,
                                  const Eigen::MatrixXd& actions, const Eigen::VectorXd& advantages);

/// On-policy PPO. Warmup mode is treated as explore: every action in a round
/// comes from the current policy.
class PpoAgent final : public Agent {
 public:
  PpoAgent(AgentConfig config, Space observation_space, Space action_space, std::uint64_t seed);

  Action act(const Observation& observation, ActMode mode) override;
  void observe(const Transition& transition) override;
  const RewardRateEstimator& estimator() const override { return estimator_; }

  const PpoPolicy& policy() const { return policy_; }
  const Network& critic() const { return critic_; }
  long rounds() const { return rounds_; }

 private:
  void train_round();

  AgentConfig config_;
  Space observation_space_;
  Space action_space_;
  PpoPolicy policy_;
  Network critic_;
  RewardRateEstimator estimator_;
  Eigen::MatrixXd reference_states_;
  Rng explore_rng_;
  Rng minibatch_rng_;

  Eigen::VectorXd pending_action_;
  double pending_log_prob_ = 0.0;

  std::vector<Eigen::VectorXd> states_;
  std::vector<Eigen::VectorXd> next_states_;
  std::vector<Eigen::VectorXd> actions_;
  std::vector<double> log_probs_;
  std::vector<double> rewards_;
  long rounds_ = 0;
};

}  // namespace crl
