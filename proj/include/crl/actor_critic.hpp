#pragma once

#include "crl/agent.hpp"

#include <functional>

namespace crl {

/// Replay minibatch for box action spaces, one sample per column.
struct ContinuousBatch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;
};

ContinuousBatch make_continuous_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& indices,
                                      const Space& observation_space);

/// Stacks states over actions: the input layout of every q(s, a) critic.
Eigen::MatrixXd critic_input(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions);

/// Gradient of (1/2n) sum_i (y_i - q(s_i, a_i))^2 with y held fixed.
struct CriticGradient {
  ParamVector loss_gradient;
  TDErrorBatch deltas;  // y_i - q(s_i, a_i)
};

CriticGradient q_critic_gradient(const Network& critic, const Eigen::MatrixXd& inputs,
                                 const Eigen::VectorXd& targets);

/// d q(s, a) / d a for every column, from a single-output critic.
Eigen::MatrixXd critic_action_gradient(const Network& critic, const Eigen::MatrixXd& states,
                                       const Eigen::MatrixXd& actions);

/// mu(s) = center + scale * tanh(actor(s)). `pre_squash` receives tanh(actor(s)).
Eigen::MatrixXd deterministic_actions(const Network& actor, const ActionScaling& scaling,
                                      const Eigen::MatrixXd& states, MlpTape* tape = nullptr,
                                      Eigen::MatrixXd* squashed = nullptr);

/// Gradient of -(1/n) sum_i q(s_i, mu(s_i)) with respect to the actor
/// parameters, given a callable returning dq/da at a batch of actions.
ParamVector deterministic_policy_loss_gradient(
    const Network& actor, const ActionScaling& scaling, const Eigen::MatrixXd& states,
    const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& action_gradient);

/// Reference pairs for box action spaces.
struct ContinuousReferenceSet {
  Eigen::MatrixXd inputs;  // critic_input layout

  bool empty() const { return inputs.cols() == 0; }
};

ContinuousReferenceSet sample_continuous_reference_set(const ReplayBuffer& buffer, std::size_t size,
                                                       const Space& observation_space, Rng& rng);

/// TD3 target-policy smoothing noise: N(0, std) clipped to [-clip, clip].
double clipped_target_noise(double raw_noise, double clip);

/// DDPG, or TD3 when `twin_delayed` is set (twin critics with a min target,
/// target-policy smoothing, delayed actor updates).
class DdpgAgent final : public Agent {
 public:
  DdpgAgent(AgentConfig config, Space observation_space, BoxSpace action_space, std::uint64_t seed,
            bool twin_delayed);

  Action act(const Observation& observation, ActMode mode) override;
  void observe(const Transition& transition) override;
  const RewardRateEstimator& estimator() const override { return estimator_; }

  /// y_i = (r_i - rbar) + gamma min_j q_target_j(s'_i, a'_i); a' from the
  /// target actor, smoothed for TD3 with noise drawn from `noise_rng`.
  Eigen::VectorXd td_targets(const ContinuousBatch& batch, Rng& noise_rng) const;
  void update(const ContinuousBatch& batch);

  Network& actor() { return actor_; }
  Network& critic(int j) { return critics_[static_cast<std::size_t>(j)]; }
  ParamVector& actor_target() { return actor_target_; }
  ParamVector& critic_target(int j) { return critic_targets_[static_cast<std::size_t>(j)]; }
  long critic_updates() const { return critic_updates_; }
  long actor_updates() const { return actor_updates_; }
  bool twin_delayed() const { return twin_delayed_; }

 private:
  void refresh_reference_value();

  AgentConfig config_;
  Space observation_space_;
  BoxSpace action_space_;
  ActionScaling scaling_;
  bool twin_delayed_;
  Network actor_;
  ParamVector actor_target_;
  std::vector<Network> critics_;
  std::vector<ParamVector> critic_targets_;
  RewardRateEstimator estimator_;
  ReplayBuffer replay_;
  ContinuousReferenceSet reference_;
  Eigen::VectorXd noise_std_;
  Rng explore_rng_;
  Rng replay_rng_;
  Rng noise_rng_;
  long steps_ = 0;
  long critic_updates_ = 0;
  long actor_updates_ = 0;
};

}  // namespace crl
