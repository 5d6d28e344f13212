#pragma once

#include "crl/actor_critic.hpp"
#include "crl/dqn.hpp"

namespace crl {

inline constexpr double kSacLogStdMin = -5.0;
inline constexpr double kSacLogStdMax = 2.0;

/// Target entropy for continuous SAC: the configured value, or -|A| plus the
/// configured offset (0, -3, -6 or -9 in agent-controlled reset tasks).
double sac_target_entropy(const AgentConfig& config, int action_dims);

/// Reparameterized squashed-Gaussian samples. The actor emits 2|A| rows per
/// state: means, then raw log-stds mapped into [kSacLogStdMin, kSacLogStdMax].
struct SquashedSample {
  Eigen::MatrixXd actions;  // env-scaled actions
  Eigen::VectorXd log_prob;
  Eigen::MatrixXd noise;    // standard normal draws
  Eigen::MatrixXd squashed; // tanh(u)
  Eigen::MatrixXd log_std;
  Eigen::MatrixXd raw_log_std;
};

SquashedSample squashed_gaussian_sample(const Network& actor, const ActionScaling& scaling,
                                        const Eigen::MatrixXd& states, const Eigen::MatrixXd& noise,
                                        MlpTape* tape = nullptr);

/// Gradient of (1/n) sum_i [kappa log pi(a_i|s_i) - q(s_i, a_i)] with respect
/// to the actor parameters, for a_i reparameterized with fixed `noise`.
/// `action_gradient` returns dq/da at a batch of actions.
ParamVector sac_actor_loss_gradient(const Network& actor, const ActionScaling& scaling, const Eigen::MatrixXd& states,
                                    const Eigen::MatrixXd& noise, double kappa,
                                    const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& action_gradient);

/// d/d(log kappa) of -log kappa * mean(log pi + target_entropy).
double sac_temperature_gradient(const Eigen::VectorXd& log_probs, double target_entropy);

class SacAgent final : public Agent {
 public:
  SacAgent(AgentConfig config, Space observation_space, BoxSpace action_space, std::uint64_t seed);

  Action act(const Observation& observation, ActMode mode) override;
  void observe(const Transition& transition) override;
  const RewardRateEstimator& estimator() const override { return estimator_; }

  /// y_i = (r_i - rbar) + gamma (min_j q_target_j(s', a') - kappa log pi(a'|s')).
  Eigen::VectorXd td_targets(const ContinuousBatch& batch, const Eigen::MatrixXd& next_noise) const;
  void update(const ContinuousBatch& batch);

  double kappa() const { return std::exp(log_kappa_); }
  double target_entropy() const { return target_entropy_; }
  Network& actor() { return actor_; }

 private:
  void refresh_reference_value();

  AgentConfig config_;
  Space observation_space_;
  BoxSpace action_space_;
  ActionScaling scaling_;
  Network actor_;
  std::vector<Network> critics_;
  std::vector<ParamVector> critic_targets_;
  double log_kappa_;
  AdamState kappa_adam_;
  double target_entropy_;
  RewardRateEstimator estimator_;
  ReplayBuffer replay_;
  ContinuousReferenceSet reference_;
  Rng explore_rng_;
  Rng replay_rng_;
  Rng noise_rng_;
  long steps_ = 0;
};

// ---------------------------------------------------------------------------
// Discrete actions

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits);

/// Soft value of one next state:
/// sum_a pi(a) (min_j q_j(a) - kappa log pi(a)).
double sac_discrete_soft_value(const Eigen::VectorXd& probs, const Eigen::VectorXd& min_q, double kappa);

/// Gradient with respect to the logits of sum_a pi(a) (kappa log pi(a) - q(a)).
Eigen::VectorXd sac_discrete_logit_gradient(const Eigen::VectorXd& probs, const Eigen::VectorXd& q, double kappa);

class SacDiscreteAgent final : public Agent {
 public:
  SacDiscreteAgent(AgentConfig config, Space observation_space, int num_actions, std::uint64_t seed);

  Action act(const Observation& observation, ActMode mode) override;
  void observe(const Transition& transition) override;
  const RewardRateEstimator& estimator() const override { return estimator_; }

  Eigen::VectorXd td_targets(const DiscreteBatch& batch) const;
  void update(const DiscreteBatch& batch);

  Eigen::VectorXd policy(const Observation& observation) const;
  double kappa() const { return std::exp(log_kappa_); }

 private:
  AgentConfig config_;
  Space observation_space_;
  int num_actions_;
  Network actor_;
  std::vector<Network> critics_;
  std::vector<ParamVector> critic_targets_;
  double log_kappa_;
  AdamState kappa_adam_;
  double target_entropy_;
  RewardRateEstimator estimator_;
  ReplayBuffer replay_;
  ReferenceSet reference_;
  Rng explore_rng_;
  Rng replay_rng_;
  long steps_ = 0;
  long updates_ = 0;
};

}  // namespace crl
