#pragma once

#include "crl/agent.hpp"

namespace crl {

/// A replay minibatch with observations encoded one sample per column.
struct DiscreteBatch {
  Eigen::MatrixXd states;
  std::vector<int> actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;
};

DiscreteBatch make_discrete_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& indices,
                                  const Space& observation_space);

struct DqnGradient {
  /// Gradient of (1/2n) sum_i delta_i^2 with the targets held fixed, i.e.
  /// -(1/n) sum_i delta_i grad q(s_i, a_i).
  ParamVector loss_gradient;
  /// delta_i = (r_i - rbar) + gamma max_a q_target(s'_i, a) - q(s_i, a_i).
  TDErrorBatch deltas;
};

DqnGradient dqn_semi_gradient(const MlpSpec& spec, const ParamVector& online, const ParamVector& target,
                              const DiscreteBatch& batch, double gamma, const RewardRateEstimator& estimator);

/// Fixed reference (state, action) pairs for reference-state centering.
struct ReferenceSet {
  Eigen::MatrixXd states;
  std::vector<int> actions;

  bool empty() const { return actions.empty(); }
};

/// Draws |I| = batch_size pairs from the replay buffer, with replacement.
ReferenceSet sample_reference_set(const ReplayBuffer& buffer, std::size_t size, const Space& observation_space,
                                  Rng& rng);

class DqnAgent final : public Agent {
 public:
  DqnAgent(AgentConfig config, Space observation_space, int num_actions, std::uint64_t seed);

  Action act(const Observation& observation, ActMode mode) override;
  void observe(const Transition& transition) override;
  const RewardRateEstimator& estimator() const override { return estimator_; }

  /// One learning step on a batch: centered TD errors, Adam step, then the
  /// r-bar update from the same errors.
  void update(const DiscreteBatch& batch);

  Eigen::VectorXd q_values(const Observation& observation) const;
  const Network& critic() const { return critic_; }
  const ParamVector& target_params() const { return target_; }
  double epsilon() const;
  long steps() const { return steps_; }
  long updates() const { return updates_; }

 private:
  AgentConfig config_;
  Space observation_space_;
  int num_actions_;
  Network critic_;
  ParamVector target_;
  RewardRateEstimator estimator_;
  ReplayBuffer replay_;
  ReferenceSet reference_;
  Rng explore_rng_;
  Rng replay_rng_;
  long steps_ = 0;
  long updates_ = 0;
};

}  // namespace crl
