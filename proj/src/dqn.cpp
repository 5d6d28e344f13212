#include "crl/dqn.hpp"

#include <stdexcept>

namespace crl {

DiscreteBatch make_discrete_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& indices,
                                  const Space& observation_space) {
  const int dims = feature_size(observation_space);
  const auto n = static_cast<Eigen::Index>(indices.size());
  DiscreteBatch batch;
  batch.states.resize(dims, n);
  batch.next_states.resize(dims, n);
  batch.rewards.resize(n);
  batch.actions.resize(indices.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = buffer[indices[static_cast<std::size_t>(i)]];
    batch.states.col(i) = encode_observation(t.state, observation_space);
    batch.next_states.col(i) = encode_observation(t.next_state, observation_space);
    batch.rewards(i) = t.reward;
    batch.actions[static_cast<std::size_t>(i)] = t.action.index;
  }
  return batch;
}

DqnGradient dqn_semi_gradient(const MlpSpec& spec, const ParamVector& online, const ParamVector& target,
                              const DiscreteBatch& batch, double gamma, const RewardRateEstimator& estimator) {
  const Eigen::Index n = batch.states.cols();
  if (n == 0) {
    throw std::invalid_argument("empty DQN batch");
  }
  const Eigen::MatrixXd next_q = mlp_forward_batch(spec, target, batch.next_states);
  MlpTape tape;
  const Eigen::MatrixXd q = mlp_forward_batch(spec, online, batch.states, &tape);

  DqnGradient result;
  result.deltas.resize(n);
  Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(q.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = batch.actions[static_cast<std::size_t>(i)];
    const double target_value = estimator.centered_reward(batch.rewards(i)) + gamma * next_q.col(i).maxCoeff();
    const double delta = target_value - q(a, i);
    result.deltas(i) = delta;
    seed(a, i) = -delta / static_cast<double>(n);
  }
  if (!result.deltas.allFinite()) {
    throw NumericalError("non-finite DQN TD error");
  }
  result.loss_gradient = mlp_backward(spec, online, tape, seed).params;
  return result;
}

ReferenceSet sample_reference_set(const ReplayBuffer& buffer, std::size_t size, const Space& observation_space,
                                  Rng& rng) {
  if (buffer.size() == 0) {
    throw std::logic_error("cannot sample a reference set from an empty replay buffer");
  }
  ReferenceSet set;
  set.states.resize(feature_size(observation_space), static_cast<Eigen::Index>(size));
  for (std::size_t i = 0; i < size; ++i) {
    const auto index = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(buffer.size()));
    set.states.col(static_cast<Eigen::Index>(i)) = encode_observation(buffer[index].state, observation_space);
    set.actions.push_back(buffer[index].action.index);
  }
  return set;
}

DqnAgent::DqnAgent(AgentConfig config, Space observation_space, int num_actions, std::uint64_t seed)
    : config_(std::move(config)),
      observation_space_(std::move(observation_space)),
      num_actions_(num_actions),
      estimator_(config_.centering),
      replay_(static_cast<std::size_t>(config_.replay_capacity)),
      explore_rng_(child_stream(seed, "explore")),
      replay_rng_(child_stream(seed, "replay")) {
  validate(config_);
  Rng init_rng = child_stream(seed, "init");
  std::vector<int> widths{feature_size(observation_space_)};
  widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
  widths.push_back(num_actions_);
  critic_ = Network(MlpSpec{widths, config_.activation}, init_rng, config_.critic_lr);
  target_ = critic_.params;
}

double DqnAgent::epsilon() const {
  return linear_epsilon(steps_, config_.epsilon_start, config_.epsilon_end, config_.epsilon_decay_steps);
}

Eigen::VectorXd DqnAgent::q_values(const Observation& observation) const {
  return critic_.forward(encode_observation(observation, observation_space_));
}

Action DqnAgent::act(const Observation& observation, ActMode mode) {
  const auto random_action = [&] {
    return Action::discrete(static_cast<int>(uniform01(explore_rng_) * num_actions_));
  };
  switch (mode) {
    case ActMode::warmup: return random_action();
    case ActMode::explore:
      if (uniform01(explore_rng_) < epsilon()) {
        return random_action();
      }
      return Action::discrete(argmax(q_values(observation)));
    case ActMode::greedy: return Action::discrete(argmax(q_values(observation)));
  }
  return Action::discrete(0);
}

void DqnAgent::observe(const Transition& transition) {
  ++steps_;
  if (estimator_.mode() == CenteringMode::moving_average) {
    estimator_.moving_average_update(transition.reward);
  }
  replay_.push(transition);
  if (steps_ >= config_.learning_starts && steps_ % config_.train_every == 0 &&
      replay_.size() >= static_cast<std::size_t>(config_.batch_size)) {
    const auto indices = replay_.sample_indices(static_cast<std::size_t>(config_.batch_size), replay_rng_);
    update(make_discrete_batch(replay_, indices, observation_space_));
  }
  if (steps_ % config_.target_update_every == 0) {
    target_sync(target_, critic_.params, TargetSync::hard());
  }
}

void DqnAgent::update(const DiscreteBatch& batch) {
  if (estimator_.mode() == CenteringMode::reference_states) {
    if (reference_.empty()) {
      reference_ = sample_reference_set(replay_, static_cast<std::size_t>(config_.batch_size), observation_space_,
                                        replay_rng_);
    }
    const Eigen::MatrixXd q = critic_.forward(reference_.states);
    std::vector<double> values(reference_.actions.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = q(reference_.actions[i], static_cast<Eigen::Index>(i));
    }
    estimator_.set_reference_value(reference_state_value(values));
  }
  DqnGradient grad = dqn_semi_gradient(critic_.spec, critic_.params, target_, batch, config_.gamma, estimator_);
  adam_step(critic_.adam, critic_.params, std::move(grad.loss_gradient), config_.grad_clip);
  if (estimator_.mode() == CenteringMode::td_based) {
    estimator_.td_based_update(grad.deltas);
  }
  ++updates_;
}

}  // namespace crl
