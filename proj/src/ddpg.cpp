#include "crl/actor_critic.hpp"

#include <algorithm>
#include <stdexcept>

namespace crl {

ContinuousBatch make_continuous_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& indices,
                                      const Space& observation_space) {
  const int dims = feature_size(observation_space);
  const auto n = static_cast<Eigen::Index>(indices.size());
  if (n == 0) {
    throw std::invalid_argument("empty batch");
  }
  const auto action_dims = static_cast<Eigen::Index>(buffer[indices.front()].action.values.size());
  ContinuousBatch batch;
  batch.states.resize(dims, n);
  batch.next_states.resize(dims, n);
  batch.actions.resize(action_dims, n);
  batch.rewards.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = buffer[indices[static_cast<std::size_t>(i)]];
    batch.states.col(i) = encode_observation(t.state, observation_space);
    batch.next_states.col(i) = encode_observation(t.next_state, observation_space);
    batch.actions.col(i) = Eigen::Map<const Eigen::VectorXd>(t.action.values.data(), action_dims);
    batch.rewards(i) = t.reward;
  }
  return batch;
}

Eigen::MatrixXd critic_input(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
  if (states.cols() != actions.cols()) {
    throw std::invalid_argument("state and action batches differ in size");
  }
  Eigen::MatrixXd input(states.rows() + actions.rows(), states.cols());
  input.topRows(states.rows()) = states;
  input.bottomRows(actions.rows()) = actions;
  return input;
}

CriticGradient q_critic_gradient(const Network& critic, const Eigen::MatrixXd& inputs,
                                 const Eigen::VectorXd& targets) {
  MlpTape tape;
  const Eigen::MatrixXd q = critic.forward(inputs, &tape);
  CriticGradient result;
  result.deltas = targets - q.row(0).transpose();
  if (!result.deltas.allFinite()) {
    throw NumericalError("non-finite critic TD error");
  }
  const Eigen::MatrixXd seed = -result.deltas.transpose() / static_cast<double>(inputs.cols());
  result.loss_gradient = mlp_backward(critic.spec, critic.params, tape, seed).params;
  return result;
}

Eigen::MatrixXd critic_action_gradient(const Network& critic, const Eigen::MatrixXd& states,
                                       const Eigen::MatrixXd& actions) {
  MlpTape tape;
  critic.forward(critic_input(states, actions), &tape);
  const Eigen::MatrixXd seed = Eigen::MatrixXd::Ones(1, states.cols());
  const MlpGradient grad = mlp_backward(critic.spec, critic.params, tape, seed);
  return grad.inputs.bottomRows(actions.rows());
}

Eigen::MatrixXd deterministic_actions(const Network& actor, const ActionScaling& scaling,
                                      const Eigen::MatrixXd& states, MlpTape* tape, Eigen::MatrixXd* squashed) {
  const Eigen::MatrixXd t = actor.forward(states, tape).array().tanh().matrix();
  Eigen::MatrixXd actions = (t.array().colwise() * scaling.scale.array()).matrix();
  actions.colwise() += scaling.center;
  if (squashed) {
    *squashed = t;
  }
  return actions;
}

ParamVector deterministic_policy_loss_gradient(
    const Network& actor, const ActionScaling& scaling, const Eigen::MatrixXd& states,
    const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& action_gradient) {
  MlpTape tape;
  Eigen::MatrixXd squashed;
  const Eigen::MatrixXd actions = deterministic_actions(actor, scaling, states, &tape, &squashed);
  const Eigen::MatrixXd dq_da = action_gradient(actions);
  const double n = static_cast<double>(states.cols());
  Eigen::MatrixXd seed = (-dq_da.array() / n).matrix();
  seed.array() *= (1.0 - squashed.array().square()).colwise() * scaling.scale.array();
  return mlp_backward(actor.spec, actor.params, tape, seed).params;
}

ContinuousReferenceSet sample_continuous_reference_set(const ReplayBuffer& buffer, std::size_t size,
                                                       const Space& observation_space, Rng& rng) {
  if (buffer.size() == 0) {
    throw std::logic_error("cannot sample a reference set from an empty replay buffer");
  }
  std::vector<std::size_t> indices(size);
  for (auto& index : indices) {
    index = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(buffer.size()));
  }
  const ContinuousBatch batch = make_continuous_batch(buffer, indices, observation_space);
  return {critic_input(batch.states, batch.actions)};
}

double clipped_target_noise(double raw_noise, double clip) { return std::clamp(raw_noise, -clip, clip); }

// ---------------------------------------------------------------------------

DdpgAgent::DdpgAgent(AgentConfig config, Space observation_space, BoxSpace action_space, std::uint64_t seed,
                     bool twin_delayed)
    : config_(std::move(config)),
      observation_space_(std::move(observation_space)),
      action_space_(std::move(action_space)),
      scaling_(action_space_),
      twin_delayed_(twin_delayed),
      estimator_(config_.centering),
      replay_(static_cast<std::size_t>(config_.replay_capacity)),
      explore_rng_(child_stream(seed, "explore")),
      replay_rng_(child_stream(seed, "replay")),
      noise_rng_(child_stream(seed, "target_noise")) {
  validate(config_);
  Rng init_rng = child_stream(seed, "init");
  const int obs_dims = feature_size(observation_space_);
  const int act_dims = static_cast<int>(action_space_.dims());

  std::vector<int> actor_widths{obs_dims};
  actor_widths.insert(actor_widths.end(), config_.hidden.begin(), config_.hidden.end());
  actor_widths.push_back(act_dims);
  actor_ = Network(MlpSpec{actor_widths, config_.activation}, init_rng, config_.actor_lr);
  actor_target_ = actor_.params;

  std::vector<int> critic_widths{obs_dims + act_dims};
  critic_widths.insert(critic_widths.end(), config_.hidden.begin(), config_.hidden.end());
  critic_widths.push_back(1);
  const int num_critics = twin_delayed_ ? 2 : 1;
  for (int j = 0; j < num_critics; ++j) {
    critics_.emplace_back(MlpSpec{critic_widths, config_.activation}, init_rng, config_.critic_lr);
    critic_targets_.push_back(critics_.back().params);
  }

  noise_std_ = Eigen::VectorXd::Constant(act_dims, config_.exploration_std);
  if (config_.agent_controlled_reset && config_.reset_exploration_std) {
    noise_std_(act_dims - 1) = *config_.reset_exploration_std;
  }
}

Action DdpgAgent::act(const Observation& observation, ActMode mode) {
  if (mode == ActMode::warmup) {
    return config_.agent_controlled_reset ? reset_biased_warmup_action(action_space_, explore_rng_)
                                          : uniform_action(action_space_, explore_rng_);
  }
  Eigen::VectorXd action =
      deterministic_actions(actor_, scaling_, encode_observation(observation, observation_space_));
  if (mode == ActMode::explore) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index d = 0; d < action.size(); ++d) {
      action(d) += noise_std_(d) * scaling_.scale(d) * normal(explore_rng_);
    }
    action = scaling_.clip(std::move(action));
  }
  return Action::box(std::vector<double>(action.data(), action.data() + action.size()));
}

void DdpgAgent::observe(const Transition& transition) {
  ++steps_;
  if (estimator_.mode() == CenteringMode::moving_average) {
    estimator_.moving_average_update(transition.reward);
  }
  replay_.push(transition);
  if (steps_ >= config_.learning_starts && steps_ % config_.train_every == 0 &&
      replay_.size() >= static_cast<std::size_t>(config_.batch_size)) {
    const auto indices = replay_.sample_indices(static_cast<std::size_t>(config_.batch_size), replay_rng_);
    update(make_continuous_batch(replay_, indices, observation_space_));
  }
}

Eigen::VectorXd DdpgAgent::td_targets(const ContinuousBatch& batch, Rng& noise_rng) const {
  Network target_actor = actor_;
  target_actor.params = actor_target_;
  Eigen::MatrixXd next_actions = deterministic_actions(target_actor, scaling_, batch.next_states);
  if (twin_delayed_) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < next_actions.cols(); ++i) {
      for (Eigen::Index d = 0; d < next_actions.rows(); ++d) {
        const double noise = clipped_target_noise(config_.target_noise_std * normal(noise_rng), config_.target_noise_clip);
        next_actions(d, i) += noise * scaling_.scale(d);
      }
      next_actions.col(i) = scaling_.clip(next_actions.col(i));
    }
  }
  const Eigen::MatrixXd inputs = critic_input(batch.next_states, next_actions);
  Eigen::VectorXd next_q = mlp_forward_batch(critics_[0].spec, critic_targets_[0], inputs).row(0).transpose();
  for (std::size_t j = 1; j < critics_.size(); ++j) {
    next_q = next_q.cwiseMin(
        Eigen::VectorXd(mlp_forward_batch(critics_[j].spec, critic_targets_[j], inputs).row(0).transpose()));
  }
  Eigen::VectorXd targets(batch.rewards.size());
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    targets(i) = estimator_.centered_reward(batch.rewards(i)) + config_.gamma * next_q(i);
  }
  return targets;
}

void DdpgAgent::refresh_reference_value() {
  if (reference_.empty()) {
    reference_ = sample_continuous_reference_set(replay_, static_cast<std::size_t>(config_.batch_size),
                                                 observation_space_, replay_rng_);
  }
  std::vector<std::vector<double>> values;
  for (const auto& critic : critics_) {
    const Eigen::MatrixXd q = critic.forward(reference_.inputs);
    values.emplace_back(q.data(), q.data() + q.size());
  }
  estimator_.set_reference_value(values.size() == 2 ? reference_state_value(values[0], values[1])
                                                    : reference_state_value(values[0]));
}

void DdpgAgent::update(const ContinuousBatch& batch) {
  if (estimator_.mode() == CenteringMode::reference_states) {
    refresh_reference_value();
  }
  const Eigen::VectorXd targets = td_targets(batch, noise_rng_);
  const Eigen::MatrixXd inputs = critic_input(batch.states, batch.actions);
  TDErrorBatch deltas = TDErrorBatch::Zero(targets.size());
  for (auto& critic : critics_) {
    CriticGradient grad = q_critic_gradient(critic, inputs, targets);
    adam_step(critic.adam, critic.params, std::move(grad.loss_gradient), config_.grad_clip);
    deltas += grad.deltas;
  }
  deltas /= static_cast<double>(critics_.size());
  if (estimator_.mode() == CenteringMode::td_based) {
    estimator_.td_based_update(deltas);
  }
  ++critic_updates_;

  const bool actor_turn = !twin_delayed_ || critic_updates_ % config_.policy_delay == 0;
  if (!actor_turn) {
    return;
  }
  const Network& critic = critics_[0];
  ParamVector actor_grad = deterministic_policy_loss_gradient(
      actor_, scaling_, batch.states,
      [&](const Eigen::MatrixXd& actions) { return critic_action_gradient(critic, batch.states, actions); });
  adam_step(actor_.adam, actor_.params, std::move(actor_grad), config_.grad_clip);
  ++actor_updates_;

  const auto polyak = TargetSync::polyak(config_.tau);
  target_sync(actor_target_, actor_.params, polyak);
  for (std::size_t j = 0; j < critics_.size(); ++j) {
    target_sync(critic_targets_[j], critics_[j].params, polyak);
  }
}

}  // namespace crl
