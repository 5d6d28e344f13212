#include "crl/agent.hpp"

#include "crl/actor_critic.hpp"
#include "crl/dqn.hpp"
#include "crl/ppo.hpp"
#include "crl/sac.hpp"
#include "crl/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) {
    throw std::invalid_argument("replay capacity must be positive");
  }
}

void ReplayBuffer::push(Transition transition) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(transition));
  } else {
    data_[next_] = std::move(transition);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (data_.size() < n || data_.empty()) {
    throw std::logic_error("replay buffer holds fewer transitions than the batch size");
  }
  std::vector<std::size_t> indices(n);
  for (auto& index : indices) {
    index = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(data_.size()));
  }
  return indices;
}

void validate(const AgentConfig& c) {
  const auto require = [](bool ok, const std::string& message) {
    if (!ok) {
      throw std::invalid_argument(message);
    }
  };
  require(c.gamma >= 0.0 && c.gamma <= 1.0, "gamma must lie in [0, 1]");
  require(c.gamma < 1.0 || c.centering.mode != CenteringMode::off, "gamma = 1 requires reward centering");
  require(c.actor_lr > 0.0 && c.critic_lr > 0.0, "learning rates must be positive");
  require(c.batch_size > 0, "batch size must be positive");
  require(c.replay_capacity > 0, "replay capacity must be positive");
  require(c.warmup_steps >= 0 && c.learning_starts >= 0, "warmup lengths must be non-negative");
  require(c.train_every > 0, "train_every must be positive");
  require(!c.hidden.empty(), "at least one hidden layer is required");
  require(std::all_of(c.hidden.begin(), c.hidden.end(), [](int w) { return w > 0; }), "hidden widths must be positive");
  require(!c.grad_clip || *c.grad_clip > 0.0, "grad_clip must be positive");
  require(c.epsilon_start >= 0.0 && c.epsilon_start <= 1.0 && c.epsilon_end >= 0.0 && c.epsilon_end <= 1.0,
          "epsilon values must lie in [0, 1]");
  require(c.epsilon_decay_steps >= 0, "epsilon_decay_steps must be non-negative");
  require(c.target_update_every > 0, "target_update_every must be positive");
  require(c.tau >= 0.0 && c.tau <= 1.0, "tau must lie in [0, 1]");
  require(c.exploration_std >= 0.0, "exploration_std must be non-negative");
  require(!c.reset_exploration_std || *c.reset_exploration_std >= 0.0, "reset_exploration_std must be non-negative");
  require(c.target_noise_std >= 0.0 && c.target_noise_clip >= 0.0, "target noise parameters must be non-negative");
  require(c.policy_delay > 0, "policy_delay must be positive");
  require(c.autotune || c.entropy_coef > 0.0, "entropy_coef must be positive when autotune is off");
  require(c.round_length > 0 && c.epochs > 0 && c.minibatch_size > 0, "PPO round sizes must be positive");
  require(c.clip_range > 0.0 && c.clip_range < 1.0, "clip_range must lie in (0, 1)");
  require(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0, "gae_lambda must lie in [0, 1]");
  require(c.max_grad_norm > 0.0, "max_grad_norm must be positive");
  require(c.alpha > 0.0 && c.alpha_decay_steps >= 0.0, "tabular step size must be positive");
  require(c.eta >= 0.0, "eta must be non-negative");
  require(c.tabular_epsilon >= 0.0 && c.tabular_epsilon <= 1.0, "tabular epsilon must lie in [0, 1]");
  RewardRateEstimator{c.centering};
}

std::string to_string(RelativeQMode mode) {
  switch (mode) {
    case RelativeQMode::mean_all: return "mean_all";
    case RelativeQMode::max_all: return "max_all";
    case RelativeQMode::min_all: return "min_all";
    case RelativeQMode::reference_set: return "reference_set";
  }
  return "mean_all";
}

RelativeQMode relative_mode_from_string(const std::string& name) {
  if (name == "mean_all") return RelativeQMode::mean_all;
  if (name == "max_all") return RelativeQMode::max_all;
  if (name == "min_all") return RelativeQMode::min_all;
  if (name == "reference_set") return RelativeQMode::reference_set;
  throw std::invalid_argument("unknown relative Q-learning mode '" + name + "'");
}

Eigen::VectorXd encode_observation(const Observation& observation, const Space& space) {
  if (const auto* d = std::get_if<DiscreteSpace>(&space)) {
    const int index = static_cast<int>(observation.at(0));
    if (index < 0 || index >= d->n) {
      throw std::out_of_range("discrete observation out of range");
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(d->n);
    out(index) = 1.0;
    return out;
  }
  const auto& box = std::get<BoxSpace>(space);
  if (observation.size() != box.dims()) {
    throw std::invalid_argument("observation dimension does not match the space");
  }
  return Eigen::Map<const Eigen::VectorXd>(observation.data(), static_cast<Eigen::Index>(observation.size()));
}

Eigen::MatrixXd encode_batch(const std::vector<const Observation*>& observations, const Space& space) {
  Eigen::MatrixXd out(feature_size(space), static_cast<Eigen::Index>(observations.size()));
  for (std::size_t i = 0; i < observations.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = encode_observation(*observations[i], space);
  }
  return out;
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& values) {
  if (values.size() == 0) {
    throw std::invalid_argument("argmax of an empty vector");
  }
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values(i) > values(best)) {
      best = i;
    }
  }
  return static_cast<int>(best);
}

double linear_epsilon(long step, double start, double end, long decay_steps) {
  if (decay_steps <= 0 || step >= decay_steps) {
    return end;
  }
  return start + (end - start) * static_cast<double>(step) / static_cast<double>(decay_steps);
}

Action uniform_action(const Space& space, Rng& rng) {
  if (const auto* d = std::get_if<DiscreteSpace>(&space)) {
    return Action::discrete(std::min(d->n - 1, static_cast<int>(uniform01(rng) * d->n)));
  }
  const auto& box = std::get<BoxSpace>(space);
  std::vector<double> values(box.dims());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = box.low[i] + (box.high[i] - box.low[i]) * uniform01(rng);
  }
  return Action::box(std::move(values));
}

Action reset_biased_warmup_action(const BoxSpace& space, Rng& rng) {
  if (space.dims() == 0) {
    throw std::invalid_argument("reset-biased warmup needs a trailing reset dimension");
  }
  Action action = uniform_action(space, rng);
  std::uniform_int_distribution<int> pick(1, 1000);
  action.values.back() = 1.0 / static_cast<double>(pick(rng));
  return action;
}

ActionScaling::ActionScaling(const BoxSpace& box) {
  const auto dims = static_cast<Eigen::Index>(box.dims());
  scale.resize(dims);
  center.resize(dims);
  for (Eigen::Index d = 0; d < dims; ++d) {
    const auto i = static_cast<std::size_t>(d);
    if (!std::isfinite(box.low[i]) || !std::isfinite(box.high[i])) {
      throw std::invalid_argument("actor-critic agents need bounded action boxes");
    }
    scale(d) = 0.5 * (box.high[i] - box.low[i]);
    center(d) = 0.5 * (box.high[i] + box.low[i]);
  }
}

Eigen::VectorXd ActionScaling::clip(Eigen::VectorXd action) const {
  return action.cwiseMax(center - scale).cwiseMin(center + scale);
}

std::unique_ptr<Agent> make_agent(const AgentConfig& config, const Space& observation_space,
                                  const Space& action_space, std::uint64_t seed) {
  validate(config);
  const std::string& name = config.algorithm;
  if (name == "random") {
    return std::make_unique<RandomAgent>(action_space, seed);
  }
  const auto need_discrete_actions = [&] {
    if (!is_discrete(action_space)) {
      throw std::invalid_argument(name + " needs a discrete action space");
    }
    return std::get<DiscreteSpace>(action_space).n;
  };
  const auto need_box_actions = [&] {
    if (is_discrete(action_space)) {
      throw std::invalid_argument(name + " needs a box action space");
    }
    return std::get<BoxSpace>(action_space);
  };
  if (name == "td0" || name == "q_learning" || name == "relative_q") {
    if (!is_discrete(observation_space)) {
      throw std::invalid_argument(name + " needs a discrete observation space");
    }
    const int states = std::get<DiscreteSpace>(observation_space).n;
    const int actions = need_discrete_actions();
    if (name == "td0") {
      return std::make_unique<TabularTd0Agent>(config, states, actions, TabularPolicy::uniform(states, actions), seed);
    }
    if (name == "q_learning") {
      return std::make_unique<TabularQAgent>(config, states, actions, seed);
    }
    return std::make_unique<RelativeQAgent>(config, states, actions, seed);
  }
  if (name == "dqn") {
    return std::make_unique<DqnAgent>(config, observation_space, need_discrete_actions(), seed);
  }
  if (name == "sac_discrete") {
    return std::make_unique<SacDiscreteAgent>(config, observation_space, need_discrete_actions(), seed);
  }
  if (name == "ddpg" || name == "td3") {
    return std::make_unique<DdpgAgent>(config, observation_space, need_box_actions(), seed, name == "td3");
  }
  if (name == "sac") {
    return std::make_unique<SacAgent>(config, observation_space, need_box_actions(), seed);
  }
  if (name == "ppo") {
    return std::make_unique<PpoAgent>(config, observation_space, action_space, seed);
  }
  throw std::invalid_argument("unknown algorithm '" + name + "'");
}

}  // namespace crl
