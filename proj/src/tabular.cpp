#include "crl/tabular.hpp"

#include <cmath>
#include <stdexcept>

namespace crl {

namespace {

void check_states(const TabularTransition& t, Eigen::Index num_states) {
  if (t.state < 0 || t.state >= num_states || t.next_state < 0 || t.next_state >= num_states) {
    throw std::out_of_range("tabular state index out of range");
  }
}

void check_indices(const TabularTransition& t, Eigen::Index num_states, Eigen::Index num_actions) {
  check_states(t, num_states);
  if (t.action < 0 || t.action >= num_actions) {
    throw std::out_of_range("tabular action index out of range");
  }
}

TabularTransition to_tabular(const Transition& t) {
  return {static_cast<int>(t.state.at(0)), t.action.index, t.reward, static_cast<int>(t.next_state.at(0))};
}

void td_centering_step(RewardRateEstimator& estimator, double delta, double eta, double alpha) {
  if (estimator.mode() == CenteringMode::td_based) {
    estimator.td_based_update(TDErrorBatch::Constant(1, delta), eta * alpha);
  }
}

int epsilon_greedy_row(const Eigen::MatrixXd& q, int state, double epsilon, Rng& rng) {
  if (uniform01(rng) < epsilon) {
    return static_cast<int>(uniform01(rng) * static_cast<double>(q.cols()));
  }
  return argmax(q.row(state).transpose());
}

}  // namespace

double scheduled_step_size(double alpha, double decay_steps, long updates) {
  if (decay_steps <= 0.0) {
    return alpha;
  }
  return alpha / (1.0 + static_cast<double>(updates) / decay_steps);
}

double tabular_td0_update(Eigen::VectorXd& values, const TabularTransition& t, double alpha, double gamma,
                          RewardRateEstimator& estimator, double eta) {
  check_states(t, values.size());
  const double delta = estimator.centered_reward(t.reward) + gamma * values(t.next_state) - values(t.state);
  values(t.state) += alpha * delta;
  td_centering_step(estimator, delta, eta, alpha);
  return delta;
}

double tabular_q_update(Eigen::MatrixXd& q, const TabularTransition& t, double alpha, double gamma,
                        RewardRateEstimator& estimator, double eta) {
  check_indices(t, q.rows(), q.cols());
  const double delta =
      estimator.centered_reward(t.reward) + gamma * q.row(t.next_state).maxCoeff() - q(t.state, t.action);
  q(t.state, t.action) += alpha * delta;
  td_centering_step(estimator, delta, eta, alpha);
  return delta;
}

double relative_q_offset(const Eigen::MatrixXd& q, RelativeQMode mode,
                         const std::vector<std::pair<int, int>>& reference_pairs) {
  switch (mode) {
    case RelativeQMode::mean_all: return q.mean();
    case RelativeQMode::max_all: return q.maxCoeff();
    case RelativeQMode::min_all: return q.minCoeff();
    case RelativeQMode::reference_set: {
      if (reference_pairs.empty()) {
        throw std::invalid_argument("relative Q-learning reference set is empty");
      }
      double sum = 0.0;
      for (const auto& [s, a] : reference_pairs) {
        sum += q(s, a);
      }
      return sum / static_cast<double>(reference_pairs.size());
    }
  }
  return 0.0;
}

double relative_q_update(Eigen::MatrixXd& q, const TabularTransition& t, double alpha, double gamma,
                         RelativeQMode mode, const std::vector<std::pair<int, int>>& reference_pairs) {
  check_indices(t, q.rows(), q.cols());
  const double offset = relative_q_offset(q, mode, reference_pairs);
  const double delta = t.reward - offset + gamma * q.row(t.next_state).maxCoeff() - q(t.state, t.action);
  q(t.state, t.action) += alpha * delta;
  return delta;
}

// ---------------------------------------------------------------------------

TabularTd0Agent::TabularTd0Agent(AgentConfig config, int num_states, int num_actions, TabularPolicy policy,
                                 std::uint64_t seed)
    : config_(std::move(config)),
      policy_(std::move(policy)),
      values_(Eigen::VectorXd::Zero(num_states)),
      estimator_(config_.centering),
      explore_rng_(child_stream(seed, "explore")) {
  if (policy_.probs.rows() != num_states || policy_.probs.cols() != num_actions) {
    throw std::invalid_argument("TD(0) policy shape does not match the environment");
  }
  if (estimator_.mode() == CenteringMode::reference_states) {
    throw std::invalid_argument("TD(0) supports off, td_based and moving_average centering");
  }
}

Action TabularTd0Agent::act(const Observation& observation, ActMode) {
  const int s = static_cast<int>(observation.at(0));
  return Action::discrete(sample_index(policy_.probs.row(s).transpose(), explore_rng_));
}

void TabularTd0Agent::observe(const Transition& transition) {
  if (estimator_.mode() == CenteringMode::moving_average) {
    estimator_.moving_average_update(transition.reward);
  }
  const double alpha = scheduled_step_size(config_.alpha, config_.alpha_decay_steps, updates_++);
  tabular_td0_update(values_, to_tabular(transition), alpha, config_.gamma, estimator_, config_.eta);
}

TabularQAgent::TabularQAgent(AgentConfig config, int num_states, int num_actions, std::uint64_t seed)
    : config_(std::move(config)),
      q_(Eigen::MatrixXd::Zero(num_states, num_actions)),
      estimator_(config_.centering),
      explore_rng_(child_stream(seed, "explore")) {
  if (estimator_.mode() == CenteringMode::reference_states) {
    throw std::invalid_argument("use the relative_q algorithm for reference-based tabular centering");
  }
}

Action TabularQAgent::act(const Observation& observation, ActMode mode) {
  const int s = static_cast<int>(observation.at(0));
  switch (mode) {
    case ActMode::warmup: return Action::discrete(epsilon_greedy_row(q_, s, 1.0, explore_rng_));
    case ActMode::explore: return Action::discrete(epsilon_greedy_row(q_, s, config_.tabular_epsilon, explore_rng_));
    case ActMode::greedy: return Action::discrete(argmax(q_.row(s).transpose()));
  }
  return Action::discrete(0);
}

void TabularQAgent::observe(const Transition& transition) {
  if (estimator_.mode() == CenteringMode::moving_average) {
    estimator_.moving_average_update(transition.reward);
  }
  const double alpha = scheduled_step_size(config_.alpha, config_.alpha_decay_steps, updates_++);
  tabular_q_update(q_, to_tabular(transition), alpha, config_.gamma, estimator_, config_.eta);
}

RelativeQAgent::RelativeQAgent(AgentConfig config, int num_states, int num_actions, std::uint64_t seed)
    : config_(std::move(config)),
      q_(Eigen::MatrixXd::Zero(num_states, num_actions)),
      estimator_(CenteringConfig{CenteringMode::reference_states, 0.0, 0.0}),
      explore_rng_(child_stream(seed, "explore")) {
  if (config_.relative_mode == RelativeQMode::reference_set) {
    if (config_.reference_pairs.empty()) {
      throw std::invalid_argument("relative Q-learning reference set is empty");
    }
    for (const auto& [s, a] : config_.reference_pairs) {
      if (s < 0 || s >= num_states || a < 0 || a >= num_actions) {
        throw std::out_of_range("relative Q-learning reference pair out of range");
      }
    }
  }
}

Action RelativeQAgent::act(const Observation& observation, ActMode mode) {
  const int s = static_cast<int>(observation.at(0));
  switch (mode) {
    case ActMode::warmup: return Action::discrete(epsilon_greedy_row(q_, s, 1.0, explore_rng_));
    case ActMode::explore: return Action::discrete(epsilon_greedy_row(q_, s, config_.tabular_epsilon, explore_rng_));
    case ActMode::greedy: return Action::discrete(argmax(q_.row(s).transpose()));
  }
  return Action::discrete(0);
}

void RelativeQAgent::observe(const Transition& transition) {
  const double alpha = scheduled_step_size(config_.alpha, config_.alpha_decay_steps, updates_++);
  relative_q_update(q_, to_tabular(transition), alpha, config_.gamma, config_.relative_mode,
                    config_.reference_pairs);
  estimator_.set_reference_value(relative_q_offset(q_, config_.relative_mode, config_.reference_pairs));
}

RandomAgent::RandomAgent(const Space& action_space, std::uint64_t seed)
    : action_space_(action_space), rng_(child_stream(seed, "explore")) {}

Action RandomAgent::act(const Observation&, ActMode) { return uniform_action(action_space_, rng_); }

}  // namespace crl
