#include "crl/wrappers.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crl {

FailurePredicate failure_states(std::vector<int> states) {
  return [states = std::move(states)](const Observation& obs) {
    const int s = static_cast<int>(obs.at(0));
    return std::find(states.begin(), states.end(), s) != states.end();
  };
}

EnvironmentWrapper::EnvironmentWrapper(std::unique_ptr<Environment> inner) : inner_(std::move(inner)) {
  if (!inner_) {
    throw std::invalid_argument("wrapper needs an inner environment");
  }
}

RandomResetWrapper::RandomResetWrapper(std::unique_ptr<Environment> inner, double probability, Rng reset_rng)
    : EnvironmentWrapper(std::move(inner)), probability_(probability), rng_(std::move(reset_rng)) {
  if (!(probability_ >= 0.0 && probability_ <= 1.0)) {
    throw std::invalid_argument("reset probability must lie in [0, 1]");
  }
}

EnvStep RandomResetWrapper::step(const Action& action) {
  EnvStep result = inner_->step(action);
  if (uniform01(rng_) < probability_) {
    result.observation = inner_->reset(rng_);
    result.reset_occurred = true;
  }
  return result;
}

ResetAsTransitionWrapper::ResetAsTransitionWrapper(std::unique_ptr<Environment> inner, FailurePredicate failure,
                                                   ResetConfig config, Rng reset_rng)
    : EnvironmentWrapper(std::move(inner)),
      failure_(std::move(failure)),
      config_(config),
      rng_(std::move(reset_rng)) {
  if (!(config_.reset_cost >= 0.0) || !std::isfinite(config_.reset_cost)) {
    throw std::invalid_argument("reset cost must be finite and non-negative");
  }
  if (!failure_) {
    throw std::invalid_argument("reset-as-transition needs a failure predicate");
  }
}

EnvStep ResetAsTransitionWrapper::step(const Action& action) {
  EnvStep result = inner_->step(action);
  if (failure_(result.observation)) {
    result.observation = inner_->reset(rng_);
    result.reward -= config_.reset_cost;
    result.reset_occurred = true;
  }
  return result;
}

AgentControlledResetWrapper::AgentControlledResetWrapper(std::unique_ptr<Environment> inner, ResetConfig config,
                                                         Rng reset_rng)
    : EnvironmentWrapper(std::move(inner)), config_(config), rng_(std::move(reset_rng)) {
  if (is_discrete(inner_->action_space())) {
    throw std::invalid_argument("agent-controlled resets need a box action space");
  }
  if (!std::isfinite(config_.reset_cost)) {
    throw std::invalid_argument("reset cost must be finite");
  }
}

Space AgentControlledResetWrapper::action_space() const {
  auto box = std::get<BoxSpace>(inner_->action_space());
  box.low.push_back(0.0);
  box.high.push_back(1.0);
  return box;
}

EnvStep AgentControlledResetWrapper::step(const Action& action) {
  const auto base_dims = std::get<BoxSpace>(inner_->action_space()).dims();
  if (action.values.size() != base_dims + 1) {
    throw std::invalid_argument("agent-controlled reset expects one trailing reset dimension");
  }
  double reset_probability = action.values.back();
  if (!(reset_probability >= 0.0 && reset_probability <= 1.0)) {
    if (clipped_++ == 0) {
      spdlog::warn("reset probability {} outside [0, 1] clipped (further clips counted silently)",
                   reset_probability);
    }
    reset_probability = std::isnan(reset_probability) ? 0.0 : std::clamp(reset_probability, 0.0, 1.0);
  }
  if (uniform01(rng_) < reset_probability) {
    EnvStep result;
    result.observation = inner_->reset(rng_);
    result.reward = -config_.reset_cost;
    result.reset_occurred = true;
    return result;
  }
  Action base = action;
  base.values.pop_back();
  return inner_->step(base);
}

RewardOffsetWrapper::RewardOffsetWrapper(std::unique_ptr<Environment> inner, double offset)
    : EnvironmentWrapper(std::move(inner)), offset_(offset) {
  if (!std::isfinite(offset_)) {
    throw std::invalid_argument("reward offset must be finite");
  }
}

EnvStep RewardOffsetWrapper::step(const Action& action) {
  EnvStep result = inner_->step(action);
  result.reward += offset_;
  return result;
}

Observation angle_wrap(Observation observation, const std::vector<int>& angle_indices, bool centered) {
  const double two_pi = 2.0 * std::numbers::pi;
  for (int index : angle_indices) {
    if (index < 0 || static_cast<std::size_t>(index) >= observation.size()) {
      throw std::out_of_range("angle index out of range");
    }
    double& x = observation[static_cast<std::size_t>(index)];
    double m = std::fmod(centered ? x + std::numbers::pi : x, two_pi);
    if (m < 0.0) {
      m += two_pi;
    }
    if (m >= two_pi) {
      m = 0.0;
    }
    x = m - std::numbers::pi;
  }
  return observation;
}

AngleWrapWrapper::AngleWrapWrapper(std::unique_ptr<Environment> inner, std::vector<int> angle_indices,
                                   bool centered)
    : EnvironmentWrapper(std::move(inner)), indices_(std::move(angle_indices)), centered_(centered) {
  const auto space = inner_->observation_space();
  if (is_discrete(space)) {
    throw std::invalid_argument("angle wrapping needs a box observation space");
  }
  const int dims = space_size(space);
  for (int index : indices_) {
    if (index < 0 || index >= dims) {
      throw std::out_of_range("angle index out of range");
    }
  }
}

Space AngleWrapWrapper::observation_space() const {
  auto box = std::get<BoxSpace>(inner_->observation_space());
  for (int index : indices_) {
    box.low[static_cast<std::size_t>(index)] = -std::numbers::pi;
    box.high[static_cast<std::size_t>(index)] = std::numbers::pi;
  }
  return box;
}

Observation AngleWrapWrapper::reset(Rng& rng) { return angle_wrap(inner_->reset(rng), indices_, centered_); }

EnvStep AngleWrapWrapper::step(const Action& action) {
  EnvStep result = inner_->step(action);
  result.observation = angle_wrap(std::move(result.observation), indices_, centered_);
  return result;
}

Observation AngleWrapWrapper::observation() const { return angle_wrap(inner_->observation(), indices_, centered_); }

}  // namespace crl
