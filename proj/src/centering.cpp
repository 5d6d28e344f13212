#include "crl/centering.hpp"

#include <cmath>
#include <stdexcept>

namespace crl {

CenteringMode centering_mode_from_string(const std::string& name) {
  if (name == "off") return CenteringMode::off;
  if (name == "td_based") return CenteringMode::td_based;
  if (name == "moving_average") return CenteringMode::moving_average;
  if (name == "reference_states") return CenteringMode::reference_states;
  throw std::invalid_argument("unknown centering mode '" + name +
                              "' (expected off, td_based, moving_average or reference_states)");
}

std::string to_string(CenteringMode mode) {
  switch (mode) {
    case CenteringMode::off: return "off";
    case CenteringMode::td_based: return "td_based";
    case CenteringMode::moving_average: return "moving_average";
    case CenteringMode::reference_states: return "reference_states";
  }
  return "off";
}

RewardRateEstimator::RewardRateEstimator(CenteringConfig config) : config_(config) {
  if (!std::isfinite(config_.initial_rbar)) {
    throw std::invalid_argument("initial r-bar must be finite");
  }
  if (config_.mode == CenteringMode::td_based && !(config_.beta > 0.0)) {
    throw std::invalid_argument("td_based centering needs beta > 0");
  }
  if (config_.mode == CenteringMode::moving_average && !(config_.beta >= 0.0 && config_.beta <= 1.0)) {
    throw std::invalid_argument("moving_average centering needs beta in [0, 1]");
  }
}

double RewardRateEstimator::value() const {
  switch (config_.mode) {
    case CenteringMode::off: return 0.0;
    case CenteringMode::reference_states: return drift_;
    default: return config_.initial_rbar + drift_;
  }
}

double RewardRateEstimator::centered_reward(double reward) const {
  switch (config_.mode) {
    case CenteringMode::off: return reward;
    case CenteringMode::reference_states: return reward - drift_;
    default: return (reward - config_.initial_rbar) - drift_;
  }
}

TDErrorBatch RewardRateEstimator::center_batch(const TDErrorBatch& raw_deltas) const {
  return raw_deltas.array() - value();
}

void RewardRateEstimator::require(CenteringMode mode, const char* op) const {
  if (config_.mode != mode) {
    throw std::logic_error(std::string(op) + " called on an estimator in mode " + to_string(config_.mode));
  }
}

void RewardRateEstimator::td_based_update(const TDErrorBatch& centered_deltas) {
  td_based_update(centered_deltas, config_.beta);
}

void RewardRateEstimator::td_based_update(const TDErrorBatch& centered_deltas, double step_size) {
  require(CenteringMode::td_based, "td_based_update");
  if (centered_deltas.size() == 0) {
    return;
  }
  drift_ += step_size * centered_deltas.mean();
  if (!std::isfinite(drift_)) {
    throw std::runtime_error("reward-rate estimate became non-finite");
  }
}

void RewardRateEstimator::moving_average_update(double reward) {
  require(CenteringMode::moving_average, "moving_average_update");
  const double rbar = config_.beta * value() + (1.0 - config_.beta) * reward;
  drift_ = rbar - config_.initial_rbar;
}

void RewardRateEstimator::set_reference_value(double value) {
  require(CenteringMode::reference_states, "set_reference_value");
  drift_ = value;
}

double reference_state_value(std::span<const double> values) {
  if (values.empty()) {
    throw std::invalid_argument("reference set is empty");
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  return sum / static_cast<double>(values.size());
}

double reference_state_value(std::span<const double> values_1, std::span<const double> values_2) {
  if (values_1.size() != values_2.size()) {
    throw std::invalid_argument("twin critic reference values differ in length");
  }
  return 0.5 * (reference_state_value(values_1) + reference_state_value(values_2));
}

RoundCentering ppo_round_center(RewardRateEstimator& estimator, const TDErrorBatch& round_deltas) {
  if (estimator.mode() != CenteringMode::td_based) {
    throw std::logic_error("ppo_round_center needs a td_based estimator");
  }
  RoundCentering result;
  result.rbar_used = estimator.value();
  result.centered = estimator.center_batch(round_deltas);
  estimator.td_based_update(result.centered);
  return result;
}

}  // namespace crl
