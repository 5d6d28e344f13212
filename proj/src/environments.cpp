#include "crl/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace crl {

void validate(const Space& space) {
  if (const auto* d = std::get_if<DiscreteSpace>(&space)) {
    if (d->n < 1) {
      throw std::invalid_argument("discrete space needs n >= 1");
    }
    return;
  }
  const auto& box = std::get<BoxSpace>(space);
  if (box.low.size() != box.high.size() || box.low.empty()) {
    throw std::invalid_argument("box bounds must be non-empty and of equal length");
  }
  for (std::size_t i = 0; i < box.low.size(); ++i) {
    if (!(box.low[i] <= box.high[i])) {
      throw std::invalid_argument("box lower bound exceeds upper bound at index " + std::to_string(i));
    }
  }
}

bool is_discrete(const Space& space) { return std::holds_alternative<DiscreteSpace>(space); }

int space_size(const Space& space) {
  if (const auto* d = std::get_if<DiscreteSpace>(&space)) {
    return d->n;
  }
  return static_cast<int>(std::get<BoxSpace>(space).dims());
}

int feature_size(const Space& space) { return space_size(space); }

int sample_index(const Eigen::Ref<const Eigen::VectorXd>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    cumulative += probs(i);
    if (u < cumulative) {
      return static_cast<int>(i);
    }
  }
  // Round-off: fall back to the last index with positive mass.
  for (Eigen::Index i = probs.size() - 1; i >= 0; --i) {
    if (probs(i) > 0.0) {
      return static_cast<int>(i);
    }
  }
  return static_cast<int>(probs.size() - 1);
}

// ---------------------------------------------------------------------------
// Catch

std::pair<CatchState, EnvStep> catch_step(const CatchState& state, int action, Rng& rng) {
  if (action < 0 || action > 2) {
    throw std::out_of_range("catch action must be 0 (left), 1 (stay) or 2 (right)");
  }
  if (state.ball_row < 0 || state.ball_row >= kCatchRows - 1 || state.ball_col < 0 ||
      state.ball_col >= kCatchCols || state.paddle_col < 0 || state.paddle_col >= kCatchCols) {
    throw std::out_of_range("catch state outside the grid");
  }
  CatchState next = state;
  next.paddle_col = std::clamp(state.paddle_col + action - 1, 0, kCatchCols - 1);
  next.ball_row = state.ball_row + 1;

  EnvStep result;
  if (next.ball_row == kCatchRows - 1) {
    result.reward = next.ball_col == next.paddle_col ? 1.0 : -1.0;
    next.ball_row = 0;
    next.ball_col = static_cast<int>(uniform01(rng) * kCatchCols);
    result.reset_occurred = true;
  }
  result.observation = catch_observation(next);
  return {next, result};
}

Observation catch_observation(const CatchState& state) {
  Observation grid(static_cast<std::size_t>(kCatchRows * kCatchCols), 0.0);
  grid[static_cast<std::size_t>(state.ball_row * kCatchCols + state.ball_col)] = 1.0;
  grid[static_cast<std::size_t>((kCatchRows - 1) * kCatchCols + state.paddle_col)] = 1.0;
  return grid;
}

CatchState catch_initial_state(Rng& rng) {
  return CatchState{0, static_cast<int>(uniform01(rng) * kCatchCols), kCatchCols / 2};
}

CatchEnv::CatchEnv(Rng dynamics_rng) : rng_(std::move(dynamics_rng)) { state_ = catch_initial_state(rng_); }

Space CatchEnv::observation_space() const {
  return BoxSpace{std::vector<double>(kCatchRows * kCatchCols, 0.0), std::vector<double>(kCatchRows * kCatchCols, 1.0)};
}

Space CatchEnv::action_space() const { return DiscreteSpace{3}; }

Observation CatchEnv::reset(Rng& rng) {
  state_ = catch_initial_state(rng);
  return catch_observation(state_);
}

EnvStep CatchEnv::step(const Action& action) {
  auto [next, result] = catch_step(state_, action.index, rng_);
  state_ = next;
  return result;
}

Observation CatchEnv::observation() const { return catch_observation(state_); }

void CatchEnv::set_state(const CatchState& state) { state_ = state; }

int catch_state_index(const CatchState& state) {
  return (state.ball_row * kCatchCols + state.ball_col) * kCatchCols + state.paddle_col;
}

DiscreteMdp catch_as_mdp() {
  const int rows = kCatchRows - 1;
  const int n = rows * kCatchCols * kCatchCols;
  DiscreteMdp mdp;
  mdp.num_states = n;
  mdp.num_actions = 3;
  mdp.transition.assign(3, Eigen::MatrixXd::Zero(n, n));
  mdp.reward = Eigen::MatrixXd::Zero(n, 3);
  mdp.initial_dist = Eigen::VectorXd::Zero(n);
  for (int row = 0; row < rows; ++row) {
    for (int col = 0; col < kCatchCols; ++col) {
      for (int paddle = 0; paddle < kCatchCols; ++paddle) {
        const CatchState state{row, col, paddle};
        const int s = catch_state_index(state);
        for (int a = 0; a < 3; ++a) {
          const int moved = std::clamp(paddle + a - 1, 0, kCatchCols - 1);
          if (row + 1 == kCatchRows - 1) {
            mdp.reward(s, a) = col == moved ? 1.0 : -1.0;
            for (int spawn = 0; spawn < kCatchCols; ++spawn) {
              mdp.transition[static_cast<std::size_t>(a)](s, catch_state_index({0, spawn, moved})) +=
                  1.0 / kCatchCols;
            }
          } else {
            mdp.transition[static_cast<std::size_t>(a)](s, catch_state_index({row + 1, col, moved})) = 1.0;
          }
        }
      }
    }
  }
  for (int col = 0; col < kCatchCols; ++col) {
    mdp.initial_dist(catch_state_index({0, col, kCatchCols / 2})) = 1.0 / kCatchCols;
  }
  return mdp;
}

// ---------------------------------------------------------------------------
// Pendulum

namespace {

constexpr double kGravity = 10.0;
constexpr double kMass = 1.0;
constexpr double kLength = 1.0;

double wrap_to_pi(double x) {
  const double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(x + std::numbers::pi, two_pi);
  if (wrapped < 0.0) {
    wrapped += two_pi;
  }
  return wrapped - std::numbers::pi;
}

}  // namespace

std::pair<PendulumState, EnvStep> pendulum_step(const PendulumState& state, double torque, double dt) {
  if (!std::isfinite(torque) || !std::isfinite(state.theta) || !std::isfinite(state.theta_dot) ||
      !std::isfinite(dt)) {
    throw std::invalid_argument("pendulum inputs must be finite");
  }
  const double u = std::clamp(torque, -kPendulumMaxTorque, kPendulumMaxTorque);
  const double angle = wrap_to_pi(state.theta);
  const double cost = angle * angle + 0.1 * state.theta_dot * state.theta_dot + 0.001 * u * u;

  const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(state.theta) + 3.0 * u / (kMass * kLength * kLength);
  PendulumState next;
  next.theta_dot = std::clamp(state.theta_dot + accel * dt, -kPendulumMaxSpeed, kPendulumMaxSpeed);
  next.theta = state.theta + next.theta_dot * dt;

  EnvStep result;
  result.observation = {next.theta, next.theta_dot};
  result.reward = -cost;
  return {next, result};
}

double pendulum_energy(const PendulumState& state) {
  const double inertia = kMass * kLength * kLength / 3.0;
  return 0.5 * inertia * state.theta_dot * state.theta_dot + kMass * kGravity * kLength / 2.0 * std::cos(state.theta);
}

PendulumEnv::PendulumEnv(Rng dynamics_rng) : rng_(std::move(dynamics_rng)) { reset(rng_); }

Space PendulumEnv::observation_space() const {
  const double inf = std::numeric_limits<double>::infinity();
  return BoxSpace{{-inf, -kPendulumMaxSpeed}, {inf, kPendulumMaxSpeed}};
}

Space PendulumEnv::action_space() const { return BoxSpace{{-kPendulumMaxTorque}, {kPendulumMaxTorque}}; }

Observation PendulumEnv::reset(Rng& rng) {
  state_.theta = std::numbers::pi * (2.0 * uniform01(rng) - 1.0);
  state_.theta_dot = 2.0 * uniform01(rng) - 1.0;
  return observation();
}

EnvStep PendulumEnv::step(const Action& action) {
  if (action.values.size() != 1) {
    throw std::invalid_argument("pendulum expects a one-dimensional torque");
  }
  auto [next, result] = pendulum_step(state_, action.values[0]);
  state_ = next;
  return result;
}

Observation PendulumEnv::observation() const { return {state_.theta, state_.theta_dot}; }

// ---------------------------------------------------------------------------
// Tabular

std::pair<int, EnvStep> tabular_env_step(const DiscreteMdp& mdp, int state, int action, Rng& rng,
                                         double reward_noise_std) {
  if (state < 0 || state >= mdp.num_states) {
    throw std::out_of_range("state index " + std::to_string(state) + " out of range");
  }
  if (action < 0 || action >= mdp.num_actions) {
    throw std::out_of_range("action index " + std::to_string(action) + " out of range");
  }
  const int next = sample_index(mdp.transition[static_cast<std::size_t>(action)].row(state).transpose(), rng);
  EnvStep result;
  result.reward = mdp.reward(state, action);
  if (reward_noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, reward_noise_std);
    result.reward += noise(rng);
  }
  result.observation = {static_cast<double>(next)};
  return {next, result};
}

TabularEnv::TabularEnv(std::shared_ptr<const DiscreteMdp> mdp, Rng dynamics_rng, double reward_noise_std)
    : mdp_(std::move(mdp)), rng_(std::move(dynamics_rng)), noise_std_(reward_noise_std) {
  validate(*mdp_);
  if (!(noise_std_ >= 0.0)) {
    throw std::invalid_argument("reward noise std must be non-negative");
  }
  reset(rng_);
}

Space TabularEnv::observation_space() const { return DiscreteSpace{mdp_->num_states}; }

Space TabularEnv::action_space() const { return DiscreteSpace{mdp_->num_actions}; }

Observation TabularEnv::reset(Rng& rng) {
  state_ = sample_index(mdp_->initial_dist, rng);
  return observation();
}

EnvStep TabularEnv::step(const Action& action) {
  auto [next, result] = tabular_env_step(*mdp_, state_, action.index, rng_, noise_std_);
  state_ = next;
  return result;
}

Observation TabularEnv::observation() const { return {static_cast<double>(state_)}; }

void TabularEnv::set_state(int state) {
  if (state < 0 || state >= mdp_->num_states) {
    throw std::out_of_range("state index out of range");
  }
  state_ = state;
}

}  // namespace crl
