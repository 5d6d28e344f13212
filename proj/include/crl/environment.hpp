#pragma once

#include "crl/mdp.hpp"
#include "crl/random.hpp"

#include <memory>
#include <variant>
#include <vector>

namespace crl {

struct DiscreteSpace {
  int n = 1;
};

struct BoxSpace {
  std::vector<double> low;
  std::vector<double> high;

  std::size_t dims() const { return low.size(); }
};

using Space = std::variant<DiscreteSpace, BoxSpace>;

/// Throws std::invalid_argument when n < 1 or some low > high.
void validate(const Space& space);
bool is_discrete(const Space& space);
/// Number of discrete choices, or the dimension of a box.
int space_size(const Space& space);
/// Length of the feature vector a function approximator sees: one-hot for
/// discrete spaces, the raw vector for boxes.
int feature_size(const Space& space);

using Observation = std::vector<double>;

/// Discrete spaces use `index`; box spaces use `values`.
struct Action {
  int index = 0;
  std::vector<double> values;

  static Action discrete(int i) { return Action{i, {}}; }
  static Action box(std::vector<double> v) { return Action{0, std::move(v)}; }
  bool operator==(const Action&) const = default;
};

/// Result of one environment step. Continuing tasks have no terminal flag;
/// `reset_occurred` marks steps where the state jumped to an initial-state
/// sample.
struct EnvStep {
  Observation observation;
  double reward = 0.0;
  bool reset_occurred = false;
};

/// Stepping interface shared by base environments and wrappers.
///
/// Base environments own the generator driving their dynamics. `reset`
/// draws a fresh state from the initial distribution using the caller's
/// generator, so wrappers can keep reset sampling on their own stream.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual Space observation_space() const = 0;
  virtual Space action_space() const = 0;
  virtual Observation reset(Rng& rng) = 0;
  virtual EnvStep step(const Action& action) = 0;
  virtual Observation observation() const = 0;
};

// ---------------------------------------------------------------------------
// Catch

inline constexpr int kCatchRows = 10;
inline constexpr int kCatchCols = 5;

struct CatchState {
  int ball_row = 0;
  int ball_col = 0;
  int paddle_col = kCatchCols / 2;

  bool operator==(const CatchState&) const = default;
};

/// Actions: 0 = left, 1 = stay, 2 = right.
std::pair<CatchState, EnvStep> catch_step(const CatchState& state, int action, Rng& rng);
Observation catch_observation(const CatchState& state);
CatchState catch_initial_state(Rng& rng);

class CatchEnv final : public Environment {
 public:
  explicit CatchEnv(Rng dynamics_rng);

  Space observation_space() const override;
  Space action_space() const override;
  Observation reset(Rng& rng) override;
  EnvStep step(const Action& action) override;
  Observation observation() const override;

  const CatchState& state() const { return state_; }
  void set_state(const CatchState& state);

 private:
  CatchState state_;
  Rng rng_;
};

/// Continuing Catch as a tabular MDP over (ball_row, ball_col, paddle_col)
/// with ball_row in [0, rows - 2]. Used to evaluate Catch policies exactly.
DiscreteMdp catch_as_mdp();
int catch_state_index(const CatchState& state);

// ---------------------------------------------------------------------------
// Pendulum (theta = 0 is upright)

struct PendulumState {
  double theta = 0.0;
  double theta_dot = 0.0;
};

inline constexpr double kPendulumMaxSpeed = 8.0;
inline constexpr double kPendulumMaxTorque = 2.0;
inline constexpr double kPendulumDt = 0.05;

std::pair<PendulumState, EnvStep> pendulum_step(const PendulumState& state, double torque,
                                                double dt = kPendulumDt);
/// Mechanical energy of the rod (m = l = 1, g = 10), zero potential at the pivot.
double pendulum_energy(const PendulumState& state);

class PendulumEnv final : public Environment {
 public:
  explicit PendulumEnv(Rng dynamics_rng);

  Space observation_space() const override;
  Space action_space() const override;
  Observation reset(Rng& rng) override;
  EnvStep step(const Action& action) override;
  Observation observation() const override;

  const PendulumState& state() const { return state_; }
  void set_state(const PendulumState& state) { state_ = state; }

 private:
  PendulumState state_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Tabular

/// Samples s' ~ p(. | s, a) and returns r(s, a) plus N(0, noise_std) noise.
std::pair<int, EnvStep> tabular_env_step(const DiscreteMdp& mdp, int state, int action, Rng& rng,
                                         double reward_noise_std = 0.0);

class TabularEnv final : public Environment {
 public:
  TabularEnv(std::shared_ptr<const DiscreteMdp> mdp, Rng dynamics_rng, double reward_noise_std = 0.0);

  Space observation_space() const override;
  Space action_space() const override;
  Observation reset(Rng& rng) override;
  EnvStep step(const Action& action) override;
  Observation observation() const override;

  int state() const { return state_; }
  void set_state(int state);
  const DiscreteMdp& mdp() const { return *mdp_; }

 private:
  std::shared_ptr<const DiscreteMdp> mdp_;
  Rng rng_;
  double noise_std_;
  int state_ = 0;
};

int sample_index(const Eigen::Ref<const Eigen::VectorXd>& probs, Rng& rng);

}  // namespace crl
