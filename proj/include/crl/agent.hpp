#pragma once

#include "crl/centering.hpp"
#include "crl/environment.hpp"
#include "crl/mlp.hpp"
#include "crl/random.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace crl {

/// Replay record. There is deliberately no termination mask: every target
/// bootstraps from the next state.
struct Transition {
  Observation state;
  Action action;
  double reward = 0.0;
  Observation next_state;
};

/// FIFO ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition transition);
  /// Throws std::logic_error while fewer than `n` transitions are stored.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  const Transition& operator[](std::size_t i) const { return data_[i]; }
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

enum class ActMode { warmup, explore, greedy };

enum class RelativeQMode { mean_all, max_all, min_all, reference_set };

/// Every hyperparameter any agent reads. Presets fill these per algorithm;
/// the experiment config may override any field.
struct AgentConfig {
  std::string algorithm = "dqn";
  double gamma = 0.99;
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  int batch_size = 64;
  int replay_capacity = 100'000;
  int warmup_steps = 1'000;
  int learning_starts = 1'000;
  int train_every = 1;
  std::vector<int> hidden{64, 64};
  Activation activation = Activation::relu;
  std::optional<double> grad_clip;

  // DQN and discrete SAC
  double epsilon_start = 1.0;
  double epsilon_end = 0.01;
  int epsilon_decay_steps = 100'000;
  int target_update_every = 1'000;

  // DDPG and TD3
  double tau = 0.005;
  double exploration_std = 0.1;
  std::optional<double> reset_exploration_std;
  double target_noise_std = 0.2;
  double target_noise_clip = 0.5;
  int policy_delay = 2;

  // SAC
  double entropy_coef = 0.2;
  bool autotune = true;
  std::optional<double> target_entropy;
  double target_entropy_offset = 0.0;

  // PPO
  int round_length = 2048;
  int epochs = 10;
  int minibatch_size = 64;
  double clip_range = 0.2;
  double gae_lambda = 0.95;
  bool normalize_advantage = true;
  double ppo_entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  double initial_log_std = 0.0;

  // Tabular
  double alpha = 0.1;
  double alpha_decay_steps = 0.0;
  double eta = 0.1;
  double tabular_epsilon = 0.1;
  RelativeQMode relative_mode = RelativeQMode::mean_all;
  std::vector<std::pair<int, int>> reference_pairs;

  /// Trailing action dimension is a reset probability (warmup bias, noise).
  bool agent_controlled_reset = false;

  CenteringConfig centering;

  bool operator==(const AgentConfig&) const = default;
};

/// Throws std::invalid_argument on an inconsistent config (for example
/// gamma = 1 without centering).
void validate(const AgentConfig& config);

std::string to_string(RelativeQMode mode);
RelativeQMode relative_mode_from_string(const std::string& name);

/// Interface every learning agent implements. Agents own their generators,
/// seeded from the run's master seed.
class Agent {
 public:
  virtual ~Agent() = default;

  virtual Action act(const Observation& observation, ActMode mode) = 0;
  /// Feeds one environment transition; the agent decides when to learn.
  virtual void observe(const Transition& transition) = 0;
  virtual const RewardRateEstimator& estimator() const = 0;
};

// Helpers shared by the agents.

/// One-hot for discrete spaces, the raw values for boxes.
Eigen::VectorXd encode_observation(const Observation& observation, const Space& space);
Eigen::MatrixXd encode_batch(const std::vector<const Observation*>& observations, const Space& space);

int argmax(const Eigen::Ref<const Eigen::VectorXd>& values);
double linear_epsilon(long step, double start, double end, long decay_steps);

Action uniform_action(const Space& space, Rng& rng);
/// Uniform in every dimension except the trailing reset probability, which
/// is 1/N with N uniform on {1, ..., 1000}.
Action reset_biased_warmup_action(const BoxSpace& space, Rng& rng);

/// Half-widths and centers used to squash actor outputs into a box.
struct ActionScaling {
  Eigen::VectorXd scale;
  Eigen::VectorXd center;

  explicit ActionScaling(const BoxSpace& box);
  Eigen::VectorXd clip(Eigen::VectorXd action) const;
};

std::unique_ptr<Agent> make_agent(const AgentConfig& config, const Space& observation_space,
                                  const Space& action_space, std::uint64_t seed);

}  // namespace crl
