#pragma once

#include "crl/environment.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace crl {

/// Reset cost is subtracted from the reward of a resetting step. The initial
/// sampler is the wrapped environment's own `reset`, driven by the wrapper's
/// generator.
struct ResetConfig {
  double reset_cost = 10.0;
};

/// Marks base-environment observations that trigger a reset.
using FailurePredicate = std::function<bool(const Observation&)>;

/// Failure predicate for tabular environments: true when the state index is
/// in `states`.
FailurePredicate failure_states(std::vector<int> states);

/// Delegates everything to an inner environment.
class EnvironmentWrapper : public Environment {
 public:
  explicit EnvironmentWrapper(std::unique_ptr<Environment> inner);

  Space observation_space() const override { return inner_->observation_space(); }
  Space action_space() const override { return inner_->action_space(); }
  Observation reset(Rng& rng) override { return inner_->reset(rng); }
  EnvStep step(const Action& action) override { return inner_->step(action); }
  Observation observation() const override { return inner_->observation(); }

  Environment& inner() { return *inner_; }

 protected:
  std::unique_ptr<Environment> inner_;
};

/// Each step, with probability p, the base transition's next state is
/// replaced by an initial-state draw. The base reward is kept and no cost is
/// charged.
class RandomResetWrapper final : public EnvironmentWrapper {
 public:
  RandomResetWrapper(std::unique_ptr<Environment> inner, double probability, Rng reset_rng);

  EnvStep step(const Action& action) override;

 private:
  double probability_;
  Rng rng_;
};

/// After the base step, a failing next observation is replaced by an
/// initial-state draw and the reset cost is subtracted from the reward. The
/// resulting transition is an ordinary one; nothing downstream masks it.
class ResetAsTransitionWrapper final : public EnvironmentWrapper {
 public:
  ResetAsTransitionWrapper(std::unique_ptr<Environment> inner, FailurePredicate failure, ResetConfig config,
                           Rng reset_rng);

  EnvStep step(const Action& action) override;

 private:
  FailurePredicate failure_;
  ResetConfig config_;
  Rng rng_;
};

/// Appends a trailing action dimension in [0, 1] read as the probability of
/// resetting this step. A reset skips the base dynamics entirely and emits
/// -reset_cost. Out-of-range probabilities are clipped.
class AgentControlledResetWrapper final : public EnvironmentWrapper {
 public:
  AgentControlledResetWrapper(std::unique_ptr<Environment> inner, ResetConfig config, Rng reset_rng);

  Space action_space() const override;
  EnvStep step(const Action& action) override;

  long clipped_count() const { return clipped_; }

 private:
  ResetConfig config_;
  Rng rng_;
  long clipped_ = 0;
};

class RewardOffsetWrapper final : public EnvironmentWrapper {
 public:
  RewardOffsetWrapper(std::unique_ptr<Environment> inner, double offset);

  EnvStep step(const Action& action) override;

 private:
  double offset_;
};

/// Literal mapping x -> (x mod 2pi) - pi, with mod taken into [0, 2pi). The
/// centered variant maps x -> ((x + pi) mod 2pi) - pi, which leaves angles
/// already in [-pi, pi) unchanged.
Observation angle_wrap(Observation observation, const std::vector<int>& angle_indices, bool centered = false);

class AngleWrapWrapper final : public EnvironmentWrapper {
 public:
  AngleWrapWrapper(std::unique_ptr<Environment> inner, std::vector<int> angle_indices, bool centered);

  Space observation_space() const override;
  Observation reset(Rng& rng) override;
  EnvStep step(const Action& action) override;
  Observation observation() const override;

 private:
  std::vector<int> indices_;
  bool centered_;
};

}  // namespace crl
