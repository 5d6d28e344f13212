#include "crl/environment.hpp"
#include "crl/wrappers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using crl::Action;

namespace {

// Two-state chain where state 1 is the failure state and action 0 always
// leads to it with reward 2.
std::shared_ptr<const crl::DiscreteMdp> failing_chain() {
  auto mdp = std::make_shared<crl::DiscreteMdp>();
  mdp->num_states = 2;
  mdp->num_actions = 1;
  Eigen::MatrixXd p(2, 2);
  p << 0, 1, 1, 0;
  mdp->transition = {p};
  mdp->reward = Eigen::MatrixXd::Constant(2, 1, 2.0);
  mdp->initial_dist = Eigen::Vector2d(1.0, 0.0);
  return mdp;
}

std::unique_ptr<crl::Environment> pendulum(std::uint64_t seed) {
  return std::make_unique<crl::PendulumEnv>(crl::child_stream(seed, "env"));
}

}  // namespace

TEST(ResetAsTransition, FailureCostsAndResets) {
  auto env = std::make_unique<crl::ResetAsTransitionWrapper>(
      std::make_unique<crl::TabularEnv>(failing_chain(), crl::Rng(1)), crl::failure_states({1}),
      crl::ResetConfig{10.0}, crl::Rng(2));
  const auto step = env->step(Action::discrete(0));
  EXPECT_EQ(step.reward, -8.0);
  EXPECT_TRUE(step.reset_occurred);
  EXPECT_EQ(step.observation, (crl::Observation{0.0}));
}

TEST(ResetAsTransition, RejectsNegativeCost) {
  EXPECT_THROW(crl::ResetAsTransitionWrapper(std::make_unique<crl::TabularEnv>(failing_chain(), crl::Rng(1)),
                                             crl::failure_states({1}), crl::ResetConfig{-1.0}, crl::Rng(2)),
               std::invalid_argument);
}

TEST(RewardOffset, AddsConstant) {
  crl::RewardOffsetWrapper env(std::make_unique<crl::TabularEnv>(failing_chain(), crl::Rng(1)), 90.0);
  EXPECT_EQ(env.step(Action::discrete(0)).reward, 92.0);
}

TEST(Composition, WrappersApplyOutsideIn) {
  // offset(reset_as_transition(env)): the offset also lands on the resetting step.
  auto inner = std::make_unique<crl::ResetAsTransitionWrapper>(
      std::make_unique<crl::TabularEnv>(failing_chain(), crl::Rng(1)), crl::failure_states({1}),
      crl::ResetConfig{10.0}, crl::Rng(2));
  crl::RewardOffsetWrapper outer(std::move(inner), 5.0);
  EXPECT_EQ(outer.step(Action::discrete(0)).reward, 2.0 - 10.0 + 5.0);

  // reset_as_transition(offset(env)) gives the same sum here, but the
  // predicate now sees the offset environment's observation.
  auto offset_first = std::make_unique<crl::RewardOffsetWrapper>(
      std::make_unique<crl::TabularEnv>(failing_chain(), crl::Rng(1)), 5.0);
  crl::ResetAsTransitionWrapper reset_outer(std::move(offset_first), crl::failure_states({1}),
                                            crl::ResetConfig{10.0}, crl::Rng(2));
  const auto step = reset_outer.step(Action::discrete(0));
  EXPECT_EQ(step.reward, 2.0 + 5.0 - 10.0);
  EXPECT_TRUE(step.reset_occurred);
}

TEST(AngleWrap, LiteralFormula) {
  const double pi = std::numbers::pi;
  EXPECT_NEAR(crl::angle_wrap({pi}, {0})[0], 0.0, 1e-12);
  EXPECT_NEAR(crl::angle_wrap({3 * pi}, {0})[0], 0.0, 1e-12);
  EXPECT_NEAR(crl::angle_wrap({0.0}, {0})[0], -pi, 1e-12);
  EXPECT_NEAR(crl::angle_wrap({-0.5}, {0})[0], pi - 0.5, 1e-12);
}

TEST(AngleWrap, CenteredVariantKeepsPrincipalAngles) {
  for (double x : {-3.0, -1.0, 0.0, 0.5, 3.1}) EXPECT_NEAR(crl::angle_wrap({x}, {0}, true)[0], x, 1e-12);
  EXPECT_NEAR(crl::angle_wrap({2 * std::numbers::pi + 1.0}, {0}, true)[0], 1.0, 1e-12);
}

TEST(AngleWrap, RangeAndUntouchedIndices) {
  crl::Rng rng(5);
  std::uniform_real_distribution<double> dist(-100.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = dist(rng);
    const auto out = crl::angle_wrap({x, x}, {1});
    EXPECT_EQ(out[0], x);
    EXPECT_GE(out[1], -std::numbers::pi);
    EXPECT_LT(out[1], std::numbers::pi);
  }
  EXPECT_THROW(crl::angle_wrap({1.0}, {1}), std::out_of_range);
}

TEST(AgentControlledReset, ResetFrequencyMatchesProbability) {
  crl::AgentControlledResetWrapper env(pendulum(3), crl::ResetConfig{10.0}, crl::child_stream(3, "reset/0"));
  const auto box = std::get<crl::BoxSpace>(env.action_space());
  ASSERT_EQ(box.dims(), 2u);
  EXPECT_EQ(box.low[1], 0.0);
  EXPECT_EQ(box.high[1], 1.0);
  const int steps = 100'000;
  int resets = 0;
  for (int t = 0; t < steps; ++t) {
    const auto step = env.step(Action::box({0.0, 0.01}));
    if (step.reset_occurred) {
      ++resets;
      EXPECT_EQ(step.reward, -10.0);
    }
  }
  // Binomial(1e5, 0.01): mean 1000, sd about 31.5.
  EXPECT_NEAR(resets, 1000, 4 * std::sqrt(steps * 0.01 * 0.99));
}

TEST(AgentControlledReset, ZeroProbabilityReproducesBaseTrajectory) {
  crl::AgentControlledResetWrapper wrapped(pendulum(7), crl::ResetConfig{10.0}, crl::child_stream(7, "reset/0"));
  auto base = pendulum(7);
  crl::Rng torques(1);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int t = 0; t < 2000; ++t) {
    const double torque = u(torques);
    const auto a = wrapped.step(Action::box({torque, 0.0}));
    const auto b = base->step(Action::box({torque}));
    ASSERT_EQ(a.observation, b.observation);
    ASSERT_EQ(a.reward, b.reward);
    ASSERT_FALSE(a.reset_occurred);
  }
}

TEST(AgentControlledReset, OutOfRangeProbabilityIsClipped) {
  crl::AgentControlledResetWrapper env(pendulum(1), crl::ResetConfig{1.0}, crl::Rng(1));
  EXPECT_TRUE(env.step(Action::box({0.0, 1.5})).reset_occurred);
  EXPECT_FALSE(env.step(Action::box({0.0, -0.5})).reset_occurred);
  EXPECT_EQ(env.clipped_count(), 2);
  EXPECT_THROW(env.step(Action::box({0.0})), std::invalid_argument);
}

TEST(RandomReset, KeepsBaseRewardAndFiresAtRate) {
  crl::RandomResetWrapper env(std::make_unique<crl::TabularEnv>(failing_chain(), crl::Rng(1)), 0.2, crl::Rng(2));
  const int steps = 50'000;
  int resets = 0;
  for (int t = 0; t < steps; ++t) {
    const auto step = env.step(Action::discrete(0));
    EXPECT_EQ(step.reward, 2.0);
    if (step.reset_occurred) {
      ++resets;
      EXPECT_EQ(step.observation, (crl::Observation{0.0}));
    }
  }
  EXPECT_NEAR(resets / double(steps), 0.2, 4 * std::sqrt(0.16 / steps));
}

TEST(Wrappers, StepResultsCarryNoTerminalFlag) {
  // EnvStep has exactly observation, reward and reset_occurred.
  static_assert(sizeof(crl::EnvStep) == sizeof(crl::Observation) + sizeof(double) + sizeof(double));
  auto env = std::make_unique<crl::AngleWrapWrapper>(pendulum(2), std::vector<int>{0}, false);
  crl::RewardOffsetWrapper outer(std::move(env), 1.0);
  for (int t = 0; t < 100; ++t) {
    const auto step = outer.step(Action::box({0.0}));
    EXPECT_FALSE(step.reset_occurred);
    EXPECT_GE(step.observation[0], -std::numbers::pi);
    EXPECT_LT(step.observation[0], std::numbers::pi);
  }
}
