#include "crl/centering.hpp"
#include "crl/environment.hpp"
#include "crl/mdp.hpp"

#include <gtest/gtest.h>

#include <cmath>

using crl::CenteringConfig;
using crl::CenteringMode;
using crl::RewardRateEstimator;

namespace {

RewardRateEstimator make(CenteringMode mode, double beta, double initial = 0.0) {
  return RewardRateEstimator(CenteringConfig{mode, beta, initial});
}

}  // namespace

TEST(CenterBatch, SubtractsRbarWithoutMutation) {
  const auto zero = make(CenteringMode::td_based, 0.1);
  const Eigen::Vector2d deltas(3.0, 1.0);
  EXPECT_EQ(zero.center_batch(deltas), Eigen::VectorXd(deltas));

  const auto two = make(CenteringMode::td_based, 0.1, 2.0);
  EXPECT_EQ(two.center_batch(deltas), Eigen::VectorXd(Eigen::Vector2d(1.0, -1.0)));
  EXPECT_EQ(two.value(), 2.0);
}

TEST(CenterBatch, MeanShiftsByRbar) {
  const auto est = make(CenteringMode::td_based, 0.1, 0.7);
  const Eigen::VectorXd deltas = Eigen::VectorXd::Random(50);
  EXPECT_NEAR(est.center_batch(deltas).mean(), deltas.mean() - 0.7, 1e-14);
}

TEST(TdBased, SingleUpdate) {
  auto est = make(CenteringMode::td_based, 0.1);
  est.td_based_update(Eigen::VectorXd::Constant(4, 1.0));
  EXPECT_NEAR(est.value(), 0.1, 1e-15);
  est.td_based_update(Eigen::Vector2d(1.0, -1.0));
  EXPECT_NEAR(est.value(), 0.1, 1e-15);
}

TEST(TdBased, ConvergesGeometricallyToRawMean) {
  const double beta = 0.05;
  const double m = 1.7;
  auto est = make(CenteringMode::td_based, beta);
  for (int k = 1; k <= 200; ++k) {
    const Eigen::VectorXd raw = Eigen::Vector2d(m - 0.5, m + 0.5);
    est.td_based_update(est.center_batch(raw));
    EXPECT_NEAR(m - est.value(), m * std::pow(1 - beta, k), 1e-12);
  }
}

TEST(TdBased, ModeMismatchThrows) {
  auto est = make(CenteringMode::moving_average, 0.9);
  EXPECT_THROW(est.td_based_update(Eigen::VectorXd::Ones(1)), std::logic_error);
  auto td = make(CenteringMode::td_based, 0.1);
  EXPECT_THROW(td.moving_average_update(1.0), std::logic_error);
}

TEST(MovingAverage, ZeroBetaTracksLastReward) {
  auto est = make(CenteringMode::moving_average, 0.0);
  est.moving_average_update(3.5);
  EXPECT_EQ(est.value(), 3.5);
  est.moving_average_update(-1.0);
  EXPECT_EQ(est.value(), -1.0);
}

TEST(MovingAverage, ConstantRewardConvergesGeometrically) {
  auto est = make(CenteringMode::moving_average, 0.9);
  for (int k = 1; k <= 100; ++k) {
    est.moving_average_update(2.0);
    EXPECT_NEAR(est.value(), 2.0 * (1 - std::pow(0.9, k)), 1e-12);
  }
}

TEST(MovingAverage, AlternatingRewardsSettleAtMidpoint) {
  auto est = make(CenteringMode::moving_average, 0.999);
  for (int k = 0; k < 100'000; ++k) est.moving_average_update(k % 2 ? 2.0 : 0.0);
  EXPECT_NEAR(est.value(), 1.0, 0.01);
}

TEST(MovingAverage, ConvergesToBehaviorRewardRate) {
  const auto mdp = crl::generate_random_mdp(21, 5, 2, 1.0);
  const auto policy = crl::generate_random_policy(22, 5, 2);
  const double exact = crl::reward_rate_exact(mdp, policy);
  // Average the estimate over a long tail; batch means give the error bar.
  auto est = make(CenteringMode::moving_average, 0.999);
  crl::Rng rng(23);
  int state = 0;
  const int burn_in = 20'000;
  const int batches = 50;
  const int batch_len = 20'000;
  std::vector<double> means;
  for (int t = 0; t < burn_in + batches * batch_len; ++t) {
    const int action = crl::sample_index(policy.probs.row(state).transpose(), rng);
    auto [next, step] = crl::tabular_env_step(mdp, state, action, rng);
    est.moving_average_update(step.reward);
    state = next;
    if (t >= burn_in) {
      if ((t - burn_in) % batch_len == 0) means.push_back(0.0);
      means.back() += est.value() / batch_len;
    }
  }
  double mean = 0.0;
  for (double m : means) mean += m / batches;
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean) / (batches - 1);
  EXPECT_LT(std::abs(mean - exact), 3.0 * std::sqrt(var / batches));
}

TEST(ReferenceStates, MeanOverSet) {
  const std::vector<double> constant(7, 4.25);
  EXPECT_EQ(crl::reference_state_value(constant), 4.25);
  const std::vector<double> values{1.0, 3.0};
  EXPECT_EQ(crl::reference_state_value(values), 2.0);
  const std::vector<double> v1{0.0, 2.0, 4.0};
  const std::vector<double> v2{2.0, 4.0, 6.0};
  EXPECT_DOUBLE_EQ(crl::reference_state_value(v1, v2), 2.0 + 1.0);
  EXPECT_THROW(crl::reference_state_value(std::vector<double>{}), std::invalid_argument);
}

TEST(ReferenceStates, PermutationInvariant) {
  std::vector<double> values{0.5, -1.25, 3.0, 8.0, 2.0, 0.125, -4.0, 1.0};
  const double base = crl::reference_state_value(values);
  crl::Rng rng(1);
  for (int k = 0; k < 20; ++k) {
    std::shuffle(values.begin(), values.end(), rng);
    EXPECT_NEAR(crl::reference_state_value(values), base, 1e-15);
  }
}

TEST(ReferenceStates, InstalledValueIsUsed) {
  auto est = make(CenteringMode::reference_states, 0.0);
  est.set_reference_value(1.5);
  EXPECT_EQ(est.value(), 1.5);
  EXPECT_EQ(est.centered_reward(2.0), 0.5);
}

TEST(PpoRound, ZeroMeanRoundLeavesRbar) {
  auto est = make(CenteringMode::td_based, 0.01);
  const auto result = crl::ppo_round_center(est, Eigen::Vector4d(1, -1, 2, -2));
  EXPECT_EQ(est.value(), 0.0);
  EXPECT_EQ(result.rbar_used, 0.0);
}

TEST(PpoRound, TenEpochsFollowClosedForm) {
  const double beta = 0.01;
  auto est = make(CenteringMode::td_based, beta);
  const Eigen::VectorXd raw = Eigen::VectorXd::Random(64).array() + 2.0;
  const double m = raw.mean();
  for (int epoch = 0; epoch < 10; ++epoch) {
    const double before = est.value();
    const auto result = crl::ppo_round_center(est, raw);
    EXPECT_EQ(result.rbar_used, before);
    EXPECT_LT((result.centered - (raw.array() - before).matrix()).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_NEAR(est.value(), m * (1 - std::pow(1 - beta, 10)), 1e-12);
}

TEST(PpoRound, RequiresTdBased) {
  auto est = make(CenteringMode::moving_average, 0.9);
  EXPECT_THROW(crl::ppo_round_center(est, Eigen::VectorXd::Ones(3)), std::logic_error);
}

TEST(Estimator, ShiftExactCenteredRewards) {
  // r - rbar is bit-identical after shifting the reward and the initial value.
  auto plain = make(CenteringMode::td_based, 0.03, 0.0);
  auto shifted = make(CenteringMode::td_based, 0.03, 100.0);
  crl::Rng rng(3);
  for (int k = 0; k < 1000; ++k) {
    const double r = static_cast<double>(static_cast<int>(rng() % 129) - 64) / 64.0;
    ASSERT_EQ(plain.centered_reward(r), shifted.centered_reward(r + 100.0));
    const Eigen::VectorXd d = Eigen::VectorXd::Constant(1, plain.centered_reward(r));
    plain.td_based_update(d);
    shifted.td_based_update(d);
  }
  EXPECT_NEAR(shifted.value() - plain.value(), 100.0, 1e-9);
}

TEST(Estimator, OffModeIsZero) {
  const RewardRateEstimator off;
  EXPECT_FALSE(off.enabled());
  EXPECT_EQ(off.value(), 0.0);
  EXPECT_EQ(off.centered_reward(3.0), 3.0);
}

TEST(Estimator, ModeNamesRoundTrip) {
  for (auto mode : {CenteringMode::off, CenteringMode::td_based, CenteringMode::moving_average,
                    CenteringMode::reference_states}) {
    EXPECT_EQ(crl::centering_mode_from_string(crl::to_string(mode)), mode);
  }
  EXPECT_THROW(crl::centering_mode_from_string("sideways"), std::invalid_argument);
}
