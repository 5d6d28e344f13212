#include "crl/actor_critic.hpp"
#include "crl/dqn.hpp"
#include "crl/environment.hpp"
#include "crl/ppo.hpp"
#include "crl/sac.hpp"
#include "crl/tabular.hpp"

#include <gtest/gtest.h>

#include <cmath>

using crl::CenteringConfig;
using crl::CenteringMode;
using crl::RewardRateEstimator;
using crl::TabularTransition;

namespace {

RewardRateEstimator td_based(double initial = 0.0) {
  return RewardRateEstimator(CenteringConfig{CenteringMode::td_based, 0.1, initial});
}

// Epsilon-greedy Q-learning on a tabular MDP with rewards passed through
// `transform`. Environment and exploration use separate streams.
template <typename Transform>
Eigen::MatrixXd run_q_learning(const crl::DiscreteMdp& mdp, std::uint64_t seed, long steps, double gamma,
                               RewardRateEstimator estimator, Transform transform) {
  crl::Rng env_rng = crl::child_stream(seed, "env");
  crl::Rng explore = crl::child_stream(seed, "explore");
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_actions);
  int state = 0;
  for (long t = 0; t < steps; ++t) {
    int action = crl::argmax(q.row(state).transpose());
    if (crl::uniform01(explore) < 0.1) action = static_cast<int>(crl::uniform01(explore) * mdp.num_actions);
    auto [next, step] = crl::tabular_env_step(mdp, state, action, env_rng);
    const double alpha = crl::scheduled_step_size(0.5, 1e4, t);
    crl::tabular_q_update(q, {state, action, transform(step.reward), next}, alpha, gamma, estimator, 0.1);
    state = next;
  }
  return q;
}

template <typename Transform>
Eigen::MatrixXd run_relative_q(const crl::DiscreteMdp& mdp, std::uint64_t seed, long steps, double gamma,
                               Transform transform) {
  crl::Rng env_rng = crl::child_stream(seed, "env");
  crl::Rng explore = crl::child_stream(seed, "explore");
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_actions);
  int state = 0;
  for (long t = 0; t < steps; ++t) {
    int action = crl::argmax(q.row(state).transpose());
    if (crl::uniform01(explore) < 0.1) action = static_cast<int>(crl::uniform01(explore) * mdp.num_actions);
    auto [next, step] = crl::tabular_env_step(mdp, state, action, env_rng);
    const double alpha = crl::scheduled_step_size(0.5, 1e4, t);
    crl::relative_q_update(q, {state, action, transform(step.reward), next}, alpha, gamma,
                           crl::RelativeQMode::mean_all, {});
    state = next;
  }
  return q;
}

crl::AgentConfig small_config(const std::string& algorithm) {
  crl::AgentConfig c;
  c.algorithm = algorithm;
  c.hidden = {8};
  c.batch_size = 4;
  c.replay_capacity = 100;
  c.warmup_steps = 0;
  c.learning_starts = 0;
  return c;
}

crl::ContinuousBatch random_continuous_batch(int state_dims, int action_dims, int n, crl::Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  crl::ContinuousBatch b;
  b.states = Eigen::MatrixXd::NullaryExpr(state_dims, n, [&] { return u(rng); });
  b.next_states = Eigen::MatrixXd::NullaryExpr(state_dims, n, [&] { return u(rng); });
  b.actions = Eigen::MatrixXd::NullaryExpr(action_dims, n, [&] { return u(rng); });
  b.rewards = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
  return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tabular

TEST(TabularTd0, SingleHandUpdate) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(3);
  auto est = td_based();
  const double alpha = 0.25;
  const double eta = 0.1;
  const double delta = crl::tabular_td0_update(v, {0, 0, 1.0, 2}, alpha, 0.99, est, eta);
  EXPECT_EQ(delta, 1.0);
  EXPECT_EQ(v(0), alpha);
  EXPECT_NEAR(est.value(), eta * alpha, 1e-17);
}

TEST(TabularTd0, FixedPointLeavesEverythingUnchanged) {
  Eigen::VectorXd v = Eigen::Vector2d(0.0, 0.0);
  auto est = td_based(1.5);
  const double delta = crl::tabular_td0_update(v, {0, 0, 1.5, 1}, 0.3, 0.9, est, 0.1);
  EXPECT_EQ(delta, 0.0);
  EXPECT_EQ(v, Eigen::VectorXd(Eigen::Vector2d(0.0, 0.0)));
  EXPECT_EQ(est.value(), 1.5);
}

TEST(TabularTd0, ConservesRbarMinusEtaSumOfValues) {
  const auto mdp = crl::generate_random_mdp(5, 5, 2, 1.0);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(5);
  auto est = td_based();
  crl::Rng rng(1);
  int state = 0;
  for (int t = 0; t < 10'000; ++t) {
    const int action = static_cast<int>(crl::uniform01(rng) * 2);
    auto [next, step] = crl::tabular_env_step(mdp, state, action, rng);
    crl::tabular_td0_update(v, {state, action, step.reward, next}, 0.1, 0.99, est, 0.1);
    state = next;
  }
  EXPECT_NEAR(est.value() - 0.1 * v.sum(), 0.0, 1e-10);
}

TEST(TabularTd0, ExpectedUpdateFixedPointIsShiftedValueFunction) {
  // Synchronous expected TD(0) with the same centering rule; the limit must
  // be v_pi - eta / (1 - gamma + eta |S|) * sum(v_pi).
  const auto mdp = crl::generate_random_mdp(31, 5, 2, 1.0);
  const auto policy = crl::generate_random_policy(32, 5, 2);
  const double gamma = 0.9;
  const double eta = 0.1;
  const Eigen::MatrixXd p = crl::policy_transition(mdp, policy);
  const Eigen::VectorXd r = crl::policy_reward(mdp, policy);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(5);
  double rbar = 0.0;
  for (int it = 0; it < 200'000; ++it) {
    const Eigen::VectorXd delta = (r.array() - rbar).matrix() + gamma * p * v - v;
    v += 0.05 * delta;
    rbar += eta * 0.05 * delta.sum();
  }
  const Eigen::VectorXd v_pi = crl::exact_discounted_values(mdp, policy, gamma);
  const Eigen::VectorXd expected = (v_pi.array() - eta / (1 - gamma + eta * 5) * v_pi.sum()).matrix();
  EXPECT_LT((v - expected).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(TabularTd0, AgentConvergesToShiftedValues) {
  const auto mdp = crl::generate_random_mdp(2024, 5, 2, 1.0);
  const auto policy = crl::generate_random_policy(2025, 5, 2);
  crl::AgentConfig config = small_config("td0");
  config.gamma = 0.99;
  config.alpha = 0.5;
  config.alpha_decay_steps = 1e4;
  config.eta = 0.1;
  config.centering = {CenteringMode::td_based, 0.1, 0.0};
  crl::TabularTd0Agent agent(config, 5, 2, policy, 1);
  crl::TabularEnv env(std::make_shared<crl::DiscreteMdp>(mdp), crl::child_stream(1, "env"));
  crl::Observation obs = env.observation();
  for (int t = 0; t < 500'000; ++t) {
    const auto action = agent.act(obs, crl::ActMode::explore);
    const auto step = env.step(action);
    agent.observe({obs, action, step.reward, step.observation});
    obs = step.observation;
  }
  const Eigen::VectorXd v_pi = crl::exact_discounted_values(mdp, policy, 0.99);
  const Eigen::VectorXd expected = (v_pi.array() - 0.1 / (0.01 + 0.5) * v_pi.sum()).matrix();
  const double span = v_pi.maxCoeff() - v_pi.minCoeff();
  EXPECT_LT((agent.values() - expected).cwiseAbs().maxCoeff(), 0.05 * span);
}

TEST(TabularQ, ZeroDiscountMovesTowardReward) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, 2);
  RewardRateEstimator off;
  crl::tabular_q_update(q, {0, 1, 4.0, 1}, 0.5, 0.0, off, 0.1);
  EXPECT_EQ(q(0, 1), 2.0);
  crl::tabular_q_update(q, {0, 1, 4.0, 1}, 0.5, 0.0, off, 0.1);
  EXPECT_EQ(q(0, 1), 3.0);
}

TEST(TabularQ, ShiftedRewardsGiveIdenticalTrajectory) {
  const auto mdp = crl::generate_random_mdp(8, 4, 2, 1.0);
  auto dyadic = mdp;
  dyadic.reward = (mdp.reward * 64.0).array().round().matrix() / 64.0;
  const double c = 37.0;
  const auto plain = run_q_learning(dyadic, 3, 50'000, 0.99, td_based(0.0), [](double r) { return r; });
  const auto shifted = run_q_learning(dyadic, 3, 50'000, 0.99, td_based(c), [c](double r) { return r + c; });
  EXPECT_EQ(plain, shifted);
}

TEST(TabularQ, GreedyPolicyInvariantUnderRewardScaling) {
  const auto mdp = crl::generate_random_mdp(12, 4, 3, 1.0);
  RewardRateEstimator off;
  const auto base = run_q_learning(mdp, 5, 200'000, 0.9, off, [](double r) { return r; });
  const auto scaled = run_q_learning(mdp, 5, 200'000, 0.9, off, [](double r) { return 4.0 * r; });
  EXPECT_EQ(scaled, 4.0 * base);
  EXPECT_EQ(crl::greedy_actions(scaled), crl::greedy_actions(base));
}

TEST(TabularQ, LearnsOptimalPolicyOnRandomMdps) {
  int matches = 0;
  for (int seed = 0; seed < 10; ++seed) {
    const auto mdp = crl::generate_random_mdp(500 + seed, 4, 2, 1.0);
    RewardRateEstimator off;
    const auto q = run_q_learning(mdp, seed, 1'000'000, 0.9, off, [](double r) { return r; });
    const auto optimal = crl::greedy_actions(crl::optimal_action_values(mdp, 0.9));
    matches += crl::greedy_actions(q) == optimal;
  }
  EXPECT_GE(matches, 9);
}

TEST(RelativeQ, ConstantTableOffset) {
  const double c = 2.0;
  const double gamma = 0.9;
  for (auto mode : {crl::RelativeQMode::mean_all, crl::RelativeQMode::min_all, crl::RelativeQMode::max_all}) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Constant(3, 2, c);
    EXPECT_EQ(crl::relative_q_offset(q, mode, {}), c);
    const double delta = crl::relative_q_update(q, {1, 0, 1.0, 2}, 0.5, gamma, mode, {});
    EXPECT_NEAR(delta, 1.0 - c * (2.0 - gamma), 1e-15);
  }
  Eigen::MatrixXd q(2, 2);
  q << 1, 2, 3, 5;
  EXPECT_EQ(crl::relative_q_offset(q, crl::RelativeQMode::reference_set, {{0, 1}, {1, 1}}), 3.5);
  EXPECT_THROW(crl::relative_q_offset(q, crl::RelativeQMode::reference_set, {}), std::invalid_argument);
}

TEST(RelativeQ, OffsetDoesNotBlowUpValues) {
  // With f = mean, a reward shift c moves the fixed point by c / (2 - gamma)
  // in every entry, against c / (1 - gamma) for plain Q-learning.
  const double c = 100.0;
  const double gamma = 0.99;
  int same_policy = 0;
  for (int seed = 0; seed < 10; ++seed) {
    const auto mdp = crl::generate_random_mdp(700 + seed, 4, 2, 1.0);
    const auto plain = run_relative_q(mdp, seed, 1'000'000, gamma, [](double r) { return r; });
    const auto shifted = run_relative_q(mdp, seed, 1'000'000, gamma, [c](double r) { return r + c; });
    const double span = plain.maxCoeff() - plain.minCoeff();
    const double offset = c / (2.0 - gamma);
    EXPECT_LT((shifted.array() - offset).abs().maxCoeff(), 10.0 * span) << "seed " << seed;
    EXPECT_LT(shifted.cwiseAbs().maxCoeff(), 0.02 * c / (1.0 - gamma)) << "seed " << seed;
    same_policy += crl::greedy_actions(plain) == crl::greedy_actions(shifted);
  }
  EXPECT_GE(same_policy, 8);
}

// ---------------------------------------------------------------------------
// DQN

TEST(Dqn, ZeroTdErrorsLeaveGradientZero) {
  crl::Rng rng(1);
  const crl::MlpSpec spec{{3, 5, 2}, crl::Activation::tanh};
  const auto params = crl::init_params(spec, rng);
  crl::DiscreteBatch batch;
  batch.states = Eigen::MatrixXd::Random(3, 4);
  batch.next_states = Eigen::MatrixXd::Random(3, 4);
  batch.actions = {0, 1, 1, 0};
  const Eigen::MatrixXd q = crl::mlp_forward_batch(spec, params, batch.states);
  batch.rewards.resize(4);
  for (int i = 0; i < 4; ++i) batch.rewards(i) = q(batch.actions[static_cast<std::size_t>(i)], i);
  const auto grad = crl::dqn_semi_gradient(spec, params, params, batch, 0.0, RewardRateEstimator{});
  EXPECT_LT(grad.deltas.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(grad.loss_gradient.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Dqn, LinearSingleFeatureIsScalarRegression) {
  const crl::MlpSpec spec{{1, 1}, crl::Activation::relu};
  const crl::ParamVector w = Eigen::Vector2d(0.5, 0.25);  // weight, bias
  crl::DiscreteBatch batch;
  batch.states = Eigen::MatrixXd::Ones(1, 1);
  batch.next_states = Eigen::MatrixXd::Ones(1, 1);
  batch.actions = {0};
  batch.rewards = Eigen::VectorXd::Constant(1, 2.0);
  const auto grad = crl::dqn_semi_gradient(spec, w, w, batch, 0.0, RewardRateEstimator{});
  EXPECT_EQ(grad.deltas(0), 2.0 - 0.75);
  EXPECT_EQ(grad.loss_gradient, Eigen::VectorXd(Eigen::Vector2d(-1.25, -1.25)));
}

TEST(Dqn, SemiGradientMatchesFiniteDifferenceOfDetachedLoss) {
  crl::Rng rng(2);
  for (int draw = 0; draw < 5; ++draw) {
    const crl::MlpSpec spec{{4, 6, 3}, draw % 2 ? crl::Activation::tanh : crl::Activation::relu};
    const auto online = crl::init_params(spec, rng);
    const auto target = crl::init_params(spec, rng);
    crl::DiscreteBatch batch;
    batch.states = Eigen::MatrixXd::Random(4, 8);
    batch.next_states = Eigen::MatrixXd::Random(4, 8);
    batch.rewards = Eigen::VectorXd::Random(8);
    for (int i = 0; i < 8; ++i) batch.actions.push_back(i % 3);
    const auto est = td_based(0.3);
    const auto grad = crl::dqn_semi_gradient(spec, online, target, batch, 0.95, est);
    const Eigen::VectorXd y = grad.deltas + [&] {
      const Eigen::MatrixXd q = crl::mlp_forward_batch(spec, online, batch.states);
      Eigen::VectorXd taken(8);
      for (int i = 0; i < 8; ++i) taken(i) = q(batch.actions[static_cast<std::size_t>(i)], i);
      return taken;
    }();
    const auto loss = [&](const crl::ParamVector& w) {
      const Eigen::MatrixXd q = crl::mlp_forward_batch(spec, w, batch.states);
      double sum = 0.0;
      for (int i = 0; i < 8; ++i) sum += std::pow(y(i) - q(batch.actions[static_cast<std::size_t>(i)], i), 2);
      return sum / 16.0;
    };
    const crl::ParamVector u = crl::ParamVector::Random(online.size()).normalized();
    const double h = 1e-5;
    const double fd = (loss(online + h * u) - loss(online - h * u)) / (2 * h);
    EXPECT_NEAR(grad.loss_gradient.dot(u), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Dqn, GreedyActionIsArgmax) {
  EXPECT_EQ(crl::argmax(Eigen::Vector3d(1, 3, 2)), 1);
  EXPECT_EQ(crl::argmax(Eigen::Vector3d(2, 2, 1)), 0);
}

TEST(Dqn, FullEpsilonIsUniform) {
  auto config = small_config("dqn");
  config.epsilon_start = 1.0;
  config.epsilon_end = 1.0;
  crl::DqnAgent agent(config, crl::DiscreteSpace{4}, 3, 7);
  std::vector<int> counts(3, 0);
  const int n = 30'000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(agent.act({1.0}, crl::ActMode::explore).index)];
  for (int c : counts) EXPECT_NEAR(c / double(n), 1.0 / 3.0, 4.0 * std::sqrt(2.0 / 9.0 / n));
}

TEST(Dqn, EpsilonScheduleIsLinear) {
  EXPECT_EQ(crl::linear_epsilon(0, 1.0, 0.1, 100), 1.0);
  EXPECT_NEAR(crl::linear_epsilon(50, 1.0, 0.1, 100), 0.55, 1e-15);
  EXPECT_EQ(crl::linear_epsilon(500, 1.0, 0.1, 100), 0.1);
}

TEST(Dqn, TargetNetworkSyncsOnSchedule) {
  auto config = small_config("dqn");
  config.target_update_every = 10;
  crl::DqnAgent agent(config, crl::DiscreteSpace{3}, 2, 3);
  for (int t = 1; t <= 10; ++t) {
    const crl::Observation s{static_cast<double>(t % 3)};
    agent.observe({s, crl::Action::discrete(t % 2), 1.0, {static_cast<double>((t + 1) % 3)}});
    if (t >= config.batch_size && t < 10) {
      EXPECT_NE(agent.target_params(), agent.critic().params);
    }
  }
  EXPECT_EQ(agent.target_params(), agent.critic().params);
  EXPECT_GT(agent.updates(), 0);
}

TEST(Replay, FifoEvictionAndSampling) {
  crl::ReplayBuffer buffer(3);
  for (int i = 0; i < 5; ++i) buffer.push({{double(i)}, crl::Action::discrete(0), double(i), {double(i)}});
  EXPECT_EQ(buffer.size(), 3u);
  std::vector<double> rewards;
  for (std::size_t i = 0; i < buffer.size(); ++i) rewards.push_back(buffer[i].reward);
  std::sort(rewards.begin(), rewards.end());
  EXPECT_EQ(rewards, (std::vector<double>{2, 3, 4}));
  crl::Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    for (auto index : buffer.sample_indices(3, rng)) EXPECT_LT(index, 3u);
  }
  EXPECT_THROW(buffer.sample_indices(4, rng), std::logic_error);
  crl::ReplayBuffer empty(3);
  EXPECT_THROW(empty.sample_indices(1, rng), std::logic_error);
}

TEST(Replay, TransitionHasNoTerminationMask) {
  // Four members and nothing else: state, action, reward, next_state.
  const crl::Transition t{.state = {0.0}, .action = crl::Action::discrete(1), .reward = 2.0, .next_state = {1.0}};
  EXPECT_EQ(t.reward, 2.0);
  static_assert(sizeof(crl::Transition) ==
                2 * sizeof(crl::Observation) + sizeof(crl::Action) + sizeof(double));
}

// ---------------------------------------------------------------------------
// DDPG and TD3

TEST(Ddpg, QuadraticCriticPullsActorTowardOptimum) {
  crl::Rng rng(4);
  crl::Network actor(crl::MlpSpec{{1, 1}, crl::Activation::relu}, rng, 1e-3);
  actor.params << 0.0, -0.5;  // weight, bias
  const crl::ActionScaling scaling(crl::BoxSpace{{-1.0}, {1.0}});
  const Eigen::MatrixXd states = Eigen::MatrixXd::Ones(1, 1);
  const auto dq_da = [](const Eigen::MatrixXd& a) { return Eigen::MatrixXd((-2.0 * (a.array() - 0.3)).matrix()); };
  double previous = std::abs(crl::deterministic_actions(actor, scaling, states)(0, 0) - 0.3);
  for (int k = 0; k < 200; ++k) {
    actor.params -= 0.05 * crl::deterministic_policy_loss_gradient(actor, scaling, states, dq_da);
    const double gap = std::abs(crl::deterministic_actions(actor, scaling, states)(0, 0) - 0.3);
    ASSERT_LE(gap, previous);
    previous = gap;
  }
  EXPECT_LT(previous, 1e-3);
}

TEST(Ddpg, ExplorationNoiseIsGaussianAndClipped) {
  auto config = small_config("ddpg");
  config.exploration_std = 0.1;
  crl::DdpgAgent agent(config, crl::BoxSpace{{-1.0}, {1.0}}, crl::BoxSpace{{-2.0}, {2.0}}, 5, false);
  const crl::Observation s{0.2};
  const double mu = agent.act(s, crl::ActMode::greedy).values[0];
  const int n = 20'000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = agent.act(s, crl::ActMode::explore).values[0];
    ASSERT_GE(a, -2.0);
    ASSERT_LE(a, 2.0);
    sum += a - mu;
    sq += (a - mu) * (a - mu);
  }
  // Noise is scaled by the action half-width (2).
  EXPECT_NEAR(sum / n, 0.0, 4.0 * 0.2 / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(sq / n), 0.2, 0.01);
}

TEST(Td3, TargetNoiseIsClipped) {
  EXPECT_EQ(crl::clipped_target_noise(0.7, 0.5), 0.5);
  EXPECT_EQ(crl::clipped_target_noise(-0.9, 0.5), -0.5);
  EXPECT_EQ(crl::clipped_target_noise(0.2, 0.5), 0.2);
}

TEST(Td3, ActorUpdatesEveryOtherCriticUpdate) {
  auto config = small_config("td3");
  crl::DdpgAgent agent(config, crl::BoxSpace{{-1, -1}, {1, 1}}, crl::BoxSpace{{-1.0}, {1.0}}, 3, true);
  crl::Rng rng(6);
  for (int k = 0; k < 10; ++k) agent.update(random_continuous_batch(2, 1, 4, rng));
  EXPECT_EQ(agent.critic_updates(), 10);
  EXPECT_EQ(agent.actor_updates(), 5);

  crl::DdpgAgent ddpg(config, crl::BoxSpace{{-1, -1}, {1, 1}}, crl::BoxSpace{{-1.0}, {1.0}}, 3, false);
  for (int k = 0; k < 10; ++k) ddpg.update(random_continuous_batch(2, 1, 4, rng));
  EXPECT_EQ(ddpg.actor_updates(), 10);
}

TEST(Td3, IdenticalTwinsGiveDdpgTarget) {
  auto config = small_config("td3");
  config.target_noise_std = 0.0;
  config.centering = {CenteringMode::td_based, 0.01, 0.4};
  crl::DdpgAgent agent(config, crl::BoxSpace{{-1, -1}, {1, 1}}, crl::BoxSpace{{-2.0}, {2.0}}, 9, true);
  agent.critic_target(1) = agent.critic_target(0);
  crl::Rng rng(1);
  const auto batch = random_continuous_batch(2, 1, 6, rng);
  crl::Rng noise(2);
  const Eigen::VectorXd targets = agent.td_targets(batch, noise);
  for (int i = 0; i < 6; ++i) {
    const double a = 2.0 * std::tanh(crl::mlp_forward(agent.actor().spec, agent.actor_target(), batch.next_states.col(i))(0));
    Eigen::VectorXd input(3);
    input << batch.next_states.col(i), a;
    const double q = crl::mlp_forward(agent.critic(0).spec, agent.critic_target(0), input)(0);
    EXPECT_NEAR(targets(i), batch.rewards(i) - 0.4 + 0.99 * q, 1e-12);
  }
}

// ---------------------------------------------------------------------------
// SAC

TEST(Sac, TargetEntropyRule) {
  crl::AgentConfig config;
  EXPECT_EQ(crl::sac_target_entropy(config, 1), -1.0);
  config.target_entropy_offset = -3.0;
  EXPECT_EQ(crl::sac_target_entropy(config, 2), -5.0);
  config.target_entropy = 0.5;
  EXPECT_EQ(crl::sac_target_entropy(config, 2), 0.5);
}

TEST(Sac, AutotuneRaisesTemperatureWhenEntropyIsTooLow) {
  // A near-deterministic policy has large log-densities, so the entropy is
  // below target and descent on log kappa must increase kappa.
  const Eigen::VectorXd log_probs = Eigen::VectorXd::Constant(16, 8.0);
  EXPECT_LT(crl::sac_temperature_gradient(log_probs, -1.0), 0.0);
  const Eigen::VectorXd diffuse = Eigen::VectorXd::Constant(16, -3.0);
  EXPECT_GT(crl::sac_temperature_gradient(diffuse, -1.0), 0.0);
}

TEST(Sac, SquashedGaussianLogProbMatchesChangeOfVariables) {
  crl::Rng rng(3);
  crl::Network actor(crl::MlpSpec{{2, 6, 2}, crl::Activation::tanh}, rng, 1e-3);
  const crl::ActionScaling scaling(crl::BoxSpace{{-2.0}, {2.0}});
  const Eigen::MatrixXd states = Eigen::MatrixXd::Random(2, 5);
  const Eigen::MatrixXd noise = Eigen::MatrixXd::Random(1, 5);
  const auto s = crl::squashed_gaussian_sample(actor, scaling, states, noise);
  const Eigen::MatrixXd out = actor.forward(states);
  for (int i = 0; i < 5; ++i) {
    const double std = std::exp(s.log_std(0, i));
    const double u = out(0, i) + std * noise(0, i);
    const double gauss = -0.5 * noise(0, i) * noise(0, i) - std::log(std) - 0.5 * std::log(2 * std::numbers::pi);
    const double expected = gauss - std::log(2.0 * (1.0 - std::tanh(u) * std::tanh(u)));
    EXPECT_NEAR(s.log_prob(i), expected, 1e-5);
    EXPECT_NEAR(s.actions(0, i), 2.0 * std::tanh(u), 1e-12);
    EXPECT_GE(s.log_std(0, i), crl::kSacLogStdMin);
    EXPECT_LE(s.log_std(0, i), crl::kSacLogStdMax);
  }
}

TEST(SacDiscrete, SoftValueDegenerateCases) {
  EXPECT_EQ(crl::sac_discrete_soft_value(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(3.0, 3.0), 0.0), 3.0);
  EXPECT_EQ(crl::sac_discrete_soft_value(Eigen::Vector3d(0, 1, 0), Eigen::Vector3d(1, 2, 3), 0.7), 2.0);
  EXPECT_NEAR(crl::sac_discrete_soft_value(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.0, 0.0), 1.0), std::log(2.0),
              1e-15);
}

TEST(SacDiscrete, ExpectedTargetMatchesMonteCarlo) {
  const Eigen::Vector4d probs(0.1, 0.4, 0.3, 0.2);
  const Eigen::Vector4d q(1.0, -0.5, 2.0, 0.25);
  const double kappa = 0.3;
  const double exact = crl::sac_discrete_soft_value(probs, q, kappa);
  crl::Rng rng(11);
  const int n = 100'000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const int a = crl::sample_index(probs, rng);
    const double x = q(a) - kappa * std::log(probs(a));
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_LT(std::abs(mean - exact), 3.0 * se);
}

TEST(SacDiscrete, LogitGradientMatchesFiniteDifferences) {
  const Eigen::Vector3d logits(0.2, -0.4, 1.1);
  const Eigen::Vector3d q(1.0, 0.5, -0.2);
  const double kappa = 0.25;
  const auto objective = [&](const Eigen::Vector3d& z) {
    const Eigen::VectorXd p = crl::softmax_columns(z);
    double sum = 0.0;
    for (int a = 0; a < 3; ++a) sum += p(a) * (kappa * std::log(p(a)) - q(a));
    return sum;
  };
  const Eigen::VectorXd g = crl::sac_discrete_logit_gradient(crl::softmax_columns(logits), q, kappa);
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d plus = logits, minus = logits;
    plus(k) += 1e-6;
    minus(k) -= 1e-6;
    EXPECT_NEAR(g(k), (objective(plus) - objective(minus)) / 2e-6, 1e-8);
  }
}

// ---------------------------------------------------------------------------
// PPO

TEST(Ppo, GaeDegenerateCases) {
  const Eigen::Vector3d deltas(1.0, -2.0, 0.5);
  EXPECT_EQ(crl::gae_advantages(deltas, 0.7, 0.0), Eigen::VectorXd(deltas));
  const auto telescoped = crl::gae_advantages(Eigen::Vector2d(0.25, 0.5), 1.0, 1.0);
  EXPECT_EQ(telescoped(0), 0.75);
  EXPECT_EQ(telescoped(1), 0.5);
  const auto discounted = crl::gae_advantages(Eigen::Vector3d(1, 1, 1), 0.5, 1.0);
  EXPECT_EQ(discounted(0), 1.75);
}

TEST(Ppo, RatioOneGivesScoreGradient) {
  for (bool discrete : {true, false}) {
    crl::AgentConfig config = small_config("ppo");
    crl::Rng rng(5);
    const crl::Space obs = crl::BoxSpace{{-1, -1, -1}, {1, 1, 1}};
    const crl::Space act = discrete ? crl::Space{crl::DiscreteSpace{3}} : crl::Space{crl::BoxSpace{{-1, -1}, {1, 1}}};
    const auto policy = crl::make_ppo_policy(obs, act, config, rng);
    const Eigen::MatrixXd states = Eigen::MatrixXd::Random(3, 10);
    Eigen::MatrixXd actions;
    if (discrete) {
      actions = Eigen::MatrixXd(1, 10);
      for (int i = 0; i < 10; ++i) actions(0, i) = i % 3;
    } else {
      actions = Eigen::MatrixXd::Random(2, 10);
    }
    const Eigen::VectorXd advantages = Eigen::VectorXd::Random(10);
    const auto old = crl::evaluate_policy(policy, states, actions).log_prob;
    const auto clipped = crl::ppo_policy_loss_gradient(policy, states, actions, old, advantages, 0.2, 0.0);
    const auto score = crl::policy_score_gradient(policy, states, actions, advantages);
    EXPECT_LT((clipped - score).cwiseAbs().maxCoeff(), 1e-8) << (discrete ? "categorical" : "gaussian");
  }
}

TEST(Ppo, TrainsOncePerRound) {
  auto config = small_config("ppo");
  config.round_length = 16;
  config.minibatch_size = 8;
  config.epochs = 2;
  config.centering = {CenteringMode::td_based, 0.01, 0.0};
  crl::PpoAgent agent(config, crl::DiscreteSpace{3}, crl::DiscreteSpace{2}, 1);
  crl::Observation s{0.0};
  for (int t = 0; t < 40; ++t) {
    const auto a = agent.act(s, crl::ActMode::explore);
    const crl::Observation next{double((t + 1) % 3)};
    agent.observe({s, a, 1.0, next});
    s = next;
  }
  EXPECT_EQ(agent.rounds(), 2);
  EXPECT_GT(agent.estimator().value(), 0.0);
}

// ---------------------------------------------------------------------------
// Action selection

TEST(Warmup, ResetBiasedTrailingDimension) {
  const crl::BoxSpace space{{-2.0, 0.0}, {2.0, 1.0}};
  crl::Rng rng(13);
  const int n = 1'000'000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto a = crl::reset_biased_warmup_action(space, rng);
    ASSERT_GE(a.values[0], -2.0);
    ASSERT_LE(a.values[0], 2.0);
    sum += a.values[1];
    sq += a.values[1] * a.values[1];
  }
  double harmonic = 0.0;
  for (int k = 1; k <= 1000; ++k) harmonic += 1.0 / k;
  const double expected = harmonic / 1000.0;
  EXPECT_NEAR(expected, 0.007485, 1e-6);
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_LT(std::abs(mean - expected), 3.0 * se);
}

TEST(Warmup, UniformOverBox) {
  crl::Rng rng(14);
  const crl::BoxSpace space{{-1.0, 10.0}, {1.0, 20.0}};
  double sum = 0.0;
  for (int i = 0; i < 10'000; ++i) {
    const auto a = crl::uniform_action(space, rng);
    ASSERT_GE(a.values[1], 10.0);
    ASSERT_LE(a.values[1], 20.0);
    sum += a.values[1];
  }
  EXPECT_NEAR(sum / 10'000, 15.0, 0.15);
}

TEST(Factory, BuildsEveryAlgorithm) {
  const crl::Space tab = crl::DiscreteSpace{4};
  const crl::Space grid = crl::BoxSpace{{0, 0}, {1, 1}};
  const crl::Space box = crl::BoxSpace{{-1.0}, {1.0}};
  const crl::Space choices = crl::DiscreteSpace{3};
  for (const char* name : {"td0", "q_learning", "relative_q", "random"}) {
    EXPECT_NE(crl::make_agent(small_config(name), tab, choices, 1), nullptr) << name;
  }
  for (const char* name : {"dqn", "sac_discrete", "ppo"}) {
    EXPECT_NE(crl::make_agent(small_config(name), grid, choices, 1), nullptr) << name;
  }
  for (const char* name : {"ddpg", "td3", "sac", "ppo"}) {
    EXPECT_NE(crl::make_agent(small_config(name), grid, box, 1), nullptr) << name;
  }
  EXPECT_THROW(crl::make_agent(small_config("dqn"), grid, box, 1), std::invalid_argument);
  EXPECT_THROW(crl::make_agent(small_config("ddpg"), grid, choices, 1), std::invalid_argument);
  EXPECT_THROW(crl::make_agent(small_config("nope"), grid, choices, 1), std::invalid_argument);
}

TEST(Factory, RejectsUndiscountedWithoutCentering) {
  auto config = small_config("dqn");
  config.gamma = 1.0;
  EXPECT_THROW(crl::validate(config), std::invalid_argument);
  config.centering.mode = CenteringMode::td_based;
  EXPECT_NO_THROW(crl::validate(config));
}
