#include "crl/checks.hpp"

#include "crl/actor_critic.hpp"
#include "crl/dqn.hpp"
#include "crl/ppo.hpp"
#include "crl/sac.hpp"
#include "crl/tabular.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

namespace crl {

namespace fs = std::filesystem;

namespace {

CheckResult make_result(int id, std::string name, bool passed, std::string summary) {
  return {id, std::move(name), passed, std::move(summary)};
}

int default_workers() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

double span(const Eigen::VectorXd& v) { return v.maxCoeff() - v.minCoeff(); }

/// Rewards rounded to multiples of 1/64, so r + 100 is exact.
DiscreteMdp dyadic_mdp(std::uint64_t seed, int states, int actions) {
  DiscreteMdp mdp = generate_random_mdp(seed, states, actions, 1.0);
  mdp.reward = (mdp.reward * 64.0).array().round() / 64.0;
  return mdp;
}

Arm catch_dqn_arm(const std::string& name, double gamma, bool centered, double offset) {
  Arm arm;
  arm.name = name;
  ArmSettings& s = arm.settings;
  s.env.kind = EnvKind::catch_game;
  if (offset != 0.0) {
    WrapperSpec w;
    w.kind = WrapperKind::reward_offset;
    w.offset = offset;
    s.wrappers.push_back(w);
  }
  AgentConfig& a = s.agent;
  a = preset_agent_config("desk", "dqn");
  a.gamma = gamma;
  a.hidden = {32, 32};
  a.critic_lr = 1e-3;
  a.batch_size = 32;
  a.train_every = 4;
  a.replay_capacity = 50'000;
  a.warmup_steps = 1'000;
  a.learning_starts = 1'000;
  a.epsilon_start = 1.0;
  a.epsilon_end = 0.05;
  a.epsilon_decay_steps = 20'000;
  a.target_update_every = 1'000;
  if (centered) {
    a.centering.mode = CenteringMode::td_based;
    a.centering.beta = 3e-2;
  }
  s.steps = 200'000;
  s.log_stride = 100;
  s.window = 10'000;
  return arm;
}

std::vector<std::uint64_t> ten_seeds() { return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}; }

}  // namespace

// ---------------------------------------------------------------------------
// TD(0) with centering converges to the shifted values.

CheckResult check_td0_convergence() {
  constexpr double gamma = 0.99, eta = 0.1;
  constexpr long steps = 500'000;
  int passed = 0;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const std::uint64_t seed = 1'000 + static_cast<std::uint64_t>(i);
    const int S = 4 + i % 7;
    const int A = 2 + i % 2;
    auto mdp = std::make_shared<const DiscreteMdp>(generate_random_mdp(seed, S, A, 1.0));
    if (!is_weakly_communicating(*mdp)) {
      return make_result(1, "td0-convergence", false, fmt::format("instance {} is not weakly communicating", i));
    }
    const TabularPolicy policy = generate_random_policy(seed, S, A);
    const Eigen::VectorXd v = exact_discounted_values(*mdp, policy, gamma);
    const Eigen::VectorXd expected =
        v.array() - eta / (1.0 - gamma + eta * static_cast<double>(S)) * v.sum();

    AgentConfig config = preset_agent_config("desk", "td0");
    config.gamma = gamma;
    config.alpha = 0.5;
    config.alpha_decay_steps = 1e4;
    config.eta = eta;
    config.centering.mode = CenteringMode::td_based;
    TabularEnv env(mdp, child_stream(seed, "env"));
    TabularTd0Agent agent(config, S, A, policy, seed);
    Observation obs = env.observation();
    for (long t = 0; t < steps; ++t) {
      const Action action = agent.act(obs, ActMode::explore);
      EnvStep step = env.step(action);
      agent.observe({obs, action, step.reward, step.observation});
      obs = std::move(step.observation);
    }
    const double error = (agent.values() - expected).cwiseAbs().maxCoeff() / span(v);
    worst = std::max(worst, error);
    if (error < 0.05) {
      ++passed;
    }
  }
  return make_result(1, "td0-convergence", passed >= 18,
                     fmt::format("{}/20 instances within 5% of span (worst relative error {:.4f})", passed, worst));
}

// ---------------------------------------------------------------------------
// d^T v = r / (1 - gamma).

CheckResult check_laurent() {
  Rng rng(20'240'601);
  double worst = 0.0;
  bool ok = true;
  for (int i = 0; i < 50; ++i) {
    const auto seed = static_cast<std::uint64_t>(i);
    const int S = 2 + static_cast<int>(uniform01(rng) * 12);
    const int A = 1 + static_cast<int>(uniform01(rng) * 4);
    const double gamma = 0.5 + 0.499 * uniform01(rng);
    const DiscreteMdp mdp = generate_random_mdp(seed, S, A, 1.0 + 9.0 * uniform01(rng));
    const TabularPolicy policy = generate_random_policy(seed + 7, S, A);
    const ExactSolution sol = solve_exact(mdp, policy, gamma);
    const double gap = std::abs(sol.d_pi.dot(sol.v_pi) - sol.reward_rate / (1.0 - gamma));
    const double scaled = gap * (1.0 - gamma);
    worst = std::max(worst, scaled);
    ok = ok && gap < 1e-6 / (1.0 - gamma);
  }
  return make_result(2, "laurent", ok, fmt::format("50 triples, worst |d.v - r/(1-g)| * (1-g) = {:.3g}", worst));
}

// ---------------------------------------------------------------------------
// Offsetting rewards and r-bar by the same constant changes nothing.

CheckResult check_shift_equivariance() {
  constexpr double c = 100.0;
  constexpr long steps = 10'000;
  std::vector<std::string> notes;
  bool ok = true;

  // Tabular Q-learning, bitwise.
  for (std::uint64_t seed : {3ULL, 4ULL, 5ULL}) {
    auto mdp = std::make_shared<const DiscreteMdp>(dyadic_mdp(seed, 6, 3));
    AgentConfig base = preset_agent_config("desk", "q_learning");
    base.gamma = 0.99;
    base.centering.mode = CenteringMode::td_based;
    AgentConfig shifted = base;
    shifted.centering.initial_rbar = c;
    TabularQAgent plain_agent(base, 6, 3, seed);
    TabularQAgent shifted_agent(shifted, 6, 3, seed);
    TabularEnv plain_env(mdp, child_stream(seed, "env"));
    RewardOffsetWrapper shifted_env(std::make_unique<TabularEnv>(mdp, child_stream(seed, "env")), c);
    Observation o1 = plain_env.observation(), o2 = shifted_env.observation();
    long mismatch = 0;
    for (long t = 1; t <= steps && mismatch == 0; ++t) {
      const Action a1 = plain_agent.act(o1, ActMode::explore);
      const Action a2 = shifted_agent.act(o2, ActMode::explore);
      EnvStep s1 = plain_env.step(a1), s2 = shifted_env.step(a2);
      plain_agent.observe({o1, a1, s1.reward, s1.observation});
      shifted_agent.observe({o2, a2, s2.reward, s2.observation});
      if (!(a1 == a2) || plain_agent.q() != shifted_agent.q()) mismatch = t;
      o1 = std::move(s1.observation);
      o2 = std::move(s2.observation);
    }
    if (mismatch != 0) {
      ok = false;
      notes.push_back(fmt::format("tabular seed {} diverged at step {}", seed, mismatch));
    }
  }

  // DQN on Catch, parameters within 1e-9 relative.
  double worst = 0.0;
  for (std::uint64_t seed : {0ULL, 1ULL}) {
    AgentConfig base = catch_dqn_arm("x", 0.99, true, 0.0).settings.agent;
    base.warmup_steps = 500;
    base.learning_starts = 500;
    AgentConfig shifted = base;
    shifted.centering.initial_rbar = c;
    CatchEnv plain_env(child_stream(seed, "env"));
    RewardOffsetWrapper shifted_env(std::make_unique<CatchEnv>(child_stream(seed, "env")), c);
    DqnAgent plain_agent(base, plain_env.observation_space(), 3, seed);
    DqnAgent shifted_agent(shifted, shifted_env.observation_space(), 3, seed);
    Observation o1 = plain_env.observation(), o2 = shifted_env.observation();
    for (long t = 1; t <= steps; ++t) {
      const ActMode mode = t <= base.warmup_steps ? ActMode::warmup : ActMode::explore;
      const Action a1 = plain_agent.act(o1, mode);
      const Action a2 = shifted_agent.act(o2, mode);
      EnvStep s1 = plain_env.step(a1), s2 = shifted_env.step(a2);
      plain_agent.observe({o1, a1, s1.reward, s1.observation});
      shifted_agent.observe({o2, a2, s2.reward, s2.observation});
      o1 = std::move(s1.observation);
      o2 = std::move(s2.observation);
      if (t % 500 == 0 || t == steps) {
        const ParamVector& p1 = plain_agent.critic().params;
        const ParamVector& p2 = shifted_agent.critic().params;
        const double rel = (p1 - p2).cwiseAbs().maxCoeff() / std::max(1e-300, p1.cwiseAbs().maxCoeff());
        worst = std::max(worst, rel);
      }
    }
    if (plain_agent.updates() == 0) {
      ok = false;
      notes.push_back("DQN never updated");
    }
  }
  if (worst >= 1e-9) {
    ok = false;
  }
  notes.push_back(fmt::format("tabular bitwise over 3 seeds, DQN max relative parameter gap {:.3g}", worst));
  std::string summary;
  for (const auto& n : notes) summary += (summary.empty() ? "" : "; ") + n;
  return make_result(3, "shift-equivariance", ok, summary);
}

// ---------------------------------------------------------------------------
// DQN on continuing Catch.

ExperimentConfig offset_harm_config() {
  ExperimentConfig config;
  config.name = "catch_offset";
  config.seeds = ten_seeds();
  config.arms = {catch_dqn_arm("plain", 0.99, false, 0.0), catch_dqn_arm("plain_offset", 0.99, false, 100.0),
                 catch_dqn_arm("centered", 0.99, true, 0.0), catch_dqn_arm("centered_offset", 0.99, true, 100.0)};
  return config;
}

ExperimentConfig large_gamma_config() {
  ExperimentConfig config;
  config.name = "catch_large_gamma";
  config.seeds = ten_seeds();
  config.arms = {catch_dqn_arm("plain", 0.999, false, 0.0), catch_dqn_arm("centered", 0.999, true, 0.0)};
  return config;
}

namespace {

const ArmSummary& find_arm(const std::vector<ArmSummary>& arms, const std::string& name) {
  for (const auto& a : arms) {
    if (a.name == name) return a;
  }
  throw std::logic_error("missing arm " + name);
}

/// Final windowed rates with the offset removed, so every arm is measured on
/// the same reward scale.
std::vector<ArmSummary> catch_finals(const ExperimentConfig& config) {
  const SweepResult sweep = run_experiment(config, default_workers());
  std::map<std::string, long> windows;
  for (const auto& arm : config.arms) windows[arm.name] = arm.settings.window;
  auto arms = summarize_arms(sweep, windows);
  for (auto& summary : arms) {
    double offset = 0.0;
    for (const auto& arm : config.arms) {
      if (arm.name != summary.name) continue;
      for (const auto& w : arm.settings.wrappers) {
        if (w.kind == WrapperKind::reward_offset) offset += w.offset;
      }
    }
    for (double& f : summary.finals) f -= offset;
    summary.final_rate = summarize(summary.finals);
  }
  return arms;
}

std::string describe(const ArmSummary& a) {
  return fmt::format("{} {:.4f}+-{:.4f} (n={}, failed {})", a.name, a.final_rate.mean, a.final_rate.std_error,
                     a.finals.size(), a.failures);
}

}  // namespace

CheckResult check_offset_harm() {
  const auto arms = catch_finals(offset_harm_config());
  const ArmSummary& plain = find_arm(arms, "plain");
  const ArmSummary& plain_offset = find_arm(arms, "plain_offset");
  const ArmSummary& centered = find_arm(arms, "centered");
  const ArmSummary& centered_offset = find_arm(arms, "centered_offset");
  const auto enough = [](const ArmSummary& a) { return a.finals.size() >= 2; };
  if (!enough(plain) || !enough(plain_offset) || !enough(centered) || !enough(centered_offset)) {
    return make_result(4, "offset-harm", false, "fewer than two successful runs in some arm");
  }
  const WelchResult harm = welch_t_test(plain_offset.finals, plain.finals);
  const WelchResult removed = welch_t_test(centered_offset.finals, centered.finals);
  const bool a_ok = plain_offset.final_rate.mean < plain.final_rate.mean && harm.p < 0.05;
  const bool b_ok = removed.p >= 0.05;
  return make_result(4, "offset-harm", a_ok && b_ok,
                     fmt::format("(a) {} vs {}: p={:.3g} [{}]; (b) {} vs {}: p={:.3g} [{}]", describe(plain_offset),
                                 describe(plain), harm.p, a_ok ? "ok" : "fail", describe(centered_offset),
                                 describe(centered), removed.p, b_ok ? "ok" : "fail"));
}

CheckResult check_large_gamma() {
  const auto arms = catch_finals(large_gamma_config());
  const ArmSummary& plain = find_arm(arms, "plain");
  const ArmSummary& centered = find_arm(arms, "centered");
  if (centered.finals.size() < 2 || plain.finals.size() < 2) {
    return make_result(5, "large-gamma", false, "fewer than two successful runs in some arm");
  }
  const WelchResult w = welch_t_test(centered.finals, plain.finals);
  const bool ok = centered.final_rate.mean >= plain.final_rate.mean && w.p < 0.05;
  return make_result(5, "large-gamma", ok,
                     fmt::format("{} vs {}: p={:.3g}", describe(centered), describe(plain), w.p));
}

// ---------------------------------------------------------------------------
// Wrapper statistics.

CheckResult check_wrappers() {
  constexpr double p = 0.001;
  constexpr long steps = 1'000'000;
  auto mdp = std::make_shared<const DiscreteMdp>(generate_random_mdp(11, 5, 2, 1.0));
  RandomResetWrapper env(std::make_unique<TabularEnv>(mdp, child_stream(11, "env")), p, child_stream(11, "reset/0"));
  Rng policy_rng = child_stream(11, "explore");
  const Space actions = env.action_space();
  long resets = 0;
  for (long t = 0; t < steps; ++t) {
    resets += env.step(uniform_action(actions, policy_rng)).reset_occurred ? 1 : 0;
  }
  const double expected = p * static_cast<double>(steps);
  const double sigma = std::sqrt(static_cast<double>(steps) * p * (1.0 - p));
  const bool reset_ok = std::abs(static_cast<double>(resets) - expected) <= 3.0 * sigma;

  double harmonic = 0.0, second = 0.0;
  for (int n = 1; n <= 1000; ++n) {
    harmonic += 1.0 / n;
    second += 1.0 / (static_cast<double>(n) * n);
  }
  const double mean_exact = harmonic / 1000.0;
  const double var_exact = second / 1000.0 - mean_exact * mean_exact;
  const BoxSpace box{{-2.0, 0.0}, {2.0, 1.0}};
  Rng warmup_rng = child_stream(12, "explore");
  double sum = 0.0;
  for (long i = 0; i < steps; ++i) {
    sum += reset_biased_warmup_action(box, warmup_rng).values.back();
  }
  const double mean = sum / static_cast<double>(steps);
  const double mean_sigma = std::sqrt(var_exact / static_cast<double>(steps));
  const bool warmup_ok = std::abs(mean - mean_exact) <= 3.0 * mean_sigma;
  return make_result(6, "wrappers", reset_ok && warmup_ok,
                     fmt::format("resets {} (expected {:.0f} +- {:.1f}); warmup mean {:.6f} (expected {:.6f} +- {:.2g})",
                                 resets, expected, 3.0 * sigma, mean, mean_exact, 3.0 * mean_sigma));
}

// ---------------------------------------------------------------------------
// Backpropagation against central differences.

CheckResult check_gradients() {
  Rng rng(7'777);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto pick = [&](int lo, int hi) { return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1)); };
  double worst = 0.0;
  for (Activation act : {Activation::relu, Activation::tanh}) {
    for (int draw = 0; draw < 20; ++draw) {
      MlpSpec spec;
      spec.activation = act;
      spec.layer_widths.push_back(pick(1, 6));
      const int hidden_layers = pick(1, 3);
      for (int l = 0; l < hidden_layers; ++l) spec.layer_widths.push_back(pick(1, 8));
      spec.layer_widths.push_back(pick(1, 4));
      ParamVector params = init_params(spec, rng);
      Eigen::VectorXd input(spec.input_size()), seed(spec.output_size());
      for (auto& x : input) x = normal(rng);
      for (auto& x : seed) x = normal(rng);
      const ParamVector analytic = mlp_gradient(spec, params, seed, input);
      ParamVector numeric(params.size());
      constexpr double h = 1e-5;
      for (Eigen::Index k = 0; k < params.size(); ++k) {
        ParamVector plus = params, minus = params;
        plus(k) += h;
        minus(k) -= h;
        numeric(k) = (seed.dot(mlp_forward(spec, plus, input)) - seed.dot(mlp_forward(spec, minus, input))) / (2 * h);
      }
      const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-8});
      worst = std::max(worst, (analytic - numeric).cwiseAbs().maxCoeff() / scale);
    }
  }
  return make_result(7, "gradients", worst < 1e-4,
                     fmt::format("40 draws (relu, tanh), max relative error {:.3g}", worst));
}

// ---------------------------------------------------------------------------
// Reductions between algorithm variants.

CheckResult check_reductions() {
  Rng rng(8'888);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::string> notes;
  bool ok = true;

  // GAE with lambda = 0 is the TD error.
  Eigen::VectorXd deltas(64);
  for (auto& d : deltas) d = normal(rng);
  const bool gae_ok = gae_advantages(deltas, 0.99, 0.0) == deltas;
  ok = ok && gae_ok;
  notes.push_back(fmt::format("gae {}", gae_ok ? "exact" : "MISMATCH"));

  // At ratio 1 the clipped surrogate has the plain policy-gradient gradient.
  double ppo_gap = 0.0;
  for (bool discrete : {true, false}) {
    const Space obs_space = BoxSpace{std::vector<double>(4, -1.0), std::vector<double>(4, 1.0)};
    const Space act_space = discrete ? Space{DiscreteSpace{3}} : Space{BoxSpace{{-1.0, -1.0}, {1.0, 1.0}}};
    AgentConfig config = preset_agent_config("desk", "ppo");
    config.hidden = {16, 16};
    config.initial_log_std = -0.5;
    const PpoPolicy policy = make_ppo_policy(obs_space, act_space, config, rng);
    constexpr int n = 32;
    Eigen::MatrixXd states(4, n), actions(discrete ? 1 : 2, n);
    Eigen::VectorXd adv(n);
    for (auto& x : states.reshaped()) x = normal(rng);
    for (auto& x : adv) x = normal(rng);
    for (int i = 0; i < n; ++i) {
      for (Eigen::Index d = 0; d < actions.rows(); ++d) {
        actions(d, i) = discrete ? static_cast<double>(static_cast<int>(uniform01(rng) * 3)) : normal(rng);
      }
    }
    const Eigen::VectorXd old_log_prob = evaluate_policy(policy, states, actions).log_prob;
    const ParamVector clipped = ppo_policy_loss_gradient(policy, states, actions, old_log_prob, adv, 0.2, 0.0);
    const ParamVector plain = policy_score_gradient(policy, states, actions, adv);
    ppo_gap = std::max(ppo_gap, (clipped - plain).cwiseAbs().maxCoeff());
  }
  const bool ppo_ok = ppo_gap < 1e-8;
  ok = ok && ppo_ok;
  notes.push_back(fmt::format("ppo ratio-1 gap {:.3g}", ppo_gap));

  // Twin critics with identical targets give the single-critic target.
  {
    const Space obs_space = BoxSpace{std::vector<double>(3, -1.0), std::vector<double>(3, 1.0)};
    const BoxSpace act_space{{-2.0}, {2.0}};
    AgentConfig config = preset_agent_config("desk", "td3");
    config.hidden = {16, 16};
    config.target_noise_std = 0.0;
    config.centering.mode = CenteringMode::td_based;
    config.centering.initial_rbar = 0.25;
    DdpgAgent twin(config, obs_space, act_space, 5, true);
    DdpgAgent single(config, obs_space, act_space, 5, false);
    twin.critic_target(1) = twin.critic_target(0);
    single.actor_target() = twin.actor_target();
    single.critic_target(0) = twin.critic_target(0);
    ContinuousBatch batch;
    batch.states = Eigen::MatrixXd(3, 16);
    batch.next_states = Eigen::MatrixXd(3, 16);
    batch.actions = Eigen::MatrixXd(1, 16);
    batch.rewards = Eigen::VectorXd(16);
    for (auto& x : batch.states.reshaped()) x = normal(rng);
    for (auto& x : batch.next_states.reshaped()) x = normal(rng);
    for (auto& x : batch.actions.reshaped()) x = std::tanh(normal(rng)) * 2.0;
    for (auto& x : batch.rewards) x = normal(rng);
    Rng noise_a(1), noise_b(1);
    const bool twin_ok = twin.td_targets(batch, noise_a) == single.td_targets(batch, noise_b);
    ok = ok && twin_ok;
    notes.push_back(fmt::format("twin min {}", twin_ok ? "exact" : "MISMATCH"));
  }

  // Discrete SAC soft value against Monte Carlo.
  {
    Eigen::VectorXd logits(4), min_q(4);
    for (auto& x : logits) x = normal(rng);
    for (auto& x : min_q) x = 3.0 * normal(rng);
    const Eigen::VectorXd probs = softmax_columns(logits);
    constexpr double kappa = 0.3;
    const double exact = sac_discrete_soft_value(probs, min_q, kappa);
    constexpr long samples = 100'000;
    double sum = 0.0, sum_sq = 0.0;
    for (long i = 0; i < samples; ++i) {
      const int a = sample_index(probs, rng);
      const double x = min_q(a) - kappa * std::log(probs(a));
      sum += x;
      sum_sq += x * x;
    }
    const double mean = sum / samples;
    const double se = std::sqrt((sum_sq / samples - mean * mean) / (samples - 1));
    const bool mc_ok = std::abs(mean - exact) <= 3.0 * se;
    ok = ok && mc_ok;
    notes.push_back(fmt::format("sac-discrete exact {:.5f} vs MC {:.5f} +- {:.5f}", exact, mean, 3.0 * se));
  }

  std::string summary;
  for (const auto& note : notes) summary += (summary.empty() ? "" : "; ") + note;
  return make_result(8, "reductions", ok, summary);
}

// ---------------------------------------------------------------------------
// A larger reset cost teaches policies that reset less.

DiscreteMdp reset_cost_mdp() {
  constexpr int ring = 5;
  const std::vector<double> risk{0.05, 0.08, 0.15, 0.2, 0.3};
  DiscreteMdp mdp;
  mdp.num_states = ring + 1;
  mdp.num_actions = 2;
  mdp.transition.assign(2, Eigen::MatrixXd::Zero(ring + 1, ring + 1));
  mdp.reward = Eigen::MatrixXd::Zero(ring + 1, 2);
  for (int s = 0; s < ring; ++s) {
    const int next = (s + 1) % ring;
    mdp.transition[0](s, next) = 1.0;
    mdp.transition[1](s, next) = 1.0 - risk[static_cast<std::size_t>(s)];
    mdp.transition[1](s, ring) = risk[static_cast<std::size_t>(s)];
    mdp.reward(s, 1) = 1.0;
  }
  mdp.transition[0](ring, 0) = 1.0;
  mdp.transition[1](ring, 0) = 1.0;
  mdp.initial_dist = Eigen::VectorXd::Zero(ring + 1);
  mdp.initial_dist(0) = 1.0;
  validate(mdp);
  return mdp;
}

DiscreteMdp reset_as_transition_mdp(const DiscreteMdp& mdp, const std::vector<int>& failure_states,
                                    double reset_cost) {
  DiscreteMdp out = mdp;
  for (int a = 0; a < mdp.num_actions; ++a) {
    auto& P = out.transition[static_cast<std::size_t>(a)];
    for (int s = 0; s < mdp.num_states; ++s) {
      double fail = 0.0;
      for (int f : failure_states) {
        fail += P(s, f);
        P(s, f) = 0.0;
      }
      P.row(s) += fail * mdp.initial_dist.transpose();
      out.reward(s, a) -= reset_cost * fail;
    }
  }
  return out;
}

double exact_reset_rate(const DiscreteMdp& mdp, const std::vector<int>& failure_states, const TabularPolicy& policy) {
  const DiscreteMdp wrapped = reset_as_transition_mdp(mdp, failure_states, 0.0);
  const Eigen::VectorXd d = stationary_distribution(wrapped, policy);
  double rate = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      double fail = 0.0;
      for (int f : failure_states) fail += mdp.p(s, a, f);
      rate += d(s) * policy.probs(s, a) * fail;
    }
  }
  return rate;
}

CheckResult check_reset_cost() {
  const auto mdp = std::make_shared<const DiscreteMdp>(reset_cost_mdp());
  const std::vector<int> failure{5};
  const auto learn = [&](double cost, std::uint64_t seed) {
    AgentConfig config = preset_agent_config("desk", "q_learning");
    config.gamma = 0.99;
    config.alpha = 0.1;
    config.tabular_epsilon = 0.1;
    config.centering.mode = CenteringMode::td_based;
    ResetAsTransitionWrapper env(std::make_unique<TabularEnv>(mdp, child_stream(seed, "env")),
                                 failure_states(failure), ResetConfig{cost}, child_stream(seed, "reset/0"));
    TabularQAgent agent(config, mdp->num_states, mdp->num_actions, seed);
    Observation obs = env.observation();
    for (long t = 0; t < 200'000; ++t) {
      const Action action = agent.act(obs, ActMode::explore);
      EnvStep step = env.step(action);
      agent.observe({obs, action, step.reward, step.observation});
      obs = std::move(step.observation);
    }
    return TabularPolicy::deterministic(greedy_actions(agent.q()), mdp->num_actions);
  };
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double high = 1e4 * exact_reset_rate(*mdp, failure, learn(10.0, seed));
    const double low = 1e4 * exact_reset_rate(*mdp, failure, learn(1.0, seed));
    if (high < low) ++wins;
    if (seed == 0) detail = fmt::format("seed 0: {:.1f} vs {:.1f} resets per 1e4 steps", high, low);
  }
  return make_result(9, "reset-cost", wins >= 8, fmt::format("cost 10 resets less in {}/10 seeds ({})", wins, detail));
}

// ---------------------------------------------------------------------------
// Welch and percentage improvement.

CheckResult check_statistics() {
  const std::vector<double> a{0.0, 1.0}, b{10.0, 11.0};
  const WelchResult w = welch_t_test(a, b);
  const Improvement imp = percent_improvement(2.0, 1.5, 1.0);
  const bool ok = std::abs(w.t + 14.1421) < 1e-3 && std::abs(w.df - 2.0) < 1e-6 && imp.value == 1.0 &&
                  imp.applicable;
  return make_result(10, "statistics", ok,
                     fmt::format("t={:.6f} df={:.9f} p={:.3g}; improvement {}", w.t, w.df, w.p, imp.value));
}

// ---------------------------------------------------------------------------
// Golden-file regression of the desk pipeline.

namespace {

std::vector<fs::path> golden_configs(const fs::path& dir) {
  std::vector<fs::path> configs;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".yaml") configs.push_back(entry.path());
    }
  }
  std::sort(configs.begin(), configs.end());
  return configs;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

bool same_cell(const std::string& x, const std::string& y) {
  if (x == y) return true;
  try {
    const double a = std::stod(x), b = std::stod(y);
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
  } catch (const std::exception&) {
    return false;
  }
}

/// Empty when the files agree, otherwise the first difference.
std::string compare_csv(const fs::path& expected, const fs::path& actual) {
  const auto a = read_csv(expected), b = read_csv(actual);
  if (a.size() != b.size()) return fmt::format("{}: {} rows vs {}", expected.filename().string(), a.size(), b.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (a[r].size() != b[r].size()) return fmt::format("{}: row {} width", expected.filename().string(), r);
    for (std::size_t c = 0; c < a[r].size(); ++c) {
      if (!same_cell(a[r][c], b[r][c])) {
        return fmt::format("{}: row {} column {}: {} vs {}", expected.filename().string(), r, c, a[r][c], b[r][c]);
      }
    }
  }
  return "";
}

bool same_json(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) {
    return same_cell(a.dump(), b.dump());
  }
  if (a.type() != b.type() || a.size() != b.size()) return false;
  if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key()) || !same_json(it.value(), b.at(it.key()))) return false;
    }
    return true;
  }
  if (a.is_array()) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!same_json(a[i], b[i])) return false;
    }
    return true;
  }
  return a == b;
}

}  // namespace

void write_golden(const fs::path& golden_dir) {
  for (const auto& path : golden_configs(golden_dir)) {
    const ExperimentConfig config = parse_config(path);
    const fs::path out = golden_dir / path.stem();
    fs::remove_all(out);
    emit_outputs(config, run_experiment(config, 1), out);
  }
}

CheckResult check_golden(const fs::path& golden_dir) {
  const auto configs = golden_configs(golden_dir);
  if (configs.empty()) {
    return make_result(11, "golden", false, "no golden configs in " + golden_dir.string());
  }
  const fs::path scratch = fs::temp_directory_path() / fmt::format("crl-golden-{}", ::getpid());
  std::vector<std::string> problems;
  std::size_t files = 0;
  for (const auto& path : configs) {
    const ExperimentConfig config = parse_config(path);
    const fs::path expected = golden_dir / path.stem();
    const fs::path actual = scratch / path.stem();
    emit_outputs(config, run_experiment(config, 1), actual);
    for (const auto* sub : {"runs", "curves"}) {
      if (!fs::is_directory(expected / sub)) {
        problems.push_back(fmt::format("{}: missing {}", path.stem().string(), sub));
        continue;
      }
      for (const auto& entry : fs::directory_iterator(expected / sub)) {
        if (entry.path().extension() != ".csv") continue;
        ++files;
        const std::string diff = compare_csv(entry.path(), actual / sub / entry.path().filename());
        if (!diff.empty()) problems.push_back(path.stem().string() + "/" + sub + "/" + diff);
      }
    }
    const auto load = [](const fs::path& p) {
      std::ifstream in(p);
      return nlohmann::json::parse(in, nullptr, false);
    };
    auto want = load(expected / "summary.json"), got = load(actual / "summary.json");
    if (want.is_discarded() || got.is_discarded() || !same_json(want, got)) {
      problems.push_back(path.stem().string() + "/summary.json differs");
    }
    ++files;
  }
  fs::remove_all(scratch);
  std::string summary = fmt::format("{} configs, {} files compared", configs.size(), files);
  if (!problems.empty()) summary += "; first difference: " + problems.front();
  return make_result(11, "golden", problems.empty(), summary);
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names{"td0-convergence", "laurent",    "shift-equivariance", "offset-harm",
                                              "large-gamma",     "wrappers",   "gradients",          "reductions",
                                              "reset-cost",      "statistics", "golden"};
  return names;
}

std::vector<CheckResult> run_checks(const std::vector<std::string>& requested, const fs::path& golden_dir) {
  std::vector<std::string> names;
  for (const auto& name : requested) {
    if (name == "all") {
      names.insert(names.end(), check_names().begin(), check_names().end());
    } else if (std::find(check_names().begin(), check_names().end(), name) != check_names().end()) {
      names.push_back(name);
    } else {
      throw std::invalid_argument("unknown check '" + name + "'");
    }
  }
  std::vector<CheckResult> results;
  for (const auto& name : names) {
    spdlog::info("running check {}", name);
    if (name == "td0-convergence") results.push_back(check_td0_convergence());
    else if (name == "laurent") results.push_back(check_laurent());
    else if (name == "shift-equivariance") results.push_back(check_shift_equivariance());
    else if (name == "offset-harm") results.push_back(check_offset_harm());
    else if (name == "large-gamma") results.push_back(check_large_gamma());
    else if (name == "wrappers") results.push_back(check_wrappers());
    else if (name == "gradients") results.push_back(check_gradients());
    else if (name == "reductions") results.push_back(check_reductions());
    else if (name == "reset-cost") results.push_back(check_reset_cost());
    else if (name == "statistics") results.push_back(check_statistics());
    else if (name == "golden") results.push_back(check_golden(golden_dir));
  }
  return results;
}

std::string format_check(const CheckResult& result) {
  return fmt::format("[{}] {:>2} {}: {}", result.passed ? "PASS" : "FAIL", result.id, result.name, result.summary);
}

}  // namespace crl
