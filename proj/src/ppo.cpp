#include "crl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace crl {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out = logits.rowwise() - logits.colwise().maxCoeff();
  out = out.array().exp().matrix();
  out.array().rowwise() /= out.colwise().sum().array();
  return out;
}

Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& columns, std::span<const std::size_t> order) {
  Eigen::MatrixXd out(columns.front().size(), static_cast<Eigen::Index>(order.size()));
  for (std::size_t j = 0; j < order.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = columns[order[j]];
  }
  return out;
}

std::vector<int> with_io(int input, const std::vector<int>& hidden, int output) {
  std::vector<int> widths{input};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output);
  return widths;
}

}  // namespace

Eigen::VectorXd gae_advantages(const Eigen::VectorXd& deltas, double gamma, double lambda) {
  Eigen::VectorXd advantages(deltas.size());
  double running = 0.0;
  for (Eigen::Index t = deltas.size() - 1; t >= 0; --t) {
    running = deltas(t) + gamma * lambda * running;
    advantages(t) = running;
  }
  return advantages;
}

PpoPolicy make_ppo_policy(const Space& observation_space, const Space& action_space, const AgentConfig& config,
                          Rng& init_rng) {
  PpoPolicy policy;
  policy.discrete = is_discrete(action_space);
  const int outputs = space_size(action_space);
  policy.net = Network(MlpSpec{with_io(feature_size(observation_space), config.hidden, outputs), config.activation},
                       init_rng, config.actor_lr);
  if (!policy.discrete) {
    policy.log_std = ParamVector::Constant(outputs, config.initial_log_std);
  }
  policy.adam = AdamState::for_params(policy.num_params(), config.actor_lr);
  return policy;
}

PolicyEvaluation evaluate_policy(const PpoPolicy& policy, const Eigen::MatrixXd& states,
                                 const Eigen::MatrixXd& actions) {
  const Eigen::MatrixXd out = policy.net.forward(states);
  const Eigen::Index n = states.cols();
  PolicyEvaluation eval{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  if (policy.discrete) {
    const Eigen::MatrixXd probs = softmax(out);
    const Eigen::MatrixXd logp = probs.array().log().matrix();
    for (Eigen::Index i = 0; i < n; ++i) {
      eval.log_prob(i) = logp(static_cast<Eigen::Index>(actions(0, i)), i);
      eval.entropy(i) = -(probs.col(i).array() * logp.col(i).array()).sum();
    }
  } else {
    const Eigen::ArrayXd sigma = policy.log_std.array().exp();
    const Eigen::ArrayXXd z = (actions - out).array().colwise() / sigma;
    const double log_std_sum = policy.log_std.sum();
    const auto dims = static_cast<double>(policy.log_std.size());
    eval.log_prob = (-0.5 * z.square().colwise().sum() - log_std_sum - dims * kHalfLog2Pi).transpose().matrix();
    eval.entropy.setConstant(log_std_sum + dims * (kHalfLog2Pi + 0.5));
  }
  return eval;
}

ParamVector policy_weighted_gradient(const PpoPolicy& policy, const Eigen::MatrixXd& states,
                                     const Eigen::MatrixXd& actions, const Eigen::VectorXd& log_prob_weights,
                                     const Eigen::VectorXd& entropy_weights) {
  MlpTape tape;
  const Eigen::MatrixXd out = policy.net.forward(states, &tape);
  const Eigen::Index n = states.cols();
  ParamVector grad(policy.num_params());
  Eigen::MatrixXd seed(out.rows(), n);
  if (policy.discrete) {
    const Eigen::MatrixXd probs = softmax(out);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::ArrayXd logp = probs.col(i).array().log();
      const double entropy = -(probs.col(i).array() * logp).sum();
      seed.col(i) = (-log_prob_weights(i) * probs.col(i).array() -
                     entropy_weights(i) * probs.col(i).array() * (logp + entropy))
                        .matrix();
      seed(static_cast<Eigen::Index>(actions(0, i)), i) += log_prob_weights(i);
    }
    grad = mlp_backward(policy.net.spec, policy.net.params, tape, seed).params;
  } else {
    const Eigen::ArrayXd sigma = policy.log_std.array().exp();
    const Eigen::ArrayXXd z = (actions - out).array().colwise() / sigma;
    seed = ((z.colwise() / sigma).rowwise() * log_prob_weights.transpose().array()).matrix();
    const Eigen::Index k = policy.net.params.size();
    grad.head(k) = mlp_backward(policy.net.spec, policy.net.params, tape, seed).params;
    grad.tail(policy.log_std.size()) =
        ((z.square() - 1.0).matrix() * log_prob_weights).array() + entropy_weights.sum();
  }
  return grad;
}

ParamVector ppo_policy_loss_gradient(const PpoPolicy& policy, const Eigen::MatrixXd& states,
                                     const Eigen::MatrixXd& actions, const Eigen::VectorXd& old_log_prob,
                                     const Eigen::VectorXd& advantages, double clip_range, double entropy_coef) {
  const Eigen::Index n = states.cols();
  const PolicyEvaluation eval = evaluate_policy(policy, states, actions);
  Eigen::VectorXd weights(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ratio = std::exp(eval.log_prob(i) - old_log_prob(i));
    const double unclipped = ratio * advantages(i);
    const double clipped = std::clamp(ratio, 1.0 - clip_range, 1.0 + clip_range) * advantages(i);
    weights(i) = unclipped <= clipped ? -advantages(i) * ratio / static_cast<double>(n) : 0.0;
  }
  return policy_weighted_gradient(policy, states, actions, weights,
                                  Eigen::VectorXd::Constant(n, -entropy_coef / static_cast<double>(n)));
}

ParamVector policy_score_gradient(const PpoPolicy& policy, const Eigen::MatrixXd& states,
                                  const Eigen::MatrixXd& actions, const Eigen::VectorXd& advantages) {
  const auto n = static_cast<double>(states.cols());
  return policy_weighted_gradient(policy, states, actions, -advantages / n, Eigen::VectorXd::Zero(states.cols()));
}

// ---------------------------------------------------------------------------

PpoAgent::PpoAgent(AgentConfig config, Space observation_space, Space action_space, std::uint64_t seed)
    : config_(std::move(config)),
      observation_space_(std::move(observation_space)),
      action_space_(std::move(action_space)),
      estimator_(config_.centering),
      explore_rng_(child_stream(seed, "explore")),
      minibatch_rng_(child_stream(seed, "replay")) {
  validate(config_);
  Rng init_rng = child_stream(seed, "init");
  policy_ = make_ppo_policy(observation_space_, action_space_, config_, init_rng);
  critic_ = Network(MlpSpec{with_io(feature_size(observation_space_), config_.hidden, 1), config_.activation},
                    init_rng, config_.critic_lr);
}

Action PpoAgent::act(const Observation& observation, ActMode mode) {
  const Eigen::VectorXd state = encode_observation(observation, observation_space_);
  const Eigen::VectorXd out = policy_.net.forward(state);
  if (policy_.discrete) {
    if (mode == ActMode::greedy) {
      return Action::discrete(argmax(out));
    }
    const Eigen::VectorXd probs = softmax(out);
    const int a = sample_index(probs, explore_rng_);
    pending_action_ = Eigen::VectorXd::Constant(1, a);
    pending_log_prob_ = std::log(probs(a));
    return Action::discrete(a);
  }
  const auto& box = std::get<BoxSpace>(action_space_);
  const ActionScaling scaling(box);
  if (mode == ActMode::greedy) {
    const Eigen::VectorXd a = scaling.clip(out);
    return Action::box(std::vector<double>(a.data(), a.data() + a.size()));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd raw(out.size());
  double log_prob = 0.0;
  for (Eigen::Index d = 0; d < out.size(); ++d) {
    const double z = normal(explore_rng_);
    raw(d) = out(d) + std::exp(policy_.log_std(d)) * z;
    log_prob += -0.5 * z * z - policy_.log_std(d) - kHalfLog2Pi;
  }
  pending_action_ = raw;
  pending_log_prob_ = log_prob;
  const Eigen::VectorXd clipped = scaling.clip(raw);
  return Action::box(std::vector<double>(clipped.data(), clipped.data() + clipped.size()));
}

void PpoAgent::observe(const Transition& transition) {
  if (pending_action_.size() == 0) {
    throw std::logic_error("PPO observed a transition without a preceding exploratory action");
  }
  if (estimator_.mode() == CenteringMode::moving_average) {
    estimator_.moving_average_update(transition.reward);
  }
  states_.push_back(encode_observation(transition.state, observation_space_));
  next_states_.push_back(encode_observation(transition.next_state, observation_space_));
  actions_.push_back(pending_action_);
  log_probs_.push_back(pending_log_prob_);
  rewards_.push_back(transition.reward);
  pending_action_.resize(0);
  if (static_cast<int>(rewards_.size()) == config_.round_length) {
    train_round();
    states_.clear();
    next_states_.clear();
    actions_.clear();
    log_probs_.clear();
    rewards_.clear();
  }
}

void PpoAgent::train_round() {
  const std::size_t T = rewards_.size();
  std::vector<std::size_t> order(T);
  std::iota(order.begin(), order.end(), 0);
  const Eigen::MatrixXd S = stack(states_, order);
  const Eigen::MatrixXd S_next = stack(next_states_, order);
  const Eigen::MatrixXd A = stack(actions_, order);
  const Eigen::VectorXd old_log_prob = Eigen::Map<const Eigen::VectorXd>(log_probs_.data(), static_cast<Eigen::Index>(T));

  if (estimator_.mode() == CenteringMode::reference_states && reference_states_.cols() == 0) {
    const auto size = static_cast<Eigen::Index>(std::min<std::size_t>(T, static_cast<std::size_t>(config_.minibatch_size)));
    reference_states_.resize(S.rows(), size);
    for (Eigen::Index i = 0; i < size; ++i) {
      reference_states_.col(i) = S.col(static_cast<Eigen::Index>(uniform01(minibatch_rng_) * static_cast<double>(T)));
    }
  }

  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    const Eigen::VectorXd v = critic_.forward(S).row(0).transpose();
    const Eigen::VectorXd v_next = critic_.forward(S_next).row(0).transpose();
    Eigen::VectorXd deltas(static_cast<Eigen::Index>(T));
    if (estimator_.mode() == CenteringMode::td_based) {
      for (std::size_t t = 0; t < T; ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        deltas(i) = rewards_[t] + config_.gamma * v_next(i) - v(i);
      }
      deltas = ppo_round_center(estimator_, deltas).centered;
    } else {
      if (estimator_.mode() == CenteringMode::reference_states) {
        const Eigen::MatrixXd ref = critic_.forward(reference_states_);
        estimator_.set_reference_value(reference_state_value(std::span<const double>(ref.data(), ref.size())));
      }
      for (std::size_t t = 0; t < T; ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        deltas(i) = estimator_.centered_reward(rewards_[t]) + config_.gamma * v_next(i) - v(i);
      }
    }
    if (!deltas.allFinite()) {
      throw NumericalError("non-finite PPO TD error");
    }
    const Eigen::VectorXd advantages = gae_advantages(deltas, config_.gamma, config_.gae_lambda);
    const Eigen::VectorXd returns = advantages + v;

    std::shuffle(order.begin(), order.end(), minibatch_rng_);
    for (std::size_t start = 0; start < T; start += static_cast<std::size_t>(config_.minibatch_size)) {
      const std::size_t end = std::min(T, start + static_cast<std::size_t>(config_.minibatch_size));
      const auto m = static_cast<Eigen::Index>(end - start);
      Eigen::MatrixXd s(S.rows(), m), a(A.rows(), m);
      Eigen::VectorXd adv(m), ret(m), old(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        const auto i = static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(j)]);
        s.col(j) = S.col(i);
        a.col(j) = A.col(i);
        adv(j) = advantages(i);
        ret(j) = returns(i);
        old(j) = old_log_prob(i);
      }
      if (config_.normalize_advantage && m > 1) {
        const double mean = adv.mean();
        const double sd = std::sqrt((adv.array() - mean).square().sum() / static_cast<double>(m - 1));
        adv = ((adv.array() - mean) / (sd + 1e-8)).matrix();
      }

      ParamVector flat(policy_.num_params());
      flat << policy_.net.params, policy_.log_std;
      adam_step(policy_.adam, flat,
                ppo_policy_loss_gradient(policy_, s, a, old, adv, config_.clip_range, config_.ppo_entropy_coef),
                config_.max_grad_norm);
      policy_.net.params = flat.head(policy_.net.params.size());
      policy_.log_std = flat.tail(policy_.log_std.size());

      MlpTape tape;
      const Eigen::MatrixXd value = critic_.forward(s, &tape);
      const Eigen::MatrixXd seed = (value - ret.transpose()) / static_cast<double>(m);
      adam_step(critic_.adam, critic_.params, mlp_backward(critic_.spec, critic_.params, tape, seed).params,
                config_.max_grad_norm);
    }
  }
  ++rounds_;
}

}  // namespace crl
