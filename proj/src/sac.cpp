#include "crl/sac.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crl {

namespace {

constexpr double kSquashEpsilon = 1e-6;
constexpr double kLogStdHalfRange = 0.5 * (kSacLogStdMax - kSacLogStdMin);

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      out(i, j) = normal(rng);
    }
  }
  return out;
}

std::vector<int> with_io(int input, const std::vector<int>& hidden, int output) {
  std::vector<int> widths{input};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output);
  return widths;
}

void update_temperature(double& log_kappa, AdamState& adam, double gradient) {
  ParamVector value = ParamVector::Constant(1, log_kappa);
  adam_step(adam, value, ParamVector::Constant(1, gradient));
  log_kappa = value(0);
}

}  // namespace

double sac_target_entropy(const AgentConfig& config, int action_dims) {
  if (config.target_entropy) {
    return *config.target_entropy;
  }
  return -static_cast<double>(action_dims) + config.target_entropy_offset;
}

SquashedSample squashed_gaussian_sample(const Network& actor, const ActionScaling& scaling,
                                        const Eigen::MatrixXd& states, const Eigen::MatrixXd& noise, MlpTape* tape) {
  const Eigen::MatrixXd out = actor.forward(states, tape);
  const Eigen::Index dims = out.rows() / 2;
  if (noise.rows() != dims || noise.cols() != states.cols()) {
    throw std::invalid_argument("SAC noise shape does not match the action batch");
  }
  SquashedSample s;
  s.noise = noise;
  s.raw_log_std = out.bottomRows(dims);
  s.log_std = (kSacLogStdMin + kLogStdHalfRange * (s.raw_log_std.array().tanh() + 1.0)).matrix();
  const Eigen::ArrayXXd u = out.topRows(dims).array() + s.log_std.array().exp() * noise.array();
  s.squashed = u.tanh().matrix();
  s.actions = (s.squashed.array().colwise() * scaling.scale.array()).matrix();
  s.actions.colwise() += scaling.center;

  const double log_norm = 0.5 * std::log(2.0 * std::numbers::pi);
  const Eigen::ArrayXXd per_dim = -0.5 * noise.array().square() - s.log_std.array() - log_norm -
                                  (1.0 - s.squashed.array().square() + kSquashEpsilon).log();
  s.log_prob = per_dim.colwise().sum().transpose().matrix();
  s.log_prob.array() -= scaling.scale.array().log().sum();
  return s;
}

ParamVector sac_actor_loss_gradient(const Network& actor, const ActionScaling& scaling, const Eigen::MatrixXd& states,
                                    const Eigen::MatrixXd& noise, double kappa,
                                    const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& action_gradient) {
  MlpTape tape;
  const SquashedSample s = squashed_gaussian_sample(actor, scaling, states, noise, &tape);
  const Eigen::MatrixXd dq_da = action_gradient(s.actions);
  const double n = static_cast<double>(states.cols());
  const Eigen::ArrayXXd y = s.squashed.array();
  const Eigen::ArrayXXd one_minus = 1.0 - y.square();
  const Eigen::ArrayXXd dlogp_du = 2.0 * y * one_minus / (one_minus + kSquashEpsilon);
  const Eigen::ArrayXXd dq_du = (dq_da.array().colwise() * scaling.scale.array()) * one_minus;
  const Eigen::ArrayXXd dl_du = (kappa * dlogp_du - dq_du) / n;
  const Eigen::ArrayXXd sigma = s.log_std.array().exp();
  const Eigen::ArrayXXd dl_dlogstd = -kappa / n + dl_du * sigma * noise.array();
  const Eigen::ArrayXXd dl_draw = dl_dlogstd * kLogStdHalfRange * (1.0 - s.raw_log_std.array().tanh().square());

  Eigen::MatrixXd seed(2 * noise.rows(), noise.cols());
  seed.topRows(noise.rows()) = dl_du.matrix();
  seed.bottomRows(noise.rows()) = dl_draw.matrix();
  return mlp_backward(actor.spec, actor.params, tape, seed).params;
}

double sac_temperature_gradient(const Eigen::VectorXd& log_probs, double target_entropy) {
  return -(log_probs.array() + target_entropy).mean();
}

// ---------------------------------------------------------------------------

SacAgent::SacAgent(AgentConfig config, Space observation_space, BoxSpace action_space, std::uint64_t seed)
    : config_(std::move(config)),
      observation_space_(std::move(observation_space)),
      action_space_(std::move(action_space)),
      scaling_(action_space_),
      log_kappa_(0.0),
      estimator_(config_.centering),
      replay_(static_cast<std::size_t>(config_.replay_capacity)),
      explore_rng_(child_stream(seed, "explore")),
      replay_rng_(child_stream(seed, "replay")),
      noise_rng_(child_stream(seed, "target_noise")) {
  validate(config_);
  if (!config_.autotune && !(config_.entropy_coef > 0.0)) {
    throw std::invalid_argument("SAC entropy coefficient must be positive when autotune is off");
  }
  Rng init_rng = child_stream(seed, "init");
  const int obs_dims = feature_size(observation_space_);
  const int act_dims = static_cast<int>(action_space_.dims());
  actor_ = Network(MlpSpec{with_io(obs_dims, config_.hidden, 2 * act_dims), config_.activation}, init_rng,
                   config_.actor_lr);
  for (int j = 0; j < 2; ++j) {
    critics_.emplace_back(MlpSpec{with_io(obs_dims + act_dims, config_.hidden, 1), config_.activation}, init_rng,
                          config_.critic_lr);
    critic_targets_.push_back(critics_.back().params);
  }
  log_kappa_ = std::log(config_.entropy_coef > 0.0 ? config_.entropy_coef : 1.0);
  kappa_adam_ = AdamState::for_params(1, config_.critic_lr);
  target_entropy_ = sac_target_entropy(config_, act_dims);
}

Action SacAgent::act(const Observation& observation, ActMode mode) {
  if (mode == ActMode::warmup) {
    return config_.agent_controlled_reset ? reset_biased_warmup_action(action_space_, explore_rng_)
                                          : uniform_action(action_space_, explore_rng_);
  }
  const Eigen::MatrixXd state = encode_observation(observation, observation_space_);
  const auto dims = static_cast<Eigen::Index>(action_space_.dims());
  Eigen::VectorXd action;
  if (mode == ActMode::explore) {
    action = squashed_gaussian_sample(actor_, scaling_, state, standard_normal(dims, 1, explore_rng_)).actions;
  } else {
    const Eigen::VectorXd mean = actor_.forward(state).topRows(dims);
    action = scaling_.center + (scaling_.scale.array() * mean.array().tanh()).matrix();
  }
  return Action::box(std::vector<double>(action.data(), action.data() + action.size()));
}

void SacAgent::observe(const Transition& transition) {
  ++steps_;
  if (estimator_.mode() == CenteringMode::moving_average) {
    estimator_.moving_average_update(transition.reward);
  }
  replay_.push(transition);
  if (steps_ >= config_.learning_starts && steps_ % config_.train_every == 0 &&
      replay_.size() >= static_cast<std::size_t>(config_.batch_size)) {
    const auto indices = replay_.sample_indices(static_cast<std::size_t>(config_.batch_size), replay_rng_);
    update(make_continuous_batch(replay_, indices, observation_space_));
  }
}

Eigen::VectorXd SacAgent::td_targets(const ContinuousBatch& batch, const Eigen::MatrixXd& next_noise) const {
  const SquashedSample next = squashed_gaussian_sample(actor_, scaling_, batch.next_states, next_noise);
  const Eigen::MatrixXd inputs = critic_input(batch.next_states, next.actions);
  const Eigen::VectorXd q1 = mlp_forward_batch(critics_[0].spec, critic_targets_[0], inputs).row(0).transpose();
  const Eigen::VectorXd q2 = mlp_forward_batch(critics_[1].spec, critic_targets_[1], inputs).row(0).transpose();
  const double k = kappa();
  Eigen::VectorXd targets(batch.rewards.size());
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    targets(i) =
        estimator_.centered_reward(batch.rewards(i)) + config_.gamma * (std::min(q1(i), q2(i)) - k * next.log_prob(i));
  }
  return targets;
}

void SacAgent::refresh_reference_value() {
  if (reference_.empty()) {
    reference_ = sample_continuous_reference_set(replay_, static_cast<std::size_t>(config_.batch_size),
                                                 observation_space_, replay_rng_);
  }
  const Eigen::MatrixXd q1 = critics_[0].forward(reference_.inputs);
  const Eigen::MatrixXd q2 = critics_[1].forward(reference_.inputs);
  estimator_.set_reference_value(reference_state_value(std::span<const double>(q1.data(), q1.size()),
                                                       std::span<const double>(q2.data(), q2.size())));
}

void SacAgent::update(const ContinuousBatch& batch) {
  if (estimator_.mode() == CenteringMode::reference_states) {
    refresh_reference_value();
  }
  const Eigen::Index dims = batch.actions.rows();
  const Eigen::Index n = batch.actions.cols();
  const Eigen::VectorXd targets = td_targets(batch, standard_normal(dims, n, noise_rng_));
  const Eigen::MatrixXd inputs = critic_input(batch.states, batch.actions);
  TDErrorBatch deltas = TDErrorBatch::Zero(n);
  for (auto& critic : critics_) {
    CriticGradient grad = q_critic_gradient(critic, inputs, targets);
    adam_step(critic.adam, critic.params, std::move(grad.loss_gradient), config_.grad_clip);
    deltas += grad.deltas;
  }
  deltas /= 2.0;
  if (estimator_.mode() == CenteringMode::td_based) {
    estimator_.td_based_update(deltas);
  }

  const Eigen::MatrixXd noise = standard_normal(dims, n, noise_rng_);
  const auto min_critic_gradient = [&](const Eigen::MatrixXd& actions) {
    const Eigen::MatrixXd in = critic_input(batch.states, actions);
    const Eigen::MatrixXd q1 = critics_[0].forward(in);
    const Eigen::MatrixXd q2 = critics_[1].forward(in);
    const Eigen::MatrixXd g1 = critic_action_gradient(critics_[0], batch.states, actions);
    const Eigen::MatrixXd g2 = critic_action_gradient(critics_[1], batch.states, actions);
    Eigen::MatrixXd g(g1.rows(), g1.cols());
    for (Eigen::Index i = 0; i < g.cols(); ++i) {
      g.col(i) = q1(0, i) <= q2(0, i) ? g1.col(i) : g2.col(i);
    }
    return g;
  };
  ParamVector actor_grad = sac_actor_loss_gradient(actor_, scaling_, batch.states, noise, kappa(), min_critic_gradient);
  adam_step(actor_.adam, actor_.params, std::move(actor_grad), config_.grad_clip);

  if (config_.autotune) {
    const SquashedSample s = squashed_gaussian_sample(actor_, scaling_, batch.states, noise);
    update_temperature(log_kappa_, kappa_adam_, sac_temperature_gradient(s.log_prob, target_entropy_));
  }

  const auto polyak = TargetSync::polyak(config_.tau);
  for (std::size_t j = 0; j < critics_.size(); ++j) {
    target_sync(critic_targets_[j], critics_[j].params, polyak);
  }
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out = logits.rowwise() - logits.colwise().maxCoeff();
  out = out.array().exp().matrix();
  out.array().rowwise() /= out.colwise().sum().array();
  return out;
}

double sac_discrete_soft_value(const Eigen::VectorXd& probs, const Eigen::VectorXd& min_q, double kappa) {
  double value = 0.0;
  for (Eigen::Index a = 0; a < probs.size(); ++a) {
    if (probs(a) > 0.0) {
      value += probs(a) * (min_q(a) - kappa * std::log(probs(a)));
    }
  }
  return value;
}

Eigen::VectorXd sac_discrete_logit_gradient(const Eigen::VectorXd& probs, const Eigen::VectorXd& q, double kappa) {
  Eigen::VectorXd g(probs.size());
  for (Eigen::Index a = 0; a < probs.size(); ++a) {
    g(a) = (probs(a) > 0.0 ? kappa * std::log(probs(a)) : 0.0) - q(a);
  }
  const double loss = probs.dot(g);
  return (probs.array() * (g.array() - loss)).matrix();
}

SacDiscreteAgent::SacDiscreteAgent(AgentConfig config, Space observation_space, int num_actions, std::uint64_t seed)
    : config_(std::move(config)),
      observation_space_(std::move(observation_space)),
      num_actions_(num_actions),
      log_kappa_(0.0),
      estimator_(config_.centering),
      replay_(static_cast<std::size_t>(config_.replay_capacity)),
      explore_rng_(child_stream(seed, "explore")),
      replay_rng_(child_stream(seed, "replay")) {
  validate(config_);
  if (!config_.autotune && !(config_.entropy_coef > 0.0)) {
    throw std::invalid_argument("SAC entropy coefficient must be positive when autotune is off");
  }
  Rng init_rng = child_stream(seed, "init");
  const int obs_dims = feature_size(observation_space_);
  actor_ = Network(MlpSpec{with_io(obs_dims, config_.hidden, num_actions_), config_.activation}, init_rng,
                   config_.actor_lr);
  for (int j = 0; j < 2; ++j) {
    critics_.emplace_back(MlpSpec{with_io(obs_dims, config_.hidden, num_actions_), config_.activation}, init_rng,
                          config_.critic_lr);
    critic_targets_.push_back(critics_.back().params);
  }
  log_kappa_ = std::log(config_.entropy_coef > 0.0 ? config_.entropy_coef : 1.0);
  kappa_adam_ = AdamState::for_params(1, config_.critic_lr);
  target_entropy_ = config_.target_entropy ? *config_.target_entropy : 0.89 * std::log(static_cast<double>(num_actions_));
}

Eigen::VectorXd SacDiscreteAgent::policy(const Observation& observation) const {
  return softmax_columns(actor_.forward(encode_observation(observation, observation_space_)));
}

Action SacDiscreteAgent::act(const Observation& observation, ActMode mode) {
  switch (mode) {
    case ActMode::warmup: return Action::discrete(static_cast<int>(uniform01(explore_rng_) * num_actions_));
    case ActMode::explore: return Action::discrete(sample_index(policy(observation), explore_rng_));
    case ActMode::greedy: return Action::discrete(argmax(policy(observation)));
  }
  return Action::discrete(0);
}

void SacDiscreteAgent::observe(const Transition& transition) {
  ++steps_;
  if (estimator_.mode() == CenteringMode::moving_average) {
    estimator_.moving_average_update(transition.reward);
  }
  replay_.push(transition);
  if (steps_ >= config_.learning_starts && steps_ % config_.train_every == 0 &&
      replay_.size() >= static_cast<std::size_t>(config_.batch_size)) {
    const auto indices = replay_.sample_indices(static_cast<std::size_t>(config_.batch_size), replay_rng_);
    update(make_discrete_batch(replay_, indices, observation_space_));
  }
}

Eigen::VectorXd SacDiscreteAgent::td_targets(const DiscreteBatch& batch) const {
  const Eigen::MatrixXd probs = softmax_columns(actor_.forward(batch.next_states));
  const Eigen::MatrixXd q = mlp_forward_batch(critics_[0].spec, critic_targets_[0], batch.next_states)
                                .cwiseMin(mlp_forward_batch(critics_[1].spec, critic_targets_[1], batch.next_states));
  const double k = kappa();
  Eigen::VectorXd targets(batch.rewards.size());
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    targets(i) = estimator_.centered_reward(batch.rewards(i)) +
                 config_.gamma * sac_discrete_soft_value(probs.col(i), q.col(i), k);
  }
  return targets;
}

void SacDiscreteAgent::update(const DiscreteBatch& batch) {
  const Eigen::Index n = batch.states.cols();
  if (estimator_.mode() == CenteringMode::reference_states) {
    if (reference_.empty()) {
      reference_ = sample_reference_set(replay_, static_cast<std::size_t>(config_.batch_size), observation_space_,
                                        replay_rng_);
    }
    const Eigen::MatrixXd q1 = critics_[0].forward(reference_.states);
    const Eigen::MatrixXd q2 = critics_[1].forward(reference_.states);
    std::vector<double> v1(reference_.actions.size()), v2(reference_.actions.size());
    for (std::size_t i = 0; i < v1.size(); ++i) {
      v1[i] = q1(reference_.actions[i], static_cast<Eigen::Index>(i));
      v2[i] = q2(reference_.actions[i], static_cast<Eigen::Index>(i));
    }
    estimator_.set_reference_value(reference_state_value(v1, v2));
  }

  const Eigen::VectorXd targets = td_targets(batch);
  TDErrorBatch deltas = TDErrorBatch::Zero(n);
  for (auto& critic : critics_) {
    MlpTape tape;
    const Eigen::MatrixXd q = critic.forward(batch.states, &tape);
    Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(q.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = batch.actions[static_cast<std::size_t>(i)];
      const double delta = targets(i) - q(a, i);
      deltas(i) += delta;
      seed(a, i) = -delta / static_cast<double>(n);
    }
    if (!deltas.allFinite()) {
      throw NumericalError("non-finite SAC TD error");
    }
    adam_step(critic.adam, critic.params, mlp_backward(critic.spec, critic.params, tape, seed).params,
              config_.grad_clip);
  }
  deltas /= 2.0;
  if (estimator_.mode() == CenteringMode::td_based) {
    estimator_.td_based_update(deltas);
  }

  const Eigen::MatrixXd min_q = critics_[0].forward(batch.states).cwiseMin(critics_[1].forward(batch.states));
  MlpTape tape;
  const Eigen::MatrixXd probs = softmax_columns(actor_.forward(batch.states, &tape));
  const double k = kappa();
  Eigen::MatrixXd seed(probs.rows(), n);
  double entropy_gap = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    seed.col(i) = sac_discrete_logit_gradient(probs.col(i), min_q.col(i), k) / static_cast<double>(n);
    for (Eigen::Index a = 0; a < probs.rows(); ++a) {
      if (probs(a, i) > 0.0) {
        entropy_gap += probs(a, i) * (std::log(probs(a, i)) + target_entropy_);
      }
    }
  }
  adam_step(actor_.adam, actor_.params, mlp_backward(actor_.spec, actor_.params, tape, seed).params,
            config_.grad_clip);
  if (config_.autotune) {
    update_temperature(log_kappa_, kappa_adam_, -entropy_gap / static_cast<double>(n));
  }

  ++updates_;
  if (updates_ % config_.target_update_every == 0) {
    for (std::size_t j = 0; j < critics_.size(); ++j) {
      target_sync(critic_targets_[j], critics_[j].params, TargetSync::hard());
    }
  }
}

}  // namespace crl
