#include "crl/mlp.hpp"

#include <json.hpp>

#include <cmath>

namespace crl {

namespace {

using MatMap = Eigen::Map<const Eigen::MatrixXd>;
using VecMap = Eigen::Map<const Eigen::VectorXd>;

void check_params(const MlpSpec& spec, const ParamVector& params) {
  if (params.size() != param_count(spec)) {
    throw std::invalid_argument("parameter vector has length " + std::to_string(params.size()) + ", expected " +
                                std::to_string(param_count(spec)));
  }
}

void apply_activation(Activation activation, Eigen::MatrixXd& x) {
  if (activation == Activation::relu) {
    x = x.cwiseMax(0.0);
  } else {
    x = x.array().tanh().matrix();
  }
}

// Multiplies `grad` in place by the activation derivative, given the
// activation's output.
void activation_backward(Activation activation, const Eigen::MatrixXd& output, Eigen::MatrixXd& grad) {
  if (activation == Activation::relu) {
    grad = (output.array() > 0.0).select(grad, 0.0);
  } else {
    grad.array() *= 1.0 - output.array().square();
  }
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + name + "' (expected relu or tanh)");
}

std::string to_string(Activation activation) { return activation == Activation::relu ? "relu" : "tanh"; }

void validate(const MlpSpec& spec) {
  if (spec.layer_widths.size() < 2) {
    throw std::invalid_argument("MLP needs at least an input and an output width");
  }
  for (int width : spec.layer_widths) {
    if (width < 1) {
      throw std::invalid_argument("MLP layer widths must be positive");
    }
  }
}

Eigen::Index param_count(const MlpSpec& spec) {
  Eigen::Index count = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
    count += static_cast<Eigen::Index>(spec.layer_widths[l + 1]) * (spec.layer_widths[l] + 1);
  }
  return count;
}

ParamVector init_params(const MlpSpec& spec, Rng& rng) {
  validate(spec);
  ParamVector params(param_count(spec));
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
    const int in = spec.layer_widths[l];
    const int out = spec.layer_widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    const Eigen::Index n = static_cast<Eigen::Index>(out) * (in + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      params(offset + i) = bound * (2.0 * uniform01(rng) - 1.0);
    }
    offset += n;
  }
  return params;
}

Eigen::MatrixXd mlp_forward_batch(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& inputs,
                                  MlpTape* tape) {
  check_params(spec, params);
  if (inputs.rows() != spec.input_size()) {
    throw std::invalid_argument("MLP input has " + std::to_string(inputs.rows()) + " rows, expected " +
                                std::to_string(spec.input_size()));
  }
  if (tape) {
    tape->activations.clear();
    tape->activations.reserve(spec.layer_widths.size());
    tape->activations.push_back(inputs);
  }
  Eigen::MatrixXd x = inputs;
  Eigen::Index offset = 0;
  const std::size_t num_layers = spec.layer_widths.size() - 1;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const int in = spec.layer_widths[l];
    const int out = spec.layer_widths[l + 1];
    const MatMap weights(params.data() + offset, out, in);
    const VecMap bias(params.data() + offset + static_cast<Eigen::Index>(out) * in, out);
    offset += static_cast<Eigen::Index>(out) * (in + 1);
    Eigen::MatrixXd y = weights * x;
    y.colwise() += bias;
    if (l + 1 < num_layers) {
      apply_activation(spec.activation, y);
    }
    x = std::move(y);
    if (tape) {
      tape->activations.push_back(x);
    }
  }
  return x;
}

MlpGradient mlp_backward(const MlpSpec& spec, const ParamVector& params, const MlpTape& tape,
                         const Eigen::MatrixXd& output_seed) {
  check_params(spec, params);
  const std::size_t num_layers = spec.layer_widths.size() - 1;
  if (tape.activations.size() != num_layers + 1) {
    throw std::invalid_argument("MLP tape does not match the network depth");
  }
  if (output_seed.rows() != spec.output_size() || output_seed.cols() != tape.activations.front().cols()) {
    throw std::invalid_argument("MLP output seed has the wrong shape");
  }
  MlpGradient grad;
  grad.params = ParamVector::Zero(params.size());
  Eigen::MatrixXd g = output_seed;
  Eigen::Index offset = params.size();
  for (std::size_t l = num_layers; l-- > 0;) {
    const int in = spec.layer_widths[l];
    const int out = spec.layer_widths[l + 1];
    offset -= static_cast<Eigen::Index>(out) * (in + 1);
    const MatMap weights(params.data() + offset, out, in);
    const Eigen::MatrixXd& layer_input = tape.activations[l];

    Eigen::Map<Eigen::MatrixXd>(grad.params.data() + offset, out, in).noalias() = g * layer_input.transpose();
    Eigen::Map<Eigen::VectorXd>(grad.params.data() + offset + static_cast<Eigen::Index>(out) * in, out) =
        g.rowwise().sum();

    Eigen::MatrixXd g_in = weights.transpose() * g;
    if (l > 0) {
      activation_backward(spec.activation, layer_input, g_in);
    }
    g = std::move(g_in);
  }
  grad.inputs = std::move(g);
  return grad;
}

Eigen::VectorXd mlp_forward(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& input) {
  return mlp_forward_batch(spec, params, input);
}

ParamVector mlp_gradient(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& loss_seed,
                         const Eigen::VectorXd& input) {
  MlpTape tape;
  mlp_forward_batch(spec, params, input, &tape);
  return mlp_backward(spec, params, tape, loss_seed).params;
}

AdamState AdamState::for_params(Eigen::Index size, double learning_rate) {
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  AdamState state;
  state.m = ParamVector::Zero(size);
  state.v = ParamVector::Zero(size);
  state.learning_rate = learning_rate;
  return state;
}

void adam_step(AdamState& state, ParamVector& params, ParamVector gradient, std::optional<double> clip_norm) {
  if (gradient.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("Adam state, parameters and gradient must have the same length");
  }
  if (!gradient.allFinite()) {
    throw NumericalError("non-finite gradient passed to Adam");
  }
  if (clip_norm) {
    const double norm = gradient.norm();
    if (norm > *clip_norm) {
      gradient *= *clip_norm / norm;
    }
  }
  ++state.t;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * gradient;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * gradient.cwiseAbs2();
  const double m_correction = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double v_correction = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  params.array() -= state.learning_rate * (state.m.array() / m_correction) /
                    ((state.v.array() / v_correction).sqrt() + state.epsilon);
}

void target_sync(ParamVector& target, const ParamVector& online, TargetSync sync) {
  if (target.size() != online.size()) {
    throw std::invalid_argument("target and online parameters differ in length");
  }
  if (sync.mode == TargetSync::Mode::hard) {
    target = online;
  } else {
    if (!(sync.tau >= 0.0 && sync.tau <= 1.0)) {
      throw std::invalid_argument("Polyak coefficient must lie in [0, 1]");
    }
    target = sync.tau * online + (1.0 - sync.tau) * target;
  }
}

Network::Network(MlpSpec spec_in, Rng& rng, double learning_rate)
    : spec(std::move(spec_in)), params(init_params(spec, rng)), adam(AdamState::for_params(params.size(), learning_rate)) {}

std::string network_to_json(const Network& network) {
  using nlohmann::json;
  auto to_array = [](const ParamVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json doc{{"spec", {{"layer_widths", network.spec.layer_widths}, {"activation", to_string(network.spec.activation)}}},
           {"params", to_array(network.params)},
           {"adam",
            {{"m", to_array(network.adam.m)},
             {"v", to_array(network.adam.v)},
             {"t", network.adam.t},
             {"learning_rate", network.adam.learning_rate},
             {"beta1", network.adam.beta1},
             {"beta2", network.adam.beta2},
             {"epsilon", network.adam.epsilon}}}};
  return doc.dump();
}

Network network_from_json(const std::string& text) {
  using nlohmann::json;
  auto to_vector = [](const json& array) {
    const auto values = array.get<std::vector<double>>();
    return ParamVector(Eigen::Map<const ParamVector>(values.data(), static_cast<Eigen::Index>(values.size())));
  };
  Network network;
  try {
    const json doc = json::parse(text);
    network.spec.layer_widths = doc.at("spec").at("layer_widths").get<std::vector<int>>();
    network.spec.activation = activation_from_string(doc.at("spec").at("activation").get<std::string>());
    network.params = to_vector(doc.at("params"));
    const auto& adam = doc.at("adam");
    network.adam.m = to_vector(adam.at("m"));
    network.adam.v = to_vector(adam.at("v"));
    network.adam.t = adam.at("t").get<long>();
    network.adam.learning_rate = adam.at("learning_rate").get<double>();
    network.adam.beta1 = adam.at("beta1").get<double>();
    network.adam.beta2 = adam.at("beta2").get<double>();
    network.adam.epsilon = adam.at("epsilon").get<double>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("network checkpoint: ") + e.what());
  }
  validate(network.spec);
  check_params(network.spec, network.params);
  if (network.adam.m.size() != network.params.size() || network.adam.v.size() != network.params.size()) {
    throw std::invalid_argument("network checkpoint: optimizer state length mismatch");
  }
  return network;
}

}  // namespace crl
