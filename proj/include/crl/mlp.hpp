#pragma once

#include "crl/random.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crl {

/// Raised when a non-finite value reaches an optimizer or TD target. The
/// experiment runner records the run as diverged.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { relu, tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation activation);

/// Fully connected network. `layer_widths` lists every layer including input
/// and output, e.g. {50, 64, 64, 3}; hidden layers use `activation`, the
/// output layer is linear.
struct MlpSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::relu;

  int input_size() const { return layer_widths.front(); }
  int output_size() const { return layer_widths.back(); }
  bool operator==(const MlpSpec&) const = default;
};

/// Flat parameters in canonical order: for each layer in turn, the weight
/// matrix (out x in, column-major) followed by the bias vector.
using ParamVector = Eigen::VectorXd;

void validate(const MlpSpec& spec);
Eigen::Index param_count(const MlpSpec& spec);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
ParamVector init_params(const MlpSpec& spec, Rng& rng);

/// Activations kept by a batched forward pass for the backward pass.
struct MlpTape {
  std::vector<Eigen::MatrixXd> activations;  // layer inputs, then final output
};

struct MlpGradient {
  ParamVector params;      // summed over the batch
  Eigen::MatrixXd inputs;  // d<out, seed>/d input, one column per sample
};

/// Batched forward pass; inputs hold one sample per column.
Eigen::MatrixXd mlp_forward_batch(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& inputs,
                                  MlpTape* tape = nullptr);

/// Reverse-mode gradient of sum_i <output_i, seed_i> given a tape recorded by
/// mlp_forward_batch with the same params.
MlpGradient mlp_backward(const MlpSpec& spec, const ParamVector& params, const MlpTape& tape,
                         const Eigen::MatrixXd& output_seed);

Eigen::VectorXd mlp_forward(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& input);

/// Gradient of <output, loss_seed> with respect to the parameters.
ParamVector mlp_gradient(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& loss_seed,
                         const Eigen::VectorXd& input);

struct AdamState {
  ParamVector m;
  ParamVector v;
  long t = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(Eigen::Index size, double learning_rate);
};

/// One bias-corrected Adam step minimizing the loss whose gradient is given.
/// With clip_norm set, gradients longer than clip_norm are rescaled to it
/// first. Throws NumericalError on a non-finite gradient.
void adam_step(AdamState& state, ParamVector& params, ParamVector gradient,
               std::optional<double> clip_norm = std::nullopt);

struct TargetSync {
  enum class Mode { hard, polyak } mode = Mode::hard;
  double tau = 1.0;

  static TargetSync hard() { return {Mode::hard, 1.0}; }
  static TargetSync polyak(double tau) { return {Mode::polyak, tau}; }
};

void target_sync(ParamVector& target, const ParamVector& online, TargetSync sync);

/// A network's spec and parameters with its optimizer state, the unit the
/// agents train and checkpoint.
struct Network {
  MlpSpec spec;
  ParamVector params;
  AdamState adam;

  Network() = default;
  Network(MlpSpec spec, Rng& rng, double learning_rate);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, MlpTape* tape = nullptr) const {
    return mlp_forward_batch(spec, params, inputs, tape);
  }
};

/// JSON checkpoint: {"spec": {"layer_widths", "activation"}, "params": [...],
/// "adam": {"m", "v", "t", "learning_rate", "beta1", "beta2", "epsilon"}}.
std::string network_to_json(const Network& network);
Network network_from_json(const std::string& text);

}  // namespace crl
