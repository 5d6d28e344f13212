#include "crl/mlp.hpp"

#include <gtest/gtest.h>

#include <cmath>

using crl::Activation;
using crl::MlpSpec;
using crl::ParamVector;

namespace {

// Independent forward pass that walks the canonical parameter layout by hand.
Eigen::VectorXd reference_forward(const MlpSpec& spec, const ParamVector& params, Eigen::VectorXd x) {
  Eigen::Index offset = 0;
  const auto layers = spec.layer_widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = spec.layer_widths[l];
    const int out = spec.layer_widths[l + 1];
    Eigen::VectorXd y(out);
    for (int i = 0; i < out; ++i) {
      double sum = params(offset + in * out + i);
      for (int j = 0; j < in; ++j) sum += params(offset + j * out + i) * x(j);
      y(i) = sum;
    }
    offset += in * out + out;
    if (l + 1 < layers) {
      for (int i = 0; i < out; ++i) y(i) = spec.activation == Activation::relu ? std::max(0.0, y(i)) : std::tanh(y(i));
    }
    x = y;
  }
  return x;
}

double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-8});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

TEST(MlpForward, ZeroParamsGiveZeroOutput) {
  const MlpSpec spec{{3, 4, 2}, Activation::tanh};
  const ParamVector params = ParamVector::Zero(crl::param_count(spec));
  EXPECT_EQ(crl::mlp_forward(spec, params, Eigen::Vector3d(1, -2, 3)), Eigen::VectorXd::Zero(2));
}

TEST(MlpForward, IdentityLinearLayer) {
  const MlpSpec spec{{3, 3}, Activation::relu};
  ParamVector params = ParamVector::Zero(crl::param_count(spec));
  params(0) = params(4) = params(8) = 1.0;
  const Eigen::Vector3d x(-1.5, 0.25, 7.0);
  EXPECT_EQ(crl::mlp_forward(spec, params, x), Eigen::VectorXd(x));
}

TEST(MlpForward, MatchesHandRolledForward) {
  crl::Rng rng(3);
  for (Activation act : {Activation::relu, Activation::tanh}) {
    const MlpSpec spec{{5, 7, 6, 3}, act};
    const ParamVector params = crl::init_params(spec, rng);
    const Eigen::VectorXd x = Eigen::VectorXd::Random(5);
    EXPECT_LT((crl::mlp_forward(spec, params, x) - reference_forward(spec, params, x)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MlpForward, BatchColumnsMatchSingleSamples) {
  crl::Rng rng(4);
  const MlpSpec spec{{4, 8, 2}, Activation::relu};
  const ParamVector params = crl::init_params(spec, rng);
  const Eigen::MatrixXd batch = Eigen::MatrixXd::Random(4, 6);
  const Eigen::MatrixXd out = crl::mlp_forward_batch(spec, params, batch);
  for (int c = 0; c < 6; ++c) EXPECT_LT((out.col(c) - crl::mlp_forward(spec, params, batch.col(c))).norm(), 1e-13);
}

TEST(MlpForward, PureAndDeterministic) {
  crl::Rng rng(5);
  const MlpSpec spec{{3, 5, 2}, Activation::tanh};
  const ParamVector params = crl::init_params(spec, rng);
  const Eigen::Vector3d x(0.1, 0.2, 0.3);
  EXPECT_EQ(crl::mlp_forward(spec, params, x), crl::mlp_forward(spec, params, x));
  EXPECT_EQ(crl::mlp_gradient(spec, params, Eigen::Vector2d(1, 2), x),
            crl::mlp_gradient(spec, params, Eigen::Vector2d(1, 2), x));
}

TEST(MlpForward, DimensionMismatchThrows) {
  const MlpSpec spec{{3, 2}, Activation::relu};
  const ParamVector params = ParamVector::Zero(crl::param_count(spec));
  EXPECT_THROW(crl::mlp_forward(spec, params, Eigen::Vector2d(1, 2)), std::invalid_argument);
  EXPECT_THROW(crl::mlp_forward(spec, ParamVector::Zero(3), Eigen::Vector3d(1, 2, 3)), std::invalid_argument);
  EXPECT_THROW(crl::validate(MlpSpec{{3}, Activation::relu}), std::invalid_argument);
}

TEST(MlpGradient, ZeroSeedGivesZeroGradient) {
  crl::Rng rng(6);
  const MlpSpec spec{{3, 4, 2}, Activation::tanh};
  const ParamVector params = crl::init_params(spec, rng);
  EXPECT_EQ(crl::mlp_gradient(spec, params, Eigen::Vector2d::Zero(), Eigen::Vector3d(1, 2, 3)),
            ParamVector::Zero(params.size()));
}

TEST(MlpGradient, LinearModelGradientIsSeedTimesInput) {
  const MlpSpec spec{{3, 1}, Activation::relu};
  const ParamVector params = ParamVector::Random(crl::param_count(spec));
  const Eigen::Vector3d x(2.0, -1.0, 0.5);
  const ParamVector g = crl::mlp_gradient(spec, params, Eigen::VectorXd::Constant(1, 3.0), x);
  EXPECT_NEAR(g(0), 6.0, 1e-15);
  EXPECT_NEAR(g(1), -3.0, 1e-15);
  EXPECT_NEAR(g(2), 1.5, 1e-15);
  EXPECT_NEAR(g(3), 3.0, 1e-15);
}

TEST(MlpGradient, MatchesCentralFiniteDifferences) {
  crl::Rng rng(7);
  const double h = 1e-5;
  for (int draw = 0; draw < 20; ++draw) {
    const Activation act = draw % 2 ? Activation::tanh : Activation::relu;
    const MlpSpec spec{{3 + draw % 3, 6, 5, 2}, act};
    const ParamVector params = crl::init_params(spec, rng);
    const Eigen::VectorXd x = Eigen::VectorXd::Random(spec.input_size());
    const Eigen::VectorXd seed = Eigen::VectorXd::Random(2);
    const ParamVector g = crl::mlp_gradient(spec, params, seed, x);
    ParamVector fd(params.size());
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      ParamVector plus = params;
      ParamVector minus = params;
      plus(i) += h;
      minus(i) -= h;
      fd(i) = (crl::mlp_forward(spec, plus, x).dot(seed) - crl::mlp_forward(spec, minus, x).dot(seed)) / (2 * h);
    }
    EXPECT_LT(max_relative_error(g, fd), 1e-4) << "draw " << draw;
  }
}

TEST(MlpGradient, InputGradientMatchesFiniteDifferences) {
  crl::Rng rng(8);
  const MlpSpec spec{{4, 6, 3}, Activation::tanh};
  const ParamVector params = crl::init_params(spec, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 1);
  const Eigen::MatrixXd seed = Eigen::MatrixXd::Random(3, 1);
  crl::MlpTape tape;
  crl::mlp_forward_batch(spec, params, x, &tape);
  const auto grad = crl::mlp_backward(spec, params, tape, seed);
  const double h = 1e-6;
  for (int i = 0; i < 4; ++i) {
    Eigen::MatrixXd plus = x;
    Eigen::MatrixXd minus = x;
    plus(i, 0) += h;
    minus(i, 0) -= h;
    const double fd = ((crl::mlp_forward_batch(spec, params, plus) - crl::mlp_forward_batch(spec, params, minus))
                           .cwiseProduct(seed)
                           .sum()) /
                      (2 * h);
    EXPECT_NEAR(grad.inputs(i, 0), fd, 1e-7);
  }
}

TEST(Adam, ZeroGradientLeavesParams) {
  auto state = crl::AdamState::for_params(2, 0.1);
  ParamVector params = Eigen::Vector2d(1.0, -1.0);
  crl::adam_step(state, params, ParamVector::Zero(2));
  EXPECT_EQ(params, Eigen::Vector2d(1.0, -1.0));
  EXPECT_EQ(state.t, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto state = crl::AdamState::for_params(1, 0.1);
  ParamVector params = ParamVector::Zero(1);
  crl::adam_step(state, params, ParamVector::Ones(1));
  EXPECT_NEAR(params(0), -0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, TenStepScalarTrace) {
  // Textbook recurrences, traced by hand on a gradient sequence.
  auto state = crl::AdamState::for_params(1, 0.01);
  ParamVector params = ParamVector::Constant(1, 0.5);
  double m = 0.0, v = 0.0, x = 0.5;
  for (int t = 1; t <= 10; ++t) {
    const double g = std::sin(t) + 0.3 * t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.999, t));
    x -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
    crl::adam_step(state, params, ParamVector::Constant(1, g));
    EXPECT_NEAR(params(0), x, 1e-14) << "step " << t;
  }
  EXPECT_EQ(state.t, 10);
}

TEST(Adam, ClippingRescalesToThreshold) {
  // On the first step Adam's update is lr * g / |g| per coordinate, so compare
  // the moment estimate directly.
  auto state = crl::AdamState::for_params(2, 0.1);
  ParamVector params = ParamVector::Zero(2);
  crl::adam_step(state, params, Eigen::Vector2d(2.0, 0.0), 0.5);
  EXPECT_NEAR(state.m.norm() / 0.1, 0.5, 1e-12);
}

TEST(Adam, NonFiniteGradientThrows) {
  auto state = crl::AdamState::for_params(1, 0.1);
  ParamVector params = ParamVector::Zero(1);
  EXPECT_THROW(crl::adam_step(state, params, ParamVector::Constant(1, std::nan(""))), crl::NumericalError);
}

TEST(TargetSync, HardAndPolyak) {
  const ParamVector online = Eigen::Vector3d(1, 2, 3);
  ParamVector target = Eigen::Vector3d(0, 0, 0);
  crl::target_sync(target, online, crl::TargetSync::polyak(0.0));
  EXPECT_EQ(target, Eigen::Vector3d(0, 0, 0));
  crl::target_sync(target, online, crl::TargetSync::polyak(0.005));
  EXPECT_NEAR((target - 0.005 * online).norm(), 0.0, 1e-15);
  ParamVector polyak_one = ParamVector::Zero(3);
  crl::target_sync(polyak_one, online, crl::TargetSync::polyak(1.0));
  crl::target_sync(target, online, crl::TargetSync::hard());
  EXPECT_EQ(target, online);
  EXPECT_EQ(polyak_one, online);
  ParamVector wrong = ParamVector::Zero(2);
  EXPECT_THROW(crl::target_sync(wrong, online, crl::TargetSync::hard()), std::invalid_argument);
}

TEST(Network, JsonCheckpointRoundTrip) {
  crl::Rng rng(9);
  crl::Network net(MlpSpec{{3, 4, 2}, Activation::tanh}, rng, 1e-3);
  crl::adam_step(net.adam, net.params, ParamVector::Random(net.params.size()));
  const crl::Network back = crl::network_from_json(crl::network_to_json(net));
  EXPECT_EQ(back.spec, net.spec);
  EXPECT_EQ(back.params, net.params);
  EXPECT_EQ(back.adam.m, net.adam.m);
  EXPECT_EQ(back.adam.v, net.adam.v);
  EXPECT_EQ(back.adam.t, net.adam.t);
}

TEST(Network, InitWithinFanInBounds) {
  crl::Rng rng(10);
  const MlpSpec spec{{16, 4}, Activation::relu};
  const ParamVector params = crl::init_params(spec, rng);
  EXPECT_LE(params.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_GT(params.cwiseAbs().maxCoeff(), 0.0);
}
