#include "oracles.hpp"

#include "spudrf/backbone.hpp"
#include "spudrf/errors.hpp"
#include "spudrf/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace spudrf;

namespace {

BackboneParams single_layer(Eigen::MatrixXd w, Eigen::VectorXd b, Activation a) {
  BackboneParams p;
  p.layers.push_back({std::move(w), std::move(b), a});
  return p;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(Backbone, IdentityLayerPassesInputThrough) {
  auto p = single_layer(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), Activation::kIdentity);
  const std::vector<double> x{0.3, -0.7};
  const auto out = forward(x, p);
  EXPECT_DOUBLE_EQ(out.features(0), 0.3);
  EXPECT_DOUBLE_EQ(out.features(1), -0.7);
}

TEST(Backbone, ZeroWeightsGiveActivationOfBias) {
  Eigen::VectorXd b(3);
  b << 0.5, -1.0, 2.0;
  auto p = single_layer(Eigen::MatrixXd::Zero(3, 4), b, Activation::kTanh);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto out = forward(random_vector(4, s), p);
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(out.features(i), std::tanh(b(i)));
  }
}

TEST(Backbone, MatchesHandEvaluatedChain) {
  BackboneSpec spec{5, {7}, 4, Activation::kTanh};
  const auto p = init_backbone(spec, 7);
  const auto x = random_vector(5, 7);
  const auto out = forward(x, p);
  const auto ref = oracle::mlp_forward(p, x);
  ASSERT_EQ(ref.size(), 4u);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.features(static_cast<Eigen::Index>(i)), ref[i], 1e-14);
}

TEST(Backbone, SigmoidHiddenLayersMatchOracle) {
  BackboneSpec spec{3, {6, 5}, 4, Activation::kSigmoid};
  const auto p = init_backbone(spec, 11);
  const auto x = random_vector(3, 2);
  const auto out = forward(x, p);
  const auto ref = oracle::mlp_forward(p, x);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.features(static_cast<Eigen::Index>(i)), ref[i], 1e-14);
}

TEST(Backbone, InitIsSeededAndBounded) {
  BackboneSpec spec{8, {64, 64}, 128, Activation::kTanh};
  const auto a = init_backbone(spec, 3);
  const auto b = init_backbone(spec, 3);
  EXPECT_EQ(flatten(a), flatten(b));
  EXPECT_NE(flatten(a), flatten(init_backbone(spec, 4)));
  ASSERT_EQ(a.layers.size(), 3u);
  EXPECT_EQ(a.layers.back().activation, Activation::kIdentity);
  EXPECT_EQ(a.layers.front().activation, Activation::kTanh);
  for (const auto& layer : a.layers) {
    const double s = std::sqrt(6.0 / static_cast<double>(layer.weights.rows() + layer.weights.cols()));
    EXPECT_LE(layer.weights.cwiseAbs().maxCoeff(), s);
    EXPECT_EQ(layer.bias.cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(a.parameter_count(), 8u * 64 + 64 + 64 * 64 + 64 + 64 * 128 + 128);
}

TEST(Backbone, ForwardRejectsBadInput) {
  const auto p = init_backbone({3, {4}, 2, Activation::kTanh}, 0);
  EXPECT_THROW(forward(std::vector<double>{1.0, 2.0}, p), ConfigError);
  EXPECT_THROW(forward(std::vector<double>{1.0, std::nan(""), 0.0}, p), InputError);
}

TEST(Backbone, ValidateCatchesShapeMismatch) {
  auto p = init_backbone({3, {4}, 2, Activation::kTanh}, 0);
  p.layers[1].weights = Eigen::MatrixXd::Zero(2, 5);
  EXPECT_THROW(p.validate(), ConfigError);
  auto q = init_backbone({3, {4}, 2, Activation::kTanh}, 0);
  q.layers[0].weights(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(q.validate(), InputError);
}

TEST(Backbone, ZeroUpstreamGradientGivesZeroGradients) {
  const auto p = init_backbone({3, {4, 4}, 5, Activation::kTanh}, 1);
  const auto fwd = forward(random_vector(3, 1), p);
  const auto g = backward(Eigen::VectorXd(Eigen::VectorXd::Zero(5)), fwd.cache, p);
  for (double v : flatten(g)) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, LinearLayerGradientIsInput) {
  auto p = single_layer(Eigen::MatrixXd::Random(2, 3), Eigen::VectorXd::Zero(2), Activation::kIdentity);
  const std::vector<double> x{0.2, -0.4, 1.5};
  const auto fwd = forward(x, p);
  Eigen::VectorXd up = Eigen::VectorXd::Zero(2);
  up(0) = 1.0;  // loss = f_1
  const auto g = backward(up, fwd.cache, p);
  for (int c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(g.weights[0](0, c), x[static_cast<std::size_t>(c)]);
    EXPECT_DOUBLE_EQ(g.weights[0](1, c), 0.0);
  }
  EXPECT_DOUBLE_EQ(g.bias[0](0), 1.0);
  EXPECT_DOUBLE_EQ(g.bias[0](1), 0.0);
}

// Property: analytic gradient of <u, f(x)> agrees with central differences.
TEST(Backbone, GradientMatchesFiniteDifferences) {
  for (std::uint64_t trial = 0; trial < 12; ++trial) {
    const Activation act = trial % 2 == 0 ? Activation::kTanh : Activation::kSigmoid;
    auto p = init_backbone({4, {5, 6}, 3, act}, 100 + trial);
    const auto x = random_vector(4, 200 + trial);
    const auto u = random_vector(3, 300 + trial);
    const Eigen::Map<const Eigen::VectorXd> up(u.data(), 3);
    const auto fwd = forward(x, p);
    const auto analytic = flatten(backward(Eigen::VectorXd(up), fwd.cache, p));
    auto loss = [&](const std::vector<double>& theta) {
      BackboneParams q = p;
      assign_flat(q, theta);
      const auto f = oracle::mlp_forward(q, x);
      double s = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) s += u[i] * f[i];
      return s;
    };
    const auto numeric = oracle::central_difference(loss, flatten(p), 1e-5);
    EXPECT_LE(oracle::max_relative_error(analytic, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(Backbone, BatchGradientSumsOverColumns) {
  const auto p = init_backbone({3, {4}, 2, Activation::kTanh}, 5);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
  Eigen::MatrixXd up = Eigen::MatrixXd::Random(2, 4);
  const auto batch = forward_batch(x, p);
  const auto total = flatten(backward(up, batch.cache, p));
  std::vector<double> sum(total.size(), 0.0);
  for (int c = 0; c < 4; ++c) {
    const Eigen::VectorXd xc = x.col(c);
    const auto fwd = forward(std::span<const double>(xc.data(), 3), p);
    const auto g = flatten(backward(Eigen::VectorXd(up.col(c)), fwd.cache, p));
    for (std::size_t i = 0; i < g.size(); ++i) sum[i] += g[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) EXPECT_NEAR(total[i], sum[i], 1e-13);
}

TEST(Backbone, StaleCacheIsRejected) {
  auto p = init_backbone({3, {4}, 2, Activation::kTanh}, 0);
  const auto fwd = forward(random_vector(3, 0), p);
  auto g = BackboneGradients::zeros_like(p);
  sgd_step(p, g, 0.1);
  EXPECT_THROW(backward(Eigen::VectorXd(Eigen::VectorXd::Ones(2)), fwd.cache, p), UsageError);
}

TEST(Backbone, SgdStepArithmetic) {
  auto p = init_backbone({2, {3}, 2, Activation::kTanh}, 9);
  const auto before = flatten(p);
  auto g = BackboneGradients::zeros_like(p);
  for (auto& w : g.weights) w.setConstant(0.7);
  for (auto& b : g.bias) b.setConstant(-0.3);
  sgd_step(p, g, 0.0);
  EXPECT_EQ(flatten(p), before);

  assign_flat(p, std::vector<double>(before.size(), 0.0));
  sgd_step(p, g, 1.0);
  const auto flat_g = flatten(g);
  const auto after = flatten(p);
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_DOUBLE_EQ(after[i], -flat_g[i]);
}

TEST(Backbone, SgdStepOnScalarExample) {
  auto p = single_layer(Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Zero(1), Activation::kIdentity);
  auto g = BackboneGradients::zeros_like(p);
  g.weights[0](0, 0) = 0.5;
  sgd_step(p, g, 0.2);
  EXPECT_DOUBLE_EQ(p.layers[0].weights(0, 0), 0.9);
}

TEST(Backbone, SgdRejectsNonFiniteGradientWithoutTouchingParams) {
  auto p = init_backbone({2, {3}, 2, Activation::kTanh}, 9);
  const auto before = flatten(p);
  const auto gen = p.generation;
  auto g = BackboneGradients::zeros_like(p);
  g.bias[0](1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(sgd_step(p, g, 0.1), NumericError);
  EXPECT_EQ(flatten(p), before);
  EXPECT_EQ(p.generation, gen);
}

TEST(Backbone, LearningRateHalvesOnSchedule) {
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(0.2, 0, 10), 0.2);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(0.2, 9, 10), 0.2);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(0.2, 10, 10), 0.1);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(0.2, 35, 10), 0.025);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(0.2, 1000, 0), 0.2);
}

TEST(Backbone, DeterministicAfterSteps) {
  auto run = [] {
    auto p = init_backbone({3, {8}, 4, Activation::kTanh}, 21);
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(3, 5, 0.25);
    x(1, 2) = -0.5;
    for (int s = 0; s < 10; ++s) {
      const auto fwd = forward_batch(x, p);
      sgd_step(p, backward(fwd.features, fwd.cache, p), 0.01);
    }
    return flatten(p);
  };
  EXPECT_EQ(run(), run());
}

TEST(Backbone, ActivationNamesRoundTrip) {
  for (auto a : {Activation::kTanh, Activation::kSigmoid, Activation::kIdentity})
    EXPECT_EQ(parse_activation(activation_name(a)), a);
  EXPECT_THROW(parse_activation("relu6"), ConfigError);
}
