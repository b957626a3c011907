#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace spudrf {

enum class Activation { kTanh, kSigmoid, kIdentity };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
  Activation activation = Activation::kIdentity;
};

struct BackboneSpec {
  std::size_t input_dim = 8;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t feature_dim = 128;
  Activation hidden_activation = Activation::kTanh;
};

/// Parameters of the fully-connected feature extractor. Hidden layers use a
/// nonlinear activation; the output layer is the identity.
///
/// `generation` counts optimizer writes; caches remember the generation they
/// were produced under and are rejected by backward() once it moves on.
struct BackboneParams {
  std::vector<DenseLayer> layers;
  std::uint64_t generation = 0;

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  std::size_t parameter_count() const;

  /// Throws ConfigError on shape mismatch between consecutive layers or
  /// InputError on non-finite entries.
  void validate() const;
};

/// Weights uniform in [-s, s], s = sqrt(6 / (fan_in + fan_out)); biases zero.
BackboneParams init_backbone(const BackboneSpec& spec, std::uint64_t seed);

/// Per-layer activations for one mini-batch; column j belongs to sample j.
/// activations[0] is the input, activations[l + 1] the output of layer l.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre_activations;
  std::vector<Eigen::MatrixXd> activations;
  std::uint64_t generation = 0;

  std::size_t batch_size() const {
    return activations.empty() ? 0 : static_cast<std::size_t>(activations.front().cols());
  }
};

struct BatchForward {
  Eigen::MatrixXd features;  // feature_dim x batch
  ForwardCache cache;
};

struct VectorForward {
  Eigen::VectorXd features;
  ForwardCache cache;
};

/// inputs: input_dim x batch.
BatchForward forward_batch(const Eigen::MatrixXd& inputs, const BackboneParams& params);
VectorForward forward(std::span<const double> x, const BackboneParams& params);

/// Gradient of a scalar loss with respect to every weight and bias. Shapes
/// mirror BackboneParams::layers.
struct BackboneGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;

  static BackboneGradients zeros_like(const BackboneParams& params);
  bool all_finite() const;
  BackboneGradients& operator+=(const BackboneGradients& other);
  BackboneGradients& operator*=(double factor);
};

/// Chain rule through every layer. grad_features is feature_dim x batch and
/// holds dLoss/df per sample; contributions are summed over the batch.
BackboneGradients backward(const Eigen::MatrixXd& grad_features, const ForwardCache& cache,
                           const BackboneParams& params);
BackboneGradients backward(const Eigen::VectorXd& grad_features, const ForwardCache& cache,
                           const BackboneParams& params);

/// params <- params - learning_rate * grads. Rejects non-finite gradients
/// with NumericError before touching params.
void sgd_step(BackboneParams& params, const BackboneGradients& grads, double learning_rate);

/// Base rate halved every `halve_every` steps; halve_every == 0 disables decay.
double scheduled_learning_rate(double base_rate, std::size_t step, std::size_t halve_every);

// Flat views in layer order (weights column-major, then bias), used by
// finite-difference checks.
std::vector<double> flatten(const BackboneParams& params);
std::vector<double> flatten(const BackboneGradients& grads);
void assign_flat(BackboneParams& params, std::span<const double> values);

}  // namespace spudrf
