#include "spudrf/backbone.hpp"

#include "spudrf/errors.hpp"
#include "spudrf/random.hpp"

#include <cmath>
#include <string>

namespace spudrf {
namespace {

void apply_activation(Activation a, const Eigen::MatrixXd& pre, Eigen::MatrixXd& out) {
  switch (a) {
    case Activation::kTanh:
      out = pre.array().tanh().matrix();
      return;
    case Activation::kSigmoid:
      out = (1.0 / (1.0 + (-pre.array()).exp())).matrix();
      return;
    case Activation::kIdentity:
      out = pre;
      return;
  }
}

// Derivative expressed through the activation output y = act(pre).
Eigen::MatrixXd activation_derivative(Activation a, const Eigen::MatrixXd& out) {
  switch (a) {
    case Activation::kTanh:
      return (1.0 - out.array().square()).matrix();
    case Activation::kSigmoid:
      return (out.array() * (1.0 - out.array())).matrix();
    case Activation::kIdentity:
      break;
  }
  return Eigen::MatrixXd::Ones(out.rows(), out.cols());
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kIdentity:
      return "identity";
  }
  return "identity";
}

std::size_t BackboneParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weights.cols());
}

std::size_t BackboneParams::feature_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weights.rows());
}

std::size_t BackboneParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

void BackboneParams::validate() const {
  if (layers.empty()) throw ConfigError("backbone has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weights.rows() == 0 || layer.weights.cols() == 0)
      throw ConfigError("backbone layer " + std::to_string(l) + " is empty");
    if (layer.bias.size() != layer.weights.rows())
      throw ConfigError("backbone layer " + std::to_string(l) + ": bias length " +
                        std::to_string(layer.bias.size()) + " != output width " +
                        std::to_string(layer.weights.rows()));
    if (l > 0 && layers[l - 1].weights.rows() != layer.weights.cols())
      throw ConfigError("backbone layer " + std::to_string(l) + ": input width " +
                        std::to_string(layer.weights.cols()) + " != previous output width " +
                        std::to_string(layers[l - 1].weights.rows()));
    if (!layer.weights.allFinite() || !layer.bias.allFinite())
      throw InputError("backbone layer " + std::to_string(l) + " has non-finite parameters");
  }
}

BackboneParams init_backbone(const BackboneSpec& spec, std::uint64_t seed) {
  if (spec.input_dim == 0 || spec.feature_dim == 0)
    throw ConfigError("backbone input_dim and feature_dim must be positive");
  std::vector<std::size_t> widths;
  widths.push_back(spec.input_dim);
  for (auto h : spec.hidden) {
    if (h == 0) throw ConfigError("backbone hidden widths must be positive");
    widths.push_back(h);
  }
  widths.push_back(spec.feature_dim);

  Rng rng(derive_seed(seed, streams::kBackboneInit));
  BackboneParams params;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto fan_in = widths[l];
    const auto fan_out = widths[l + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-s, s);
    DenseLayer layer;
    layer.weights.resize(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = dist(rng);
    layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fan_out));
    layer.activation = (l + 2 == widths.size()) ? Activation::kIdentity : spec.hidden_activation;
    params.layers.push_back(std::move(layer));
  }
  return params;
}

BatchForward forward_batch(const Eigen::MatrixXd& inputs, const BackboneParams& params) {
  if (params.layers.empty()) throw ConfigError("backbone has no layers");
  if (static_cast<std::size_t>(inputs.rows()) != params.input_dim())
    throw ConfigError("input width " + std::to_string(inputs.rows()) +
                      " != backbone input width " + std::to_string(params.input_dim()));
  if (!inputs.allFinite()) throw InputError("non-finite backbone input");

  BatchForward out;
  auto& cache = out.cache;
  cache.generation = params.generation;
  cache.activations.reserve(params.layers.size() + 1);
  cache.pre_activations.reserve(params.layers.size());
  cache.activations.push_back(inputs);
  for (const auto& layer : params.layers) {
    Eigen::MatrixXd pre = layer.weights * cache.activations.back();
    pre.colwise() += layer.bias;
    Eigen::MatrixXd act;
    apply_activation(layer.activation, pre, act);
    cache.pre_activations.push_back(std::move(pre));
    cache.activations.push_back(std::move(act));
  }
  out.features = cache.activations.back();
  return out;
}

VectorForward forward(std::span<const double> x, const BackboneParams& params) {
  Eigen::MatrixXd input(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) input(static_cast<Eigen::Index>(i), 0) = x[i];
  auto batch = forward_batch(input, params);
  return {batch.features.col(0), std::move(batch.cache)};
}

BackboneGradients BackboneGradients::zeros_like(const BackboneParams& params) {
  BackboneGradients g;
  for (const auto& layer : params.layers) {
    g.weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  return g;
}

bool BackboneGradients::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : bias)
    if (!b.allFinite()) return false;
  return true;
}

BackboneGradients& BackboneGradients::operator+=(const BackboneGradients& other) {
  if (other.weights.size() != weights.size()) throw UsageError("gradient shape mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    bias[l] += other.bias[l];
  }
  return *this;
}

BackboneGradients& BackboneGradients::operator*=(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : bias) b *= factor;
  return *this;
}

BackboneGradients backward(const Eigen::MatrixXd& grad_features, const ForwardCache& cache,
                           const BackboneParams& params) {
  if (cache.generation != params.generation)
    throw UsageError("stale forward cache: parameters changed since forward()");
  if (cache.activations.size() != params.layers.size() + 1)
    throw UsageError("forward cache does not match backbone depth");
  if (static_cast<std::size_t>(grad_features.rows()) != params.feature_dim() ||
      grad_features.cols() != cache.activations.back().cols())
    throw UsageError("upstream gradient shape does not match forward cache");

  BackboneGradients grads = BackboneGradients::zeros_like(params);
  Eigen::MatrixXd delta = grad_features;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const auto& layer = params.layers[l];
    delta = delta.cwiseProduct(activation_derivative(layer.activation, cache.activations[l + 1]));
    grads.weights[l] = delta * cache.activations[l].transpose();
    grads.bias[l] = delta.rowwise().sum();
    if (l > 0) delta = layer.weights.transpose() * delta;
  }
  return grads;
}

BackboneGradients backward(const Eigen::VectorXd& grad_features, const ForwardCache& cache,
                           const BackboneParams& params) {
  const Eigen::MatrixXd g = grad_features;
  return backward(g, cache, params);
}

void sgd_step(BackboneParams& params, const BackboneGradients& grads, double learning_rate) {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning rate must be finite and non-negative");
  if (grads.weights.size() != params.layers.size()) throw UsageError("gradient shape mismatch");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (grads.weights[l].rows() != params.layers[l].weights.rows() ||
        grads.weights[l].cols() != params.layers[l].weights.cols() ||
        grads.bias[l].size() != params.layers[l].bias.size())
      throw UsageError("gradient shape mismatch at layer " + std::to_string(l));
  }
  if (!grads.all_finite()) throw NumericError("non-finite gradient entries; step aborted");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    params.layers[l].weights -= learning_rate * grads.weights[l];
    params.layers[l].bias -= learning_rate * grads.bias[l];
  }
  ++params.generation;
}

double scheduled_learning_rate(double base_rate, std::size_t step, std::size_t halve_every) {
  if (halve_every == 0) return base_rate;
  return base_rate * std::ldexp(1.0, -static_cast<int>(step / halve_every));
}

std::vector<double> flatten(const BackboneParams& params) {
  std::vector<double> out;
  out.reserve(params.parameter_count());
  for (const auto& l : params.layers) {
    out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

std::vector<double> flatten(const BackboneGradients& grads) {
  std::vector<double> out;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    out.insert(out.end(), grads.weights[l].data(), grads.weights[l].data() + grads.weights[l].size());
    out.insert(out.end(), grads.bias[l].data(), grads.bias[l].data() + grads.bias[l].size());
  }
  return out;
}

void assign_flat(BackboneParams& params, std::span<const double> values) {
  if (values.size() != params.parameter_count())
    throw UsageError("flat parameter vector has wrong length");
  std::size_t k = 0;
  for (auto& l : params.layers) {
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = values[k++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = values[k++];
  }
  ++params.generation;
}

}  // namespace spudrf
