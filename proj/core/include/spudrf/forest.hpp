#pragma once

#include "spudrf/backbone.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace spudrf {

inline constexpr double kLogDensityFloor = -700.0;
inline constexpr double kDefaultVarianceFloor = 1e-4;

/// Complete binary tree with breadth-first split ids (children of n are
/// 2n+1 and 2n+2) and leaves numbered left to right. index_map[n] selects the
/// feature that drives split n.
struct TreeTopology {
  std::size_t depth = 1;
  std::vector<std::size_t> index_map;

  std::size_t split_count() const { return (std::size_t{1} << (depth - 1)) - 1; }
  std::size_t leaf_count() const { return std::size_t{1} << (depth - 1); }

  /// Seeded sampling of feature indices without replacement; when the tree
  /// has more splits than features, fresh permutations are concatenated.
  static TreeTopology make(std::size_t depth, std::size_t feature_dim, std::uint64_t seed);

  void validate(std::size_t feature_dim) const;
};

struct LeafParams {
  double mean = 0.0;
  double variance = 1.0;

  friend bool operator==(const LeafParams&, const LeafParams&) = default;
};

struct Tree {
  TreeTopology topology;
  std::vector<LeafParams> leaves;
};

struct ForestModel {
  BackboneParams backbone;
  std::vector<Tree> trees;

  std::size_t tree_count() const { return trees.size(); }
  void validate() const;
};

struct ForestSpec {
  std::size_t trees = 5;
  std::size_t depth = 6;
  double variance_floor = kDefaultVarianceFloor;
};

/// Topologies from the seed; leaves start at mean 0, variance 1 and are
/// expected to be fitted from data before use.
ForestModel make_forest(BackboneParams backbone, const ForestSpec& spec, std::uint64_t seed);

double sigmoid(double z);
double log_gaussian(double y, double mean, double variance);
double log_sum_exp(std::span<const double> values);

// Routing and densities from precomputed backbone features.

double split_probability(std::span<const double> features, const TreeTopology& tree,
                         std::size_t node);

/// omega_l = product over ancestors of s_n (left branch) or 1 - s_n (right).
std::vector<double> leaf_reach_probabilities(std::span<const double> features,
                                             const TreeTopology& tree);

struct LogDensity {
  double value = 0.0;
  bool floored = false;
};

/// log sum_l omega_l N(y; mu_l, var_l) by log-sum-exp; omega_l == 0 terms are
/// skipped. Values below kLogDensityFloor are clamped and flagged.
LogDensity tree_log_density(double y, std::span<const double> omega,
                            std::span<const LeafParams> leaves);

/// 1/2 sum_l omega_l (ln(2 pi var_l) + 1): the mixture-entropy lower bound.
double tree_entropy(std::span<const double> omega, std::span<const LeafParams> leaves);

/// Everything the trainer needs about one sample under the current model.
struct SampleEvaluation {
  std::vector<std::vector<double>> omega;  // per tree
  std::vector<double> tree_log_densities;
  double log_likelihood = 0.0;
  double entropy = 0.0;
  double prediction = 0.0;
  bool floored = false;
};

SampleEvaluation evaluate_features(std::span<const double> features, double y,
                                   const ForestModel& model);

LogDensity forest_log_likelihood_from_features(std::span<const double> features, double y,
                                               const ForestModel& model);
double predict_from_features(std::span<const double> features, const ForestModel& model);
double forest_entropy_from_features(std::span<const double> features, const ForestModel& model);

// Same quantities from raw inputs through the backbone.

/// log p_F = logsumexp_k(log p_Tk) - log K.
LogDensity forest_log_likelihood(std::span<const double> x, double y, const ForestModel& model);
/// Mixture mean (1/K) sum_k sum_l omega_l mu_l.
double predict(std::span<const double> x, const ForestModel& model);
/// (1/K) sum_k tree_entropy_k.
double forest_entropy(std::span<const double> x, const ForestModel& model);

/// d log p_F / d f for one sample, written into grad (length feature_dim).
/// Returns log p_F. A floored sample contributes a zero gradient.
LogDensity log_likelihood_feature_gradient(std::span<const double> features, double y,
                                           const ForestModel& model, std::span<double> grad);

/// d H / d f for the entropy bound averaged over trees, written into grad.
/// Returns H.
double entropy_feature_gradient(std::span<const double> features, const ForestModel& model,
                                std::span<double> grad);

struct MonteCarloEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

/// Samples y from the mixture and averages -log p(y). Used to check the
/// entropy bound; requires n_samples >= 1000.
MonteCarloEstimate mc_entropy_oracle(std::span<const double> omega,
                                     std::span<const LeafParams> leaves, std::size_t n_samples,
                                     std::uint64_t seed);

}  // namespace spudrf
