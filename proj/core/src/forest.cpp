#include "spudrf/forest.hpp"

#include "spudrf/errors.hpp"
#include "spudrf/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace spudrf {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void check_features(std::span<const double> features, const TreeTopology& tree) {
  for (auto j : tree.index_map)
    if (j >= features.size()) throw UsageError("feature vector shorter than tree index map");
}

// Raw (unclamped) log p_T and the per-leaf log terms log omega_l + log N_l.
double raw_tree_log_density(double y, std::span<const double> omega,
                            std::span<const LeafParams> leaves, std::vector<double>& terms) {
  terms.assign(leaves.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    if (omega[l] > 0.0)
      terms[l] = std::log(omega[l]) + log_gaussian(y, leaves[l].mean, leaves[l].variance);
  }
  return log_sum_exp(terms);
}

LogDensity clamp_log_density(double raw) {
  if (!(raw >= kLogDensityFloor)) return {kLogDensityFloor, true};
  return {raw, false};
}

}  // namespace

TreeTopology TreeTopology::make(std::size_t depth, std::size_t feature_dim, std::uint64_t seed) {
  if (depth < 1 || depth > 20) throw ConfigError("tree depth must be in [1, 20]");
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  TreeTopology t;
  t.depth = depth;
  const auto n_splits = t.split_count();
  Rng rng(seed);
  std::vector<std::size_t> pool(feature_dim);
  while (t.index_map.size() < n_splits) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto take = std::min(pool.size(), n_splits - t.index_map.size());
    t.index_map.insert(t.index_map.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return t;
}

void TreeTopology::validate(std::size_t feature_dim) const {
  if (depth < 1) throw ConfigError("tree depth must be at least 1");
  if (index_map.size() != split_count())
    throw ConfigError("index map has " + std::to_string(index_map.size()) + " entries, expected " +
                      std::to_string(split_count()));
  for (auto j : index_map)
    if (j >= feature_dim)
      throw ConfigError("index map entry " + std::to_string(j) + " out of range for feature_dim " +
                        std::to_string(feature_dim));
}

void ForestModel::validate() const {
  backbone.validate();
  if (trees.empty()) throw ConfigError("forest has no trees");
  for (std::size_t k = 0; k < trees.size(); ++k) {
    const auto& tree = trees[k];
    tree.topology.validate(backbone.feature_dim());
    if (tree.leaves.size() != tree.topology.leaf_count())
      throw ConfigError("tree " + std::to_string(k) + " has " + std::to_string(tree.leaves.size()) +
                        " leaves, expected " + std::to_string(tree.topology.leaf_count()));
    for (const auto& leaf : tree.leaves)
      if (!std::isfinite(leaf.mean) || !std::isfinite(leaf.variance) || !(leaf.variance > 0.0))
        throw ConfigError("tree " + std::to_string(k) + " has an invalid leaf");
  }
}

ForestModel make_forest(BackboneParams backbone, const ForestSpec& spec, std::uint64_t seed) {
  if (spec.trees == 0) throw ConfigError("forest needs at least one tree");
  ForestModel model;
  const auto feature_dim = backbone.feature_dim();
  model.backbone = std::move(backbone);
  const auto base = derive_seed(seed, streams::kTreeIndexMap);
  for (std::size_t k = 0; k < spec.trees; ++k) {
    Tree tree;
    tree.topology = TreeTopology::make(spec.depth, feature_dim, derive_seed(base, k));
    tree.leaves.assign(tree.topology.leaf_count(), LeafParams{});
    model.trees.push_back(std::move(tree));
  }
  return model;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_gaussian(double y, double mean, double variance) {
  const double d = y - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + d * d / variance);
}

double log_sum_exp(std::span<const double> values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

double split_probability(std::span<const double> features, const TreeTopology& tree,
                         std::size_t node) {
  if (node >= tree.split_count())
    throw UsageError("split node " + std::to_string(node) + " out of range (" +
                     std::to_string(tree.split_count()) + " splits)");
  const auto j = tree.index_map[node];
  if (j >= features.size()) throw UsageError("feature vector shorter than tree index map");
  return sigmoid(features[j]);
}

std::vector<double> leaf_reach_probabilities(std::span<const double> features,
                                             const TreeTopology& tree) {
  check_features(features, tree);
  for (auto j : tree.index_map)
    if (!std::isfinite(features[j])) throw InputError("non-finite feature in routing");
  const auto n_splits = tree.split_count();
  std::vector<double> reach(n_splits + tree.leaf_count());
  reach[0] = 1.0;
  for (std::size_t n = 0; n < n_splits; ++n) {
    const double s = sigmoid(features[tree.index_map[n]]);
    reach[2 * n + 1] = reach[n] * s;
    reach[2 * n + 2] = reach[n] * (1.0 - s);
  }
  return {reach.begin() + static_cast<std::ptrdiff_t>(n_splits), reach.end()};
}

LogDensity tree_log_density(double y, std::span<const double> omega,
                            std::span<const LeafParams> leaves) {
  if (omega.size() != leaves.size()) throw UsageError("routing and leaf counts differ");
  std::vector<double> terms;
  return clamp_log_density(raw_tree_log_density(y, omega, leaves, terms));
}

double tree_entropy(std::span<const double> omega, std::span<const LeafParams> leaves) {
  if (omega.size() != leaves.size()) throw UsageError("routing and leaf counts differ");
  double h = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l)
    h += omega[l] * (std::log(2.0 * std::numbers::pi * leaves[l].variance) + 1.0);
  return 0.5 * h;
}

SampleEvaluation evaluate_features(std::span<const double> features, double y,
                                   const ForestModel& model) {
  SampleEvaluation eval;
  const auto k_trees = model.trees.size();
  eval.omega.reserve(k_trees);
  eval.tree_log_densities.reserve(k_trees);
  std::vector<double> terms;
  double entropy = 0.0;
  double prediction = 0.0;
  for (const auto& tree : model.trees) {
    auto omega = leaf_reach_probabilities(features, tree.topology);
    eval.tree_log_densities.push_back(raw_tree_log_density(y, omega, tree.leaves, terms));
    entropy += tree_entropy(omega, tree.leaves);
    double mean = 0.0;
    for (std::size_t l = 0; l < omega.size(); ++l) mean += omega[l] * tree.leaves[l].mean;
    prediction += mean;
    eval.omega.push_back(std::move(omega));
  }
  const double inv_k = 1.0 / static_cast<double>(k_trees);
  const auto ll = clamp_log_density(log_sum_exp(eval.tree_log_densities) -
                                    std::log(static_cast<double>(k_trees)));
  eval.log_likelihood = ll.value;
  eval.floored = ll.floored;
  eval.entropy = entropy * inv_k;
  eval.prediction = prediction * inv_k;
  return eval;
}

LogDensity forest_log_likelihood_from_features(std::span<const double> features, double y,
                                               const ForestModel& model) {
  std::vector<double> tree_values;
  tree_values.reserve(model.trees.size());
  std::vector<double> terms;
  for (const auto& tree : model.trees) {
    const auto omega = leaf_reach_probabilities(features, tree.topology);
    tree_values.push_back(raw_tree_log_density(y, omega, tree.leaves, terms));
  }
  return clamp_log_density(log_sum_exp(tree_values) -
                           std::log(static_cast<double>(model.trees.size())));
}

double predict_from_features(std::span<const double> features, const ForestModel& model) {
  double total = 0.0;
  for (const auto& tree : model.trees) {
    const auto omega = leaf_reach_probabilities(features, tree.topology);
    double mean = 0.0;
    for (std::size_t l = 0; l < omega.size(); ++l) mean += omega[l] * tree.leaves[l].mean;
    total += mean;
  }
  return total / static_cast<double>(model.trees.size());
}

double forest_entropy_from_features(std::span<const double> features, const ForestModel& model) {
  double total = 0.0;
  for (const auto& tree : model.trees)
    total += tree_entropy(leaf_reach_probabilities(features, tree.topology), tree.leaves);
  return total / static_cast<double>(model.trees.size());
}

LogDensity forest_log_likelihood(std::span<const double> x, double y, const ForestModel& model) {
  const auto fwd = forward(x, model.backbone);
  return forest_log_likelihood_from_features(as_span(fwd.features), y, model);
}

double predict(std::span<const double> x, const ForestModel& model) {
  const auto fwd = forward(x, model.backbone);
  return predict_from_features(as_span(fwd.features), model);
}

double forest_entropy(std::span<const double> x, const ForestModel& model) {
  const auto fwd = forward(x, model.backbone);
  return forest_entropy_from_features(as_span(fwd.features), model);
}

LogDensity log_likelihood_feature_gradient(std::span<const double> features, double y,
                                           const ForestModel& model, std::span<double> grad) {
  if (grad.size() != features.size()) throw UsageError("gradient buffer has wrong length");
  std::fill(grad.begin(), grad.end(), 0.0);

  const auto k_trees = model.trees.size();
  std::vector<std::vector<double>> omegas(k_trees);
  std::vector<std::vector<double>> log_terms(k_trees);
  std::vector<double> tree_values(k_trees);
  for (std::size_t k = 0; k < k_trees; ++k) {
    const auto& tree = model.trees[k];
    omegas[k] = leaf_reach_probabilities(features, tree.topology);
    tree_values[k] = raw_tree_log_density(y, omegas[k], tree.leaves, log_terms[k]);
  }
  const double log_total = log_sum_exp(tree_values);
  const auto ll = clamp_log_density(log_total - std::log(static_cast<double>(k_trees)));
  if (ll.floored) return ll;

  std::vector<double> subtree;
  for (std::size_t k = 0; k < k_trees; ++k) {
    const auto& tree = model.trees[k];
    const double tree_weight = std::exp(tree_values[k] - log_total);
    if (tree_weight == 0.0) continue;
    const auto n_splits = tree.topology.split_count();
    const auto n_leaves = tree.topology.leaf_count();
    // Posterior mass of each node's subtree, bottom-up.
    subtree.assign(n_splits + n_leaves, 0.0);
    for (std::size_t l = 0; l < n_leaves; ++l)
      subtree[n_splits + l] = std::exp(log_terms[k][l] - tree_values[k]);
    for (std::size_t n = n_splits; n-- > 0;) subtree[n] = subtree[2 * n + 1] + subtree[2 * n + 2];
    for (std::size_t n = 0; n < n_splits; ++n) {
      const auto j = tree.topology.index_map[n];
      const double s = sigmoid(features[j]);
      grad[j] += tree_weight * ((1.0 - s) * subtree[2 * n + 1] - s * subtree[2 * n + 2]);
    }
  }
  return ll;
}

double entropy_feature_gradient(std::span<const double> features, const ForestModel& model,
                                std::span<double> grad) {
  if (grad.size() != features.size()) throw UsageError("gradient buffer has wrong length");
  std::fill(grad.begin(), grad.end(), 0.0);
  const double inv_k = 1.0 / static_cast<double>(model.trees.size());
  double h = 0.0;
  std::vector<double> subtree;
  for (const auto& tree : model.trees) {
    const auto omega = leaf_reach_probabilities(features, tree.topology);
    h += tree_entropy(omega, tree.leaves);
    const auto n_splits = tree.topology.split_count();
    const auto n_leaves = tree.topology.leaf_count();
    subtree.assign(n_splits + n_leaves, 0.0);
    for (std::size_t l = 0; l < n_leaves; ++l)
      subtree[n_splits + l] =
          omega[l] * (std::log(2.0 * std::numbers::pi * tree.leaves[l].variance) + 1.0);
    for (std::size_t n = n_splits; n-- > 0;) subtree[n] = subtree[2 * n + 1] + subtree[2 * n + 2];
    for (std::size_t n = 0; n < n_splits; ++n) {
      const auto j = tree.topology.index_map[n];
      const double s = sigmoid(features[j]);
      grad[j] += 0.5 * inv_k * ((1.0 - s) * subtree[2 * n + 1] - s * subtree[2 * n + 2]);
    }
  }
  return h * inv_k;
}

MonteCarloEstimate mc_entropy_oracle(std::span<const double> omega,
                                     std::span<const LeafParams> leaves, std::size_t n_samples,
                                     std::uint64_t seed) {
  if (n_samples < 1000) throw UsageError("mc_entropy_oracle needs at least 1000 samples");
  if (omega.size() != leaves.size()) throw UsageError("routing and leaf counts differ");
  Rng rng(seed);
  std::discrete_distribution<std::size_t> component(omega.begin(), omega.end());
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> terms;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto c = component(rng);
    const double y = leaves[c].mean + std::sqrt(leaves[c].variance) * unit(rng);
    const double nll = -raw_tree_log_density(y, omega, leaves, terms);
    sum += nll;
    sum_sq += nll * nll;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

}  // namespace spudrf
