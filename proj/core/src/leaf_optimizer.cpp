#include "spudrf/leaf_optimizer.hpp"

#include "spudrf/errors.hpp"
#include "spudrf/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace spudrf {
namespace {

constexpr double kMinEffectiveWeight = 1e-12;

void check_inputs(const ForestModel& model, const Routing& routing,
                  std::span<const double> targets, std::span<const double> weights) {
  if (routing.size() != targets.size() || targets.size() != weights.size())
    throw UsageError("routing, targets and weights must have equal lengths");
  for (const auto& r : routing)
    if (r.size() != model.trees.size()) throw UsageError("routing does not match tree count");
}

// log((1/K) omega_kl N_kl) for every (tree, leaf), and the forest log-density.
double joint_log_terms(const ForestModel& model, const std::vector<std::vector<double>>& omega,
                       double y, std::vector<std::vector<double>>& terms) {
  const double log_k = std::log(static_cast<double>(model.trees.size()));
  double m = -std::numeric_limits<double>::infinity();
  terms.resize(model.trees.size());
  for (std::size_t k = 0; k < model.trees.size(); ++k) {
    const auto& leaves = model.trees[k].leaves;
    terms[k].assign(leaves.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      if (omega[k][l] > 0.0) {
        terms[k][l] = std::log(omega[k][l]) - log_k +
                      log_gaussian(y, leaves[l].mean, leaves[l].variance);
        m = std::max(m, terms[k][l]);
      }
    }
  }
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (const auto& row : terms)
    for (double t : row) s += std::exp(t - m);
  return m + std::log(s);
}

}  // namespace

std::vector<double> leaf_posteriors(double y, std::span<const double> omega,
                                    std::span<const LeafParams> leaves) {
  if (omega.size() != leaves.size()) throw UsageError("routing and leaf counts differ");
  std::vector<double> terms(leaves.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t l = 0; l < leaves.size(); ++l)
    if (omega[l] > 0.0)
      terms[l] = std::log(omega[l]) + log_gaussian(y, leaves[l].mean, leaves[l].variance);
  const double total = log_sum_exp(terms);
  std::vector<double> zeta(leaves.size(), 0.0);
  if (!std::isfinite(total)) {
    const auto reachable =
        std::count_if(omega.begin(), omega.end(), [](double w) { return w > 0.0; });
    for (std::size_t l = 0; l < leaves.size(); ++l)
      if (omega[l] > 0.0) zeta[l] = 1.0 / static_cast<double>(reachable);
    return zeta;
  }
  for (std::size_t l = 0; l < leaves.size(); ++l) zeta[l] = std::exp(terms[l] - total);
  return zeta;
}

Routing compute_routing(const ForestModel& model, const Eigen::MatrixXd& inputs) {
  const auto fwd = forward_batch(inputs, model.backbone);
  Routing routing(static_cast<std::size_t>(inputs.cols()));
  for (Eigen::Index i = 0; i < inputs.cols(); ++i) {
    const Eigen::VectorXd f = fwd.features.col(i);
    const std::span<const double> fs{f.data(), static_cast<std::size_t>(f.size())};
    auto& per_tree = routing[static_cast<std::size_t>(i)];
    per_tree.reserve(model.trees.size());
    for (const auto& tree : model.trees)
      per_tree.push_back(leaf_reach_probabilities(fs, tree.topology));
  }
  return routing;
}

double weighted_log_likelihood(const ForestModel& model, const Routing& routing,
                               std::span<const double> targets, std::span<const double> weights) {
  check_inputs(model, routing, targets, weights);
  std::vector<std::vector<double>> terms;
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (weights[i] == 0.0) continue;
    total += weights[i] * joint_log_terms(model, routing[i], targets[i], terms);
  }
  return total;
}

double weighted_tree_log_likelihood(const ForestModel& model, const Routing& routing,
                                    std::span<const double> targets,
                                    std::span<const double> weights) {
  check_inputs(model, routing, targets, weights);
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (weights[i] == 0.0) continue;
    for (std::size_t k = 0; k < model.trees.size(); ++k)
      total += weights[i] * tree_log_density(targets[i], routing[i][k], model.trees[k].leaves).value;
  }
  return total;
}

LeafUpdateResult update_leaves(ForestModel& model, const Routing& routing,
                               std::span<const double> targets, std::span<const double> weights,
                               const LeafUpdateConfig& config) {
  check_inputs(model, routing, targets, weights);
  if (config.iterations < 1) throw ConfigError("leaf update needs at least one iteration");
  if (!(config.variance_floor > 0.0)) throw ConfigError("variance_floor must be positive");
  bool any_positive = false;
  for (double v : weights) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("sample weights must lie in [0, 1]");
    any_positive = any_positive || v > 0.0;
  }
  if (!any_positive) throw SchedulingError("leaf update called with all sample weights zero");

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (weights[i] > 0.0) active.push_back(i);

  const bool per_tree = config.responsibility == Responsibility::kTree;
  const auto objective = [&] {
    return per_tree ? weighted_tree_log_likelihood(model, routing, targets, weights)
                    : weighted_log_likelihood(model, routing, targets, weights);
  };

  Rng rng(derive_seed(config.seed, streams::kLeafBatches));
  LeafUpdateResult result;
  result.objective_trace.push_back(objective());

  const auto k_trees = model.trees.size();
  std::vector<std::vector<double>> mass(k_trees), first(k_trees), second(k_trees);
  std::vector<std::vector<double>> terms;
  // Responsibilities q_ikl for the samples of this iteration, flattened.
  std::vector<double> resp;
  std::vector<std::size_t> order;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    order = active;
    if (config.mode == LeafBatchMode::kMiniBatch) {
      std::shuffle(order.begin(), order.end(), rng);
      const auto budget = config.batch_count * config.batch_size;
      if (budget > 0 && budget < order.size()) order.resize(budget);
    }
    for (std::size_t k = 0; k < k_trees; ++k) {
      const auto n_leaves = model.trees[k].leaves.size();
      mass[k].assign(n_leaves, 0.0);
      first[k].assign(n_leaves, 0.0);
      second[k].assign(n_leaves, 0.0);
    }

    // E-step and first moments.
    resp.clear();
    for (auto i : order) {
      const double log_forest = joint_log_terms(model, routing[i], targets[i], terms);
      for (std::size_t k = 0; k < k_trees; ++k) {
        const double log_p = per_tree ? log_sum_exp(terms[k]) : log_forest;
        for (std::size_t l = 0; l < terms[k].size(); ++l) {
          const double q = std::isfinite(log_p) ? std::exp(terms[k][l] - log_p) : 0.0;
          resp.push_back(q);
          const double w = weights[i] * q;
          mass[k][l] += w;
          first[k][l] += w * targets[i];
        }
      }
    }

    // New means, then spread about them.
    std::vector<std::vector<double>> new_mean(k_trees);
    for (std::size_t k = 0; k < k_trees; ++k) {
      new_mean[k].resize(mass[k].size());
      for (std::size_t l = 0; l < mass[k].size(); ++l)
        new_mean[k][l] = mass[k][l] >= kMinEffectiveWeight ? first[k][l] / mass[k][l]
                                                           : model.trees[k].leaves[l].mean;
    }
    std::size_t r = 0;
    for (auto i : order) {
      for (std::size_t k = 0; k < k_trees; ++k) {
        for (std::size_t l = 0; l < mass[k].size(); ++l) {
          const double d = targets[i] - new_mean[k][l];
          second[k][l] += weights[i] * resp[r++] * d * d;
        }
      }
    }
    for (std::size_t k = 0; k < k_trees; ++k) {
      auto& leaves = model.trees[k].leaves;
      for (std::size_t l = 0; l < leaves.size(); ++l) {
        if (mass[k][l] < kMinEffectiveWeight) {
          ++result.frozen_leaf_updates;
          continue;
        }
        leaves[l].mean = new_mean[k][l];
        leaves[l].variance = std::max(config.variance_floor, second[k][l] / mass[k][l]);
      }
    }
    result.objective_trace.push_back(objective());
  }
  return result;
}

}  // namespace spudrf
