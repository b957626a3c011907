#pragma once

#include "spudrf/forest.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace spudrf {

enum class LeafBatchMode { kFullBatch, kMiniBatch };

/// kTree: each tree is its own mixture, responsibilities normalized within
/// the tree. kForest: one mixture over all K * L leaves with weights
/// omega_kl / K, which makes the forest likelihood itself monotone.
enum class Responsibility { kTree, kForest };

struct LeafUpdateConfig {
  std::size_t iterations = 20;
  LeafBatchMode mode = LeafBatchMode::kFullBatch;
  // Mini-batch mode only: statistics accumulate over batch_count batches of
  // batch_size samples drawn from a seeded permutation each iteration.
  std::size_t batch_count = 50;
  std::size_t batch_size = 32;
  Responsibility responsibility = Responsibility::kTree;
  double variance_floor = kDefaultVarianceFloor;
  std::uint64_t seed = 0;
};

/// Posterior over leaves: zeta_l proportional to omega_l N(y; mu_l, var_l).
std::vector<double> leaf_posteriors(double y, std::span<const double> omega,
                                    std::span<const LeafParams> leaves);

/// routing[i][k] is the leaf reach vector of sample i in tree k.
using Routing = std::vector<std::vector<std::vector<double>>>;

/// Routing of every column of `inputs` (input_dim x N) under the backbone.
Routing compute_routing(const ForestModel& model, const Eigen::MatrixXd& inputs);

/// sum_i v_i log p_F(y_i | x_i) under fixed routing.
double weighted_log_likelihood(const ForestModel& model, const Routing& routing,
                               std::span<const double> targets, std::span<const double> weights);

/// sum_k sum_i v_i log p_Tk(y_i | x_i): the quantity per-tree EM increases.
/// Equals weighted_log_likelihood when K = 1.
double weighted_tree_log_likelihood(const ForestModel& model, const Routing& routing,
                                    std::span<const double> targets,
                                    std::span<const double> weights);

struct LeafUpdateResult {
  // EM objective before the first iteration and after each iteration, over
  // all samples regardless of batch mode: weighted_tree_log_likelihood for
  // kTree, weighted_log_likelihood for kForest.
  std::vector<double> objective_trace;
  std::size_t frozen_leaf_updates = 0;  // leaves skipped for lack of weight
};

/// EM with the routing held fixed as mixing coefficients. Each iteration
/// recomputes responsibilities, then sets every leaf
/// mean to its responsibility-weighted target mean and its variance to the
/// weighted spread about that new mean, floored at variance_floor. Samples
/// with v_i == 0 are skipped entirely.
LeafUpdateResult update_leaves(ForestModel& model, const Routing& routing,
                               std::span<const double> targets, std::span<const double> weights,
                               const LeafUpdateConfig& config);

}  // namespace spudrf
