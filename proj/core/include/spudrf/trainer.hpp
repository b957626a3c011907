#pragma once

#include "spudrf/config.hpp"
#include "spudrf/dataset.hpp"
#include "spudrf/forest.hpp"
#include "spudrf/report.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace spudrf {

struct Evaluation {
  double mae = 0.0;
  double cs = 0.0;
  double mean_entropy = 0.0;
  std::vector<double> predictions;
  std::vector<double> entropies;
};

Evaluation evaluate(const ForestModel& model, const Dataset& data, double cs_level);

/// MAE over samples with target >= threshold; NaN when there are none.
double region_mae(std::span<const double> predictions, std::span<const double> targets,
                  double threshold, std::size_t* count = nullptr);

struct ObjectiveGradient {
  double objective = 0.0;  // sum_i v_i (log p_F + entropy_weight * H_i)
  BackboneGradients gradient;  // d objective / d Theta
  std::size_t floored = 0;
};

/// Objective and its backbone gradient over the columns of `inputs`. With
/// entropy_weight == 0 this is the weighted log-likelihood alone.
ObjectiveGradient objective_gradient(const ForestModel& model, const Eigen::MatrixXd& inputs,
                                     std::span<const double> targets,
                                     std::span<const double> weights, double entropy_weight = 0.0);

/// Mini-batch position for Theta updates. Each epoch is a fresh permutation
/// of the samples with positive weight drawn from derive_seed(order_seed, epoch).
struct GradientCursor {
  std::uint64_t order_seed = 0;
  std::size_t epoch = 0;
  std::size_t position = 0;
  std::size_t step = 0;  // steps taken in the current pace
  std::vector<std::size_t> permutation;
};

struct EpochStats {
  std::size_t steps = 0;
  std::size_t skipped = 0;
  double last_loss = 0.0;
};

/// Runs `steps` SGD steps ascending sum_i v_i log p_F (plus the entropy term
/// when entropy_weight > 0). Batch objectives are divided by the batch size.
/// Non-finite gradients skip the step; a loss beyond divergence_limit or a
/// non-finite loss throws NumericError naming `pace` and the step.
EpochStats weighted_gradient_steps(ForestModel& model, const Eigen::MatrixXd& inputs,
                                   std::span<const double> targets,
                                   std::span<const double> weights, const OptimizerConfig& config,
                                   std::size_t steps, GradientCursor& cursor, std::size_t pace,
                                   double entropy_weight = 0.0);

struct TrainResult {
  ForestModel model;
  TrainReport report;
};

using ProgressSink = std::function<void(const std::string&)>;

/// Warmup on all samples, then one pace per schedule entry: score, select,
/// reconstruct (SPUDRF paces with gamma > 0), and alternate gradient steps
/// with leaf updates, warm-starting from the previous pace.
TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& test_set,
                  const ProgressSink& progress = {});

}  // namespace spudrf
