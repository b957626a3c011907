#include "spudrf/trainer.hpp"

#include "spudrf/errors.hpp"
#include "spudrf/leaf_optimizer.hpp"
#include "spudrf/metrics.hpp"
#include "spudrf/random.hpp"
#include "spudrf/self_paced.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace spudrf {
namespace {

std::span<const double> column_span(const Eigen::MatrixXd& m, Eigen::Index col) {
  return {m.data() + col * m.rows(), static_cast<std::size_t>(m.rows())};
}

struct Scores {
  std::vector<double> log_likelihoods;
  std::vector<double> entropies;
  std::size_t floored = 0;
};

Scores score_samples(const ForestModel& model, const Dataset& data) {
  const auto fwd = forward_batch(data.feature_matrix(), model.backbone);
  Scores s;
  s.log_likelihoods.resize(data.size());
  s.entropies.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = column_span(fwd.features, static_cast<Eigen::Index>(i));
    const auto ll = forest_log_likelihood_from_features(f, data.samples[i].target, model);
    s.log_likelihoods[i] = ll.value;
    s.floored += ll.floored ? 1 : 0;
    s.entropies[i] = forest_entropy_from_features(f, model);
  }
  return s;
}

void init_leaves(ForestModel& model, const Dataset& data, std::uint64_t seed, double variance_floor) {
  const auto y = data.targets();
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var = std::max(variance_floor, var / static_cast<double>(y.size()));
  Rng rng(derive_seed(seed, streams::kLeafInit));
  std::uniform_real_distribution<double> dist(*lo, *hi > *lo ? *hi : *lo + 1.0);
  for (auto& tree : model.trees)
    for (auto& leaf : tree.leaves) leaf = {dist(rng), var};
}

void fit_leaves(ForestModel& model, const Eigen::MatrixXd& inputs, std::span<const double> targets,
                std::span<const double> weights, const LeafUpdateConfig& config) {
  const auto routing = compute_routing(model, inputs);
  update_leaves(model, routing, targets, weights, config);
}

LeafSnapshot snapshot(const ForestModel& model, std::size_t pace) {
  LeafSnapshot s;
  s.pace = pace;
  for (const auto& t : model.trees) s.trees.push_back(t.leaves);
  return s;
}

// Gradient steps interleaved with leaf updates: `rounds` cycles of
// [steps -> leaf update], remainder steps going to the earliest cycles.
void run_cycles(ForestModel& model, const Dataset& data, std::span<const double> weights,
                const TrainConfig& cfg, std::size_t total_steps, GradientCursor& cursor,
                std::size_t pace, double entropy_weight, PaceDetail& detail) {
  const auto inputs = data.feature_matrix();
  const auto targets = data.targets();
  const auto rounds = cfg.optimizer.leaf_rounds_per_pace;
  for (std::size_t r = 0; r < rounds; ++r) {
    const auto steps = total_steps / rounds + (r < total_steps % rounds ? 1 : 0);
    const auto stats = weighted_gradient_steps(model, inputs, targets, weights, cfg.optimizer, steps,
                                               cursor, pace, entropy_weight);
    detail.gradient_steps += stats.steps;
    detail.skipped_steps += stats.skipped;
    fit_leaves(model, inputs, targets, weights, cfg.leaf_update);
  }
}

}  // namespace

Evaluation evaluate(const ForestModel& model, const Dataset& data, double cs_level) {
  if (data.empty()) throw UsageError("evaluate called on an empty dataset");
  const auto fwd = forward_batch(data.feature_matrix(), model.backbone);
  Evaluation e;
  e.predictions.resize(data.size());
  e.entropies.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = column_span(fwd.features, static_cast<Eigen::Index>(i));
    e.predictions[i] = predict_from_features(f, model);
    e.entropies[i] = forest_entropy_from_features(f, model);
  }
  const auto y = data.targets();
  e.mae = mae(e.predictions, y);
  e.cs = cumulative_score(e.predictions, y, cs_level);
  e.mean_entropy = std::accumulate(e.entropies.begin(), e.entropies.end(), 0.0) /
                   static_cast<double>(data.size());
  return e;
}

double region_mae(std::span<const double> predictions, std::span<const double> targets,
                  double threshold, std::size_t* count) {
  if (predictions.size() != targets.size()) throw UsageError("predictions and targets differ in length");
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= threshold) {
      total += std::abs(predictions[i] - targets[i]);
      ++n;
    }
  }
  if (count) *count = n;
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(n);
}

ObjectiveGradient objective_gradient(const ForestModel& model, const Eigen::MatrixXd& inputs,
                                     std::span<const double> targets,
                                     std::span<const double> weights, double entropy_weight) {
  const auto n = static_cast<std::size_t>(inputs.cols());
  if (targets.size() != n || weights.size() != n)
    throw UsageError("inputs, targets and weights must have equal lengths");
  const auto fwd = forward_batch(inputs, model.backbone);
  const auto feature_dim = static_cast<std::size_t>(fwd.features.rows());
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(fwd.features.rows(), fwd.features.cols());
  std::vector<double> grad(feature_dim);
  ObjectiveGradient out;
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    const auto col = static_cast<Eigen::Index>(i);
    const auto f = column_span(fwd.features, col);
    const auto ll = log_likelihood_feature_gradient(f, targets[i], model, grad);
    out.objective += weights[i] * ll.value;
    out.floored += ll.floored ? 1 : 0;
    for (std::size_t j = 0; j < feature_dim; ++j)
      upstream(static_cast<Eigen::Index>(j), col) = weights[i] * grad[j];
    if (entropy_weight != 0.0) {
      const double h = entropy_feature_gradient(f, model, grad);
      out.objective += weights[i] * entropy_weight * h;
      for (std::size_t j = 0; j < feature_dim; ++j)
        upstream(static_cast<Eigen::Index>(j), col) += weights[i] * entropy_weight * grad[j];
    }
  }
  out.gradient = backward(upstream, fwd.cache, model.backbone);
  return out;
}

EpochStats weighted_gradient_steps(ForestModel& model, const Eigen::MatrixXd& inputs,
                                   std::span<const double> targets,
                                   std::span<const double> weights, const OptimizerConfig& config,
                                   std::size_t steps, GradientCursor& cursor, std::size_t pace,
                                   double entropy_weight) {
  EpochStats stats;
  if (steps == 0) return stats;
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (weights[i] > 0.0) active.push_back(i);
  if (active.empty()) throw SchedulingError("gradient steps requested with all sample weights zero");

  const auto batch_size = std::min(config.batch_size, active.size());
  Eigen::MatrixXd batch_inputs(inputs.rows(), static_cast<Eigen::Index>(batch_size));
  std::vector<double> batch_targets(batch_size), batch_weights(batch_size);

  for (std::size_t s = 0; s < steps; ++s) {
    if (cursor.permutation.size() != active.size() || cursor.position + batch_size > active.size()) {
      cursor.permutation = active;
      Rng rng(derive_seed(cursor.order_seed, cursor.epoch++));
      std::shuffle(cursor.permutation.begin(), cursor.permutation.end(), rng);
      cursor.position = 0;
    }
    for (std::size_t b = 0; b < batch_size; ++b) {
      const auto i = cursor.permutation[cursor.position + b];
      batch_inputs.col(static_cast<Eigen::Index>(b)) = inputs.col(static_cast<Eigen::Index>(i));
      batch_targets[b] = targets[i];
      batch_weights[b] = weights[i];
    }
    cursor.position += batch_size;

    auto og = objective_gradient(model, batch_inputs, batch_targets, batch_weights, entropy_weight);
    const double scale = 1.0 / static_cast<double>(batch_size);
    const double loss = -og.objective * scale;
    if (!std::isfinite(loss) || std::abs(loss) > config.divergence_limit) {
      std::ostringstream msg;
      msg << "divergence at pace " << pace << " step " << cursor.step << ": loss " << loss;
      throw NumericError(msg.str());
    }
    stats.last_loss = loss;
    ++cursor.step;
    ++stats.steps;
    if (!og.gradient.all_finite()) {
      ++stats.skipped;
      continue;
    }
    og.gradient *= -scale;
    sgd_step(model.backbone, og.gradient,
             scheduled_learning_rate(config.learning_rate, cursor.step - 1, config.lr_halve_every));
  }
  return stats;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& test_set,
                  const ProgressSink& progress) {
  const auto cfg = effective_config(config);
  cfg.validate();
  if (train_set.empty()) throw UsageError("training set is empty");
  train_set.validate();
  test_set.validate();
  if (!test_set.empty() && test_set.feature_dim != train_set.feature_dim)
    throw InputError("train and test feature widths differ");
  if (cfg.mode == TrainMode::kSpudrf && cfg.pace.curriculum_count > train_set.size())
    throw ConfigError("invalid value for 'pace.curriculum_count': " + std::to_string(cfg.pace.curriculum_count) +
                      " exceeds the " + std::to_string(train_set.size()) + " training samples");
  auto log = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  BackboneSpec bspec = cfg.backbone;
  bspec.input_dim = train_set.feature_dim;
  TrainResult result;
  auto& model = result.model;
  model = make_forest(init_backbone(bspec, cfg.seed), cfg.forest, cfg.seed);
  init_leaves(model, train_set, cfg.seed, cfg.forest.variance_floor);

  auto& report = result.report;
  Dataset data = train_set;
  {
    const std::vector<double> ones(data.size(), 1.0);
    fit_leaves(model, data.feature_matrix(), data.targets(), ones, cfg.leaf_update);
    if (cfg.warmup_steps > 0) {
      GradientCursor cursor;
      cursor.order_seed = derive_seed(derive_seed(cfg.seed, streams::kBatchOrder), 0);
      PaceDetail warmup;
      run_cycles(model, data, ones, cfg, cfg.warmup_steps, cursor, 0, 0.0, warmup);
      log("warmup: " + std::to_string(warmup.gradient_steps) + " steps");
    }
  }

  const bool reconstruct = cfg.mode == TrainMode::kSpudrf &&
                           (cfg.pace.curriculum_count > 0 || cfg.pace.curriculum_entropy_threshold);
  SelectionState state;
  for (std::size_t pace = 1; pace <= cfg.pace.pace_count; ++pace) {
    const auto scores = score_samples(model, data);
    state = pace == 1 ? start_pace(cfg.pace, scores.log_likelihoods, scores.entropies)
                      : advance_pace(state, cfg.pace, scores.log_likelihoods, scores.entropies);

    PaceDetail detail;
    detail.pace = pace;
    detail.floored_samples = scores.floored;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (state.selected[i]) detail.selected_ids.push_back(data.samples[i].id);

    TraceRecord rec;
    rec.pace = pace;
    rec.lambda = state.lambda;
    rec.lambda_prime = state.lambda_prime;
    rec.gamma = state.gamma;
    rec.n_selected = state.n_selected();
    rec.n_soft = state.n_soft();
    rec.n_zero = state.n_zero();
    rec.score_shift = state.score_shift;
    rec.mean_entropy = std::accumulate(scores.entropies.begin(), scores.entropies.end(), 0.0) /
                       static_cast<double>(scores.entropies.size());

    std::vector<double> weights = state.weights;
    if (reconstruct && state.gamma > 0.0) {
      auto rebuilt = curriculum_reconstruction(data, scores.entropies, cfg.pace);
      for (auto src : rebuilt.source_index) weights.push_back(weights[src]);
      detail.duplicated = rebuilt.source_index.size();
      data = std::move(rebuilt.data);
    }
    detail.dataset_size = data.size();

    GradientCursor cursor;
    cursor.order_seed = derive_seed(derive_seed(cfg.seed, streams::kBatchOrder), pace);
    detail.batch_order_seed = cursor.order_seed;
    const double entropy_weight = cfg.optimizer.entropy_gradient ? state.gamma : 0.0;
    run_cycles(model, data, weights, cfg, cfg.optimizer.steps_per_pace, cursor, pace, entropy_weight,
               detail);

    rec.train_mae = evaluate(model, train_set, cfg.cs_level).mae;
    if (!test_set.empty()) {
      const auto ev = evaluate(model, test_set, cfg.cs_level);
      rec.test_mae = ev.mae;
      rec.test_cs = ev.cs;
    }
    report.trace.push_back(rec);
    report.leaf_snapshots.push_back(snapshot(model, pace));
    report.paces.push_back(std::move(detail));

    std::ostringstream msg;
    msg << mode_name(cfg.mode) << " pace " << pace << "/" << cfg.pace.pace_count
        << ": selected " << rec.n_selected << " (soft " << rec.n_soft << "), gamma " << rec.gamma
        << ", train MAE " << rec.train_mae << ", test MAE " << rec.test_mae;
    log(msg.str());
  }

  if (!test_set.empty()) {
    const auto ev = evaluate(model, test_set, cfg.cs_level);
    const auto y = test_set.targets();
    auto& f = report.final_metrics;
    f.test_mae = ev.mae;
    f.test_cs = ev.cs;
    f.mean_entropy = ev.mean_entropy;
    f.rare_region_mae = region_mae(ev.predictions, y, cfg.rare_threshold, &f.rare_region_count);
  }
  return result;
}

}  // namespace spudrf
