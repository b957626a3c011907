#include "oracles.hpp"

#include "spudrf/errors.hpp"
#include "spudrf/leaf_optimizer.hpp"
#include "spudrf/random.hpp"
#include "spudrf/trainer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace spudrf;

namespace {

ForestModel small_model(std::uint64_t seed, std::size_t input_dim = 8) {
  auto m = make_forest(init_backbone({input_dim, {6, 6}, 8, Activation::kTanh}, seed), {2, 3, 1e-4}, seed);
  Rng rng(seed + 7);
  std::uniform_real_distribution<double> mu(10.0, 60.0), var(20.0, 80.0);
  for (auto& t : m.trees)
    for (auto& l : t.leaves) l = {mu(rng), var(rng)};
  return m;
}

Dataset small_data(std::uint64_t seed, std::size_t n) {
  SyntheticSpec spec;
  spec.n = std::max<std::size_t>(n, 10);
  spec.seed = seed;
  auto d = generate_synthetic(spec);
  d.samples.resize(n);
  return d;
}

TrainConfig tiny_config(TrainMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.seed = 3;
  c.backbone.hidden = {8};
  c.backbone.feature_dim = 16;
  c.forest = {2, 3, 1e-4};
  c.optimizer.steps_per_pace = 20;
  c.optimizer.batch_size = 16;
  c.leaf_update.iterations = 3;
  c.pace.pace_count = 3;
  c.pace.curriculum_count = 5;
  c.warmup_steps = 10;
  return c;
}

}  // namespace

TEST(Evaluate, PerfectPredictor) {
  ForestModel m = small_model(0);
  for (auto& t : m.trees)
    for (auto& l : t.leaves) l = {42.0, 1.0};
  Dataset d = small_data(0, 20);
  for (auto& s : d.samples) s.target = 42.0;
  for (double level : {0.0, 1.0, 5.0}) {
    const auto e = evaluate(m, d, level);
    EXPECT_EQ(e.mae, 0.0);
    EXPECT_EQ(e.cs, 100.0);
  }
}

TEST(Evaluate, ConstantPredictorGivesMeanAbsoluteDeviation) {
  ForestModel m = small_model(1);
  Dataset d = small_data(0, 10);
  const std::vector<double> y{10, 20, 30, 40, 50, 50, 60, 70, 80, 90};  // symmetric about 50
  for (std::size_t i = 0; i < y.size(); ++i) d.samples[i].target = y[i];
  for (auto& t : m.trees)
    for (auto& l : t.leaves) l = {50.0, 1.0};
  const auto e = evaluate(m, d, 5.0);
  EXPECT_NEAR(e.mae, 20.0, 1e-12);  // (40+30+20+10+0+0+10+20+30+40) / 10
  EXPECT_THROW(evaluate(m, Dataset{8, {}}, 5.0), UsageError);
}

TEST(RegionMae, EmptyRegionIsNan) {
  std::size_t count = 99;
  EXPECT_TRUE(std::isnan(region_mae(std::vector<double>{1.0}, std::vector<double>{2.0}, 60.0, &count)));
  EXPECT_EQ(count, 0u);
  EXPECT_DOUBLE_EQ(region_mae(std::vector<double>{50.0, 1.0, 70.0}, std::vector<double>{60.0, 2.0, 75.0}, 60.0, &count),
                   7.5);
  EXPECT_EQ(count, 2u);
}

// End-to-end gradient through routing and backbone against finite
// differences of the independent linear-space forest density.
TEST(ObjectiveGradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = small_model(seed);
    const auto d = small_data(seed, 6);
    const auto x = d.feature_matrix();
    const auto y = d.targets();
    std::vector<double> v{1.0, 0.5, 0.0, 0.25, 1.0, 0.8};
    const auto og = objective_gradient(m, x, y, v);
    auto f = [&](const std::vector<double>& theta) {
      ForestModel q = m;
      assign_flat(q.backbone, theta);
      double s = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * std::log(oracle::forest_density(d.samples[i].features, y[i], q));
      return s;
    };
    EXPECT_NEAR(og.objective, f(flatten(m.backbone)), 1e-9);
    const auto num = oracle::central_difference(f, flatten(m.backbone), 1e-5);
    EXPECT_LE(oracle::max_relative_error(flatten(og.gradient), num), 1e-4) << seed;
  }
}

TEST(ObjectiveGradient, EntropyTermMatchesFiniteDifferences) {
  const auto m = small_model(4);
  const auto d = small_data(4, 4);
  const auto x = d.feature_matrix();
  const auto y = d.targets();
  const std::vector<double> v{1.0, 0.3, 0.7, 1.0};
  const auto og = objective_gradient(m, x, y, v, 2.5);
  auto f = [&](const std::vector<double>& theta) {
    ForestModel q = m;
    assign_flat(q.backbone, theta);
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      s += v[i] * (forest_log_likelihood(d.samples[i].features, y[i], q).value + 2.5 * forest_entropy(d.samples[i].features, q));
    return s;
  };
  const auto num = oracle::central_difference(f, flatten(m.backbone), 1e-5);
  EXPECT_LE(oracle::max_relative_error(flatten(og.gradient), num), 1e-4);
}

TEST(ObjectiveGradient, WeightMaskingAndLinearity) {
  const auto m = small_model(2);
  const auto d = small_data(2, 5);
  const auto x = d.feature_matrix();
  const auto y = d.targets();
  std::vector<double> one_hot(5, 0.0);
  one_hot[3] = 1.0;
  const auto masked = objective_gradient(m, x, y, one_hot);
  const Eigen::MatrixXd x3 = x.col(3);
  const auto single = objective_gradient(m, x3, std::vector<double>{y[3]}, std::vector<double>{1.0});
  EXPECT_EQ(flatten(masked.gradient), flatten(single.gradient));

  const std::vector<double> v{0.1, 0.4, 0.2, 0.3, 0.5};
  std::vector<double> v2(v);
  for (auto& w : v2) w *= 2.0;
  const auto g1 = flatten(objective_gradient(m, x, y, v).gradient);
  const auto g2 = flatten(objective_gradient(m, x, y, v2).gradient);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(g2[i], 2.0 * g1[i]);
}

// Property: small full-batch steps increase sum v log p_F in almost every trial.
TEST(GradientSteps, SmallStepsAscendObjective) {
  int monotone = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    auto m = small_model(100 + static_cast<std::uint64_t>(t));
    const auto d = small_data(static_cast<std::uint64_t>(t), 40);
    const auto x = d.feature_matrix();
    const auto y = d.targets();
    const std::vector<double> v(40, 1.0);
    OptimizerConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 40;
    GradientCursor cursor;
    bool ok = true;
    double prev = objective_gradient(m, x, y, v).objective;
    for (int s = 0; s < 10; ++s) {
      weighted_gradient_steps(m, x, y, v, cfg, 1, cursor, 1);
      const double now = objective_gradient(m, x, y, v).objective;
      ok = ok && now >= prev;
      prev = now;
    }
    monotone += ok ? 1 : 0;
  }
  EXPECT_GE(monotone, 19);
}

TEST(GradientSteps, SeededOrderIsReproducible) {
  const auto d = small_data(0, 50);
  const auto x = d.feature_matrix();
  const auto y = d.targets();
  std::vector<double> v(50, 1.0);
  v[7] = 0.0;
  OptimizerConfig cfg;
  cfg.batch_size = 8;
  auto run = [&](std::uint64_t seed) {
    auto m = small_model(5);
    GradientCursor cursor;
    cursor.order_seed = seed;
    const auto stats = weighted_gradient_steps(m, x, y, v, cfg, 15, cursor, 1);
    EXPECT_EQ(stats.steps, 15u);
    EXPECT_EQ(cursor.step, 15u);
    EXPECT_EQ(cursor.epoch, 3u);  // 49 active samples, 6 batches of 8 per epoch
    for (auto i : cursor.permutation) EXPECT_NE(i, 7u);
    return flatten(m.backbone);
  };
  EXPECT_EQ(run(1), run(1));
  EXPECT_NE(run(1), run(2));
}

TEST(GradientSteps, DivergenceNamesPaceAndStep) {
  auto m = small_model(0);
  const auto d = small_data(0, 10);
  OptimizerConfig cfg;
  cfg.divergence_limit = 1e-3;
  GradientCursor cursor;
  try {
    weighted_gradient_steps(m, d.feature_matrix(), d.targets(), std::vector<double>(10, 1.0), cfg, 5, cursor, 4);
    FAIL();
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("pace 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
  }
  EXPECT_THROW(weighted_gradient_steps(m, d.feature_matrix(), d.targets(), std::vector<double>(10, 0.0), cfg, 1,
                                       cursor, 1),
               SchedulingError);
}

TEST(Train, DrfIsSinglePaceOverAllSamples) {
  const auto data = small_data(1, 120);
  const auto split = split_train_test(data, 0.8, 1);
  const auto r = train(tiny_config(TrainMode::kDrf), split.train, split.test);
  ASSERT_EQ(r.report.trace.size(), 1u);
  const auto& rec = r.report.trace[0];
  EXPECT_EQ(rec.n_selected, split.train.size());
  EXPECT_EQ(rec.n_soft, 0u);
  EXPECT_EQ(rec.n_zero, 0u);
  EXPECT_EQ(rec.gamma, 0.0);
  EXPECT_EQ(r.report.paces[0].duplicated, 0u);
  EXPECT_EQ(r.report.paces[0].gradient_steps, 20u);
}

TEST(Train, SpudrfScheduleAndReconstruction) {
  const auto data = small_data(2, 120);
  const auto split = split_train_test(data, 0.8, 2);
  const auto r = train(tiny_config(TrainMode::kSpudrf), split.train, split.test);
  ASSERT_EQ(r.report.trace.size(), 3u);
  EXPECT_EQ(r.report.trace[0].n_selected, 48u);  // ceil(0.5 * 96)
  EXPECT_EQ(r.report.trace[0].gamma, 15.0);
  EXPECT_EQ(r.report.trace[1].gamma, 7.5);
  EXPECT_EQ(r.report.trace[2].gamma, 0.0);
  EXPECT_EQ(r.report.paces[0].duplicated, 5u);
  EXPECT_EQ(r.report.paces[0].dataset_size, 101u);
  EXPECT_EQ(r.report.paces[1].dataset_size, 106u);
  EXPECT_EQ(r.report.paces[2].duplicated, 0u);  // gamma = 0
  EXPECT_EQ(r.report.trace[2].n_selected, 106u);
  for (std::size_t p = 1; p < 3; ++p) EXPECT_GT(r.report.trace[p].pace, r.report.trace[p - 1].pace);
  for (const auto& s : r.report.leaf_snapshots) {
    ASSERT_EQ(s.trees.size(), 2u);
    EXPECT_EQ(s.trees[0].size(), 4u);
  }
  for (const auto& rec : r.report.trace) {
    EXPECT_GE(rec.test_cs, 0.0);
    EXPECT_LE(rec.test_cs, 100.0);
    EXPECT_LE(rec.n_soft, rec.n_selected);
  }
}

TEST(Train, DeterministicReports) {
  const auto split = split_train_test(small_data(3, 100), 0.8, 0);
  const auto a = train(tiny_config(TrainMode::kSpudrf), split.train, split.test);
  const auto b = train(tiny_config(TrainMode::kSpudrf), split.train, split.test);
  EXPECT_EQ(a.report.trace, b.report.trace);
  EXPECT_EQ(summary_json(a.report).dump(), summary_json(b.report).dump());
  EXPECT_EQ(flatten(a.model.backbone), flatten(b.model.backbone));
}

TEST(Train, ZeroGammaSpudrfMatchesSpDrf) {
  const auto split = split_train_test(small_data(4, 100), 0.8, 0);
  auto su = tiny_config(TrainMode::kSpudrf);
  su.pace.gamma_initial = 0.0;
  const auto a = train(su, split.train, split.test);
  const auto b = train(tiny_config(TrainMode::kSpDrf), split.train, split.test);
  EXPECT_EQ(a.report.trace, b.report.trace);
  for (std::size_t p = 0; p < a.report.paces.size(); ++p)
    EXPECT_EQ(a.report.paces[p].selected_ids, b.report.paces[p].selected_ids);
  EXPECT_EQ(flatten(a.model.backbone), flatten(b.model.backbone));
}

TEST(Train, NeverReadsTestTargets) {
  const auto split = split_train_test(small_data(5, 100), 0.8, 0);
  auto scrambled = split.test;
  for (auto& s : scrambled.samples) s.target = 1000.0 - s.target;
  const auto a = train(tiny_config(TrainMode::kSpudrf), split.train, split.test);
  const auto b = train(tiny_config(TrainMode::kSpudrf), split.train, scrambled);
  EXPECT_EQ(flatten(a.model.backbone), flatten(b.model.backbone));
  for (std::size_t p = 0; p < a.report.trace.size(); ++p) {
    EXPECT_EQ(a.report.trace[p].train_mae, b.report.trace[p].train_mae);
    EXPECT_EQ(a.report.paces[p].selected_ids, b.report.paces[p].selected_ids);
  }
}

TEST(Train, RejectsEmptyTrainingSet) {
  EXPECT_THROW(train(tiny_config(TrainMode::kDrf), Dataset{8, {}}, Dataset{8, {}}), UsageError);
}

TEST(Train, RejectsCurriculumLargerThanTrainingSet) {
  const auto split = split_train_test(small_data(6, 20), 0.8, 0);
  auto c = tiny_config(TrainMode::kSpudrf);
  c.pace.curriculum_count = 17;
  try {
    train(c, split.train, split.test);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("pace.curriculum_count"), std::string::npos);
  }
  c.mode = TrainMode::kSpDrf;  // no reconstruction, so the count is ignored
  EXPECT_NO_THROW(train(c, split.train, split.test));
}
