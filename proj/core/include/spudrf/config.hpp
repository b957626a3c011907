#pragma once

#include "spudrf/backbone.hpp"
#include "spudrf/dataset.hpp"
#include "spudrf/forest.hpp"
#include "spudrf/leaf_optimizer.hpp"
#include "spudrf/self_paced.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace spudrf {

/// Ablation arms: plain forest, self-paced by likelihood only, and
/// self-paced with the entropy term plus curriculum reconstruction.
enum class TrainMode { kDrf, kSpDrf, kSpudrf };

TrainMode parse_mode(std::string_view name);
std::string_view mode_name(TrainMode mode);

struct OptimizerConfig {
  double learning_rate = 0.2;
  std::size_t lr_halve_every = 1000;  // steps within a pace; 0 disables
  std::size_t steps_per_pace = 2000;
  std::size_t batch_size = 32;
  // Each pace runs this many [gradient steps -> leaf update] cycles.
  std::size_t leaf_rounds_per_pace = 1;
  // Differentiate gamma * v_i * H_i into the backbone as well.
  bool entropy_gradient = false;
  double divergence_limit = 1e8;
};

struct TrainConfig {
  TrainMode mode = TrainMode::kSpudrf;
  std::uint64_t seed = 0;
  BackboneSpec backbone;  // input_dim comes from the data
  ForestSpec forest;
  OptimizerConfig optimizer;
  LeafUpdateConfig leaf_update;
  PaceConfig pace;
  std::size_t warmup_steps = 1000;
  double cs_level = 5.0;
  double rare_threshold = 60.0;

  void validate() const;
};

/// Mode constraints applied: SP-DRF has gamma_initial = 0 and no curriculum
/// reconstruction; DRF runs a single pace over all samples with no warmup.
TrainConfig effective_config(const TrainConfig& config);

struct DataSource {
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::string> csv;        // split by train_fraction / split_seed
  std::optional<std::string> train_csv;  // explicit split
  std::optional<std::string> test_csv;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
};

struct RunConfig {
  TrainConfig train;
  DataSource data;
  double bin_width = 5.0;
};

/// Every field is optional; unknown keys and bad values raise ConfigError
/// naming the offending dotted key path.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& config);

SyntheticSpec parse_synthetic_spec(const nlohmann::json& j, const std::string& prefix = "");
nlohmann::json to_json(const SyntheticSpec& spec);

}  // namespace spudrf
