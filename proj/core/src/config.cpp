#include "spudrf/config.hpp"

#include "spudrf/errors.hpp"
#include "spudrf/report.hpp"

#include <cmath>
#include <set>

namespace spudrf {
namespace {

// Reads fields of one JSON object and rejects keys that were never asked for.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(where_self() + " must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0))
          throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("invalid value for '" + path(key) + "'");
    }
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& out) {
    if (!j_.contains(key)) {
      seen_.insert(key);
      return;
    }
    T value{};
    read(key, value);
    out = value;
  }

  ObjectReader child(const std::string& key) {
    seen_.insert(key);
    return ObjectReader(j_.at(key), path(key));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.contains(key)) throw ConfigError("unknown key '" + path(key) + "'");
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  template <typename F>
  void check(const std::string& key, bool ok, F&& detail) const {
    if (!ok) throw ConfigError("invalid value for '" + path(key) + "': " + detail());
  }

 private:
  std::string where_self() const { return prefix_.empty() ? "config" : "'" + prefix_ + "'"; }

  const nlohmann::json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

template <typename E, typename Parse>
E read_enum(ObjectReader& r, const std::string& key, E current, Parse parse) {
  std::optional<std::string> name;
  r.read(key, name);
  if (!name) return current;
  try {
    return parse(*name);
  } catch (const ConfigError&) {
    throw ConfigError("invalid value for '" + r.path(key) + "': '" + *name + "'");
  }
}

}  // namespace

TrainMode parse_mode(std::string_view name) {
  if (name == "DRF") return TrainMode::kDrf;
  if (name == "SP-DRF") return TrainMode::kSpDrf;
  if (name == "SPUDRF") return TrainMode::kSpudrf;
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

std::string_view mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kDrf:
      return "DRF";
    case TrainMode::kSpDrf:
      return "SP-DRF";
    case TrainMode::kSpudrf:
      return "SPUDRF";
  }
  return "SPUDRF";
}

void TrainConfig::validate() const {
  if (backbone.feature_dim == 0) throw ConfigError("invalid value for 'backbone.feature_dim': must be positive");
  for (auto h : backbone.hidden)
    if (h == 0) throw ConfigError("invalid value for 'backbone.hidden': widths must be positive");
  if (forest.trees == 0) throw ConfigError("invalid value for 'forest.trees': must be positive");
  if (forest.depth < 1 || forest.depth > 20) throw ConfigError("invalid value for 'forest.depth': must lie in [1, 20]");
  if (!(forest.variance_floor > 0.0)) throw ConfigError("invalid value for 'forest.variance_floor': must be positive");
  if (!(optimizer.learning_rate > 0.0) || !std::isfinite(optimizer.learning_rate))
    throw ConfigError("invalid value for 'optimizer.learning_rate': must be positive");
  if (optimizer.batch_size == 0) throw ConfigError("invalid value for 'optimizer.batch_size': must be positive");
  if (optimizer.leaf_rounds_per_pace == 0)
    throw ConfigError("invalid value for 'optimizer.leaf_rounds_per_pace': must be positive");
  if (!(optimizer.divergence_limit > 0.0))
    throw ConfigError("invalid value for 'optimizer.divergence_limit': must be positive");
  if (leaf_update.iterations == 0) throw ConfigError("invalid value for 'leaf_update.iterations': must be positive");
  if (leaf_update.mode == LeafBatchMode::kMiniBatch && (leaf_update.batch_count == 0 || leaf_update.batch_size == 0))
    throw ConfigError("invalid value for 'leaf_update.batch_count': mini-batch mode needs positive batch sizes");
  if (!(cs_level >= 0.0)) throw ConfigError("invalid value for 'cs_level': must be non-negative");
  try {
    pace.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("invalid value for ") + e.what());
  }
}

TrainConfig effective_config(const TrainConfig& config) {
  TrainConfig c = config;
  switch (c.mode) {
    case TrainMode::kDrf:
      c.pace.pace_count = 1;
      c.pace.initial_fraction = 1.0;
      c.pace.weighting = WeightingScheme::kHard;
      c.pace.gamma_initial = 0.0;
      c.pace.curriculum_count = 0;
      c.pace.curriculum_entropy_threshold.reset();
      c.warmup_steps = 0;
      break;
    case TrainMode::kSpDrf:
      c.pace.gamma_initial = 0.0;
      c.pace.curriculum_count = 0;
      c.pace.curriculum_entropy_threshold.reset();
      break;
    case TrainMode::kSpudrf:
      break;
  }
  c.leaf_update.variance_floor = c.forest.variance_floor;
  c.leaf_update.seed = c.seed;
  return c;
}

SyntheticSpec parse_synthetic_spec(const nlohmann::json& j, const std::string& prefix) {
  SyntheticSpec s;
  ObjectReader r(j, prefix);
  r.read("n", s.n);
  r.read("feature_dim", s.feature_dim);
  r.read("majority_mean", s.majority_mean);
  r.read("majority_sd", s.majority_sd);
  r.read("lower", s.lower);
  r.read("upper", s.upper);
  r.read("rare_low", s.rare_low);
  r.read("rare_high", s.rare_high);
  r.read("rare_mass", s.rare_mass);
  r.read("noise_sd", s.noise_sd);
  r.read("seed", s.seed);
  r.finish();
  r.check("n", s.n >= 10, [] { return "must be at least 10"; });
  r.check("feature_dim", s.feature_dim > 0, [] { return "must be positive"; });
  r.check("rare_mass", s.rare_mass > 0.0 && s.rare_mass < 0.5, [] { return "must lie in (0, 0.5)"; });
  r.check("noise_sd", s.noise_sd >= 0.0, [] { return "must be non-negative"; });
  r.check("majority_sd", s.majority_sd > 0.0, [] { return "must be positive"; });
  r.check("upper", s.lower < s.upper, [] { return "must exceed lower"; });
  r.check("rare_high", s.rare_low < s.rare_high, [] { return "must exceed rare_low"; });
  return s;
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"n", s.n},
          {"feature_dim", s.feature_dim},
          {"majority_mean", s.majority_mean},
          {"majority_sd", s.majority_sd},
          {"lower", s.lower},
          {"upper", s.upper},
          {"rare_low", s.rare_low},
          {"rare_high", s.rare_high},
          {"rare_mass", s.rare_mass},
          {"noise_sd", s.noise_sd},
          {"seed", s.seed}};
}

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig rc;
  auto& t = rc.train;
  ObjectReader root(j, "");
  t.mode = read_enum(root, "mode", t.mode, parse_mode);
  root.read("seed", t.seed);
  root.read("warmup_steps", t.warmup_steps);
  root.read("cs_level", t.cs_level);
  root.read("rare_threshold", t.rare_threshold);
  root.read("bin_width", rc.bin_width);
  root.check("bin_width", rc.bin_width > 0.0, [] { return "must be positive"; });

  if (root.has("backbone")) {
    auto r = root.child("backbone");
    r.read("hidden", t.backbone.hidden);
    r.read("feature_dim", t.backbone.feature_dim);
    t.backbone.hidden_activation = read_enum(r, "activation", t.backbone.hidden_activation, parse_activation);
    r.finish();
  }
  if (root.has("forest")) {
    auto r = root.child("forest");
    r.read("trees", t.forest.trees);
    r.read("depth", t.forest.depth);
    r.read("variance_floor", t.forest.variance_floor);
    r.finish();
  }
  if (root.has("optimizer")) {
    auto r = root.child("optimizer");
    r.read("learning_rate", t.optimizer.learning_rate);
    r.read("lr_halve_every", t.optimizer.lr_halve_every);
    r.read("steps_per_pace", t.optimizer.steps_per_pace);
    r.read("batch_size", t.optimizer.batch_size);
    r.read("leaf_rounds_per_pace", t.optimizer.leaf_rounds_per_pace);
    r.read("entropy_gradient", t.optimizer.entropy_gradient);
    r.read("divergence_limit", t.optimizer.divergence_limit);
    r.finish();
  }
  if (root.has("leaf_update")) {
    auto r = root.child("leaf_update");
    r.read("iterations", t.leaf_update.iterations);
    std::optional<std::string> mode;
    r.read("mode", mode);
    if (mode) {
      if (*mode == "full") t.leaf_update.mode = LeafBatchMode::kFullBatch;
      else if (*mode == "minibatch") t.leaf_update.mode = LeafBatchMode::kMiniBatch;
      else throw ConfigError("invalid value for '" + r.path("mode") + "': '" + *mode + "'");
    }
    r.read("batch_count", t.leaf_update.batch_count);
    r.read("batch_size", t.leaf_update.batch_size);
    std::optional<std::string> resp;
    r.read("responsibilities", resp);
    if (resp) {
      if (*resp == "tree") t.leaf_update.responsibility = Responsibility::kTree;
      else if (*resp == "forest") t.leaf_update.responsibility = Responsibility::kForest;
      else throw ConfigError("invalid value for '" + r.path("responsibilities") + "': '" + *resp + "'");
    }
    r.finish();
  }
  if (root.has("pace")) {
    auto r = root.child("pace");
    r.read("pace_count", t.pace.pace_count);
    r.read("initial_fraction", t.pace.initial_fraction);
    r.read("gamma_initial", t.pace.gamma_initial);
    r.read("gamma_decay", t.pace.gamma_decay);
    r.read("soft_fraction", t.pace.soft_fraction);
    t.pace.weighting = read_enum(r, "weighting", t.pace.weighting, parse_weighting);
    r.read("curriculum_count", t.pace.curriculum_count);
    r.read("curriculum_copies", t.pace.curriculum_copies);
    r.read("curriculum_entropy_threshold", t.pace.curriculum_entropy_threshold);
    r.finish();
  }
  if (root.has("data")) {
    auto r = root.child("data");
    int sources = 0;
    if (r.has("synthetic")) {
      rc.data.synthetic = parse_synthetic_spec(j.at("data").at("synthetic"), "data.synthetic");
      r.child("synthetic");
      ++sources;
    }
    r.read("csv", rc.data.csv);
    r.read("train_csv", rc.data.train_csv);
    r.read("test_csv", rc.data.test_csv);
    r.read("train_fraction", rc.data.train_fraction);
    r.read("split_seed", rc.data.split_seed);
    r.finish();
    if (rc.data.csv) ++sources;
    if (rc.data.train_csv || rc.data.test_csv) {
      if (!rc.data.train_csv || !rc.data.test_csv)
        throw ConfigError("invalid value for 'data': train_csv and test_csv must be given together");
      ++sources;
    }
    if (sources > 1) throw ConfigError("invalid value for 'data': exactly one dataset source allowed");
    r.check("train_fraction", rc.data.train_fraction > 0.0 && rc.data.train_fraction < 1.0,
            [] { return "must lie in (0, 1)"; });
  }
  if (!rc.data.synthetic && !rc.data.csv && !rc.data.train_csv) rc.data.synthetic = SyntheticSpec{};
  root.finish();
  t.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  const auto text = read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::json to_json(const RunConfig& rc) {
  const auto& t = rc.train;
  nlohmann::json j;
  j["mode"] = std::string(mode_name(t.mode));
  j["seed"] = t.seed;
  j["warmup_steps"] = t.warmup_steps;
  j["cs_level"] = t.cs_level;
  j["rare_threshold"] = t.rare_threshold;
  j["bin_width"] = rc.bin_width;
  j["backbone"] = {{"hidden", t.backbone.hidden},
                   {"feature_dim", t.backbone.feature_dim},
                   {"activation", std::string(activation_name(t.backbone.hidden_activation))}};
  j["forest"] = {{"trees", t.forest.trees}, {"depth", t.forest.depth}, {"variance_floor", t.forest.variance_floor}};
  j["optimizer"] = {{"learning_rate", t.optimizer.learning_rate},
                    {"lr_halve_every", t.optimizer.lr_halve_every},
                    {"steps_per_pace", t.optimizer.steps_per_pace},
                    {"batch_size", t.optimizer.batch_size},
                    {"leaf_rounds_per_pace", t.optimizer.leaf_rounds_per_pace},
                    {"entropy_gradient", t.optimizer.entropy_gradient},
                    {"divergence_limit", t.optimizer.divergence_limit}};
  j["leaf_update"] = {{"iterations", t.leaf_update.iterations},
                      {"mode", t.leaf_update.mode == LeafBatchMode::kFullBatch ? "full" : "minibatch"},
                      {"batch_count", t.leaf_update.batch_count},
                      {"batch_size", t.leaf_update.batch_size},
                      {"responsibilities",
                       t.leaf_update.responsibility == Responsibility::kTree ? "tree" : "forest"}};
  nlohmann::json pace = {{"pace_count", t.pace.pace_count},
                         {"initial_fraction", t.pace.initial_fraction},
                         {"gamma_initial", t.pace.gamma_initial},
                         {"gamma_decay", t.pace.gamma_decay},
                         {"soft_fraction", t.pace.soft_fraction},
                         {"weighting", std::string(weighting_name(t.pace.weighting))},
                         {"curriculum_count", t.pace.curriculum_count},
                         {"curriculum_copies", t.pace.curriculum_copies}};
  if (t.pace.curriculum_entropy_threshold)
    pace["curriculum_entropy_threshold"] = *t.pace.curriculum_entropy_threshold;
  j["pace"] = std::move(pace);
  nlohmann::json data = nlohmann::json::object();
  if (rc.data.synthetic) data["synthetic"] = to_json(*rc.data.synthetic);
  if (rc.data.csv) data["csv"] = *rc.data.csv;
  if (rc.data.train_csv) data["train_csv"] = *rc.data.train_csv;
  if (rc.data.test_csv) data["test_csv"] = *rc.data.test_csv;
  data["train_fraction"] = rc.data.train_fraction;
  data["split_seed"] = rc.data.split_seed;
  j["data"] = std::move(data);
  return j;
}

}  // namespace spudrf
