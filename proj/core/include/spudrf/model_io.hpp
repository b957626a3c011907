#pragma once

#include "spudrf/forest.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace spudrf {

/// Model file layout:
///   {"feature_dim": F,
///    "layers": [{"w": [[...], ...], "b": [...], "activation": "tanh"}, ...],
///    "trees": [{"phi": [...], "leaves": [{"mu": m, "var": v}, ...]}, ...]}
/// "w" is stored row-major (one inner array per output unit).
nlohmann::json model_to_json(const ForestModel& model);
ForestModel model_from_json(const nlohmann::json& j);

void save_model(const ForestModel& model, const std::filesystem::path& path);
ForestModel load_model(const std::filesystem::path& path);

}  // namespace spudrf
