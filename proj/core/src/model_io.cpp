#include "spudrf/model_io.hpp"

#include "spudrf/errors.hpp"
#include "spudrf/report.hpp"

#include <bit>
#include <cmath>
#include <string>

namespace spudrf {
namespace {

const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
  return j.at(key);
}

double as_double(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  return j.get<double>();
}

}  // namespace

nlohmann::json model_to_json(const ForestModel& model) {
  nlohmann::json j;
  j["feature_dim"] = model.backbone.feature_dim();
  auto layers = nlohmann::json::array();
  for (const auto& layer : model.backbone.layers) {
    auto w = nlohmann::json::array();
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      auto row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) row.push_back(layer.weights(r, c));
      w.push_back(std::move(row));
    }
    auto b = nlohmann::json::array();
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) b.push_back(layer.bias(r));
    layers.push_back({{"w", std::move(w)},
                      {"b", std::move(b)},
                      {"activation", std::string(activation_name(layer.activation))}});
  }
  j["layers"] = std::move(layers);
  auto trees = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    auto leaves = nlohmann::json::array();
    for (const auto& l : tree.leaves) leaves.push_back({{"mu", l.mean}, {"var", l.variance}});
    trees.push_back({{"phi", tree.topology.index_map}, {"leaves", std::move(leaves)}});
  }
  j["trees"] = std::move(trees);
  return j;
}

ForestModel model_from_json(const nlohmann::json& j) {
  ForestModel model;
  const auto& layers = require(j, "layers", "model");
  if (!layers.is_array() || layers.empty()) throw ParseError("model: 'layers' must be a non-empty array");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string where = "model.layers[" + std::to_string(l) + "]";
    const auto& w = require(layers[l], "w", where);
    const auto& b = require(layers[l], "b", where);
    if (!w.is_array() || w.empty() || !w[0].is_array() || !b.is_array())
      throw ParseError(where + ": 'w' must be a matrix and 'b' a vector");
    DenseLayer layer;
    const auto rows = static_cast<Eigen::Index>(w.size());
    const auto cols = static_cast<Eigen::Index>(w[0].size());
    layer.weights.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = w[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
        throw ParseError(where + ": ragged weight matrix");
      for (Eigen::Index c = 0; c < cols; ++c) layer.weights(r, c) = as_double(row[static_cast<std::size_t>(c)], where + ".w");
    }
    layer.bias.resize(static_cast<Eigen::Index>(b.size()));
    for (std::size_t r = 0; r < b.size(); ++r) layer.bias(static_cast<Eigen::Index>(r)) = as_double(b[r], where + ".b");
    const bool last = l + 1 == layers.size();
    if (layers[l].contains("activation")) {
      layer.activation = parse_activation(layers[l]["activation"].get<std::string>());
    } else {
      layer.activation = last ? Activation::kIdentity : Activation::kTanh;
    }
    model.backbone.layers.push_back(std::move(layer));
  }
  if (j.contains("feature_dim") && j["feature_dim"].get<std::size_t>() != model.backbone.feature_dim())
    throw ParseError("model: feature_dim does not match the last layer width");

  const auto& trees = require(j, "trees", "model");
  if (!trees.is_array() || trees.empty()) throw ParseError("model: 'trees' must be a non-empty array");
  for (std::size_t k = 0; k < trees.size(); ++k) {
    const std::string where = "model.trees[" + std::to_string(k) + "]";
    Tree tree;
    tree.topology.index_map = require(trees[k], "phi", where).get<std::vector<std::size_t>>();
    const auto& leaves = require(trees[k], "leaves", where);
    if (!leaves.is_array() || leaves.empty() || !std::has_single_bit(leaves.size()))
      throw ParseError(where + ": leaf count must be a power of two");
    tree.topology.depth = static_cast<std::size_t>(std::countr_zero(leaves.size())) + 1;
    for (const auto& leaf : leaves)
      tree.leaves.push_back({as_double(require(leaf, "mu", where), where + ".mu"),
                             as_double(require(leaf, "var", where), where + ".var")});
    model.trees.push_back(std::move(tree));
  }
  try {
    model.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
  return model;
}

void save_model(const ForestModel& model, const std::filesystem::path& path) {
  write_text_file(path, model_to_json(model).dump() + "\n");
}

ForestModel load_model(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace spudrf
