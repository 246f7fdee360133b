#include "fairforest/serialize.hpp"

#include <charconv>

namespace fairforest {

nlohmann::json to_json(const TreeShape& shape) {
  return {{"height", shape.height},
          {"dim", shape.dim},
          {"classes", shape.classes}};
}

TreeShape shape_from_json(const nlohmann::json& j) {
  TreeShape s;
  s.height = field<int>(j, "height");
  s.dim = field<std::size_t>(j, "dim");
  s.classes = field<std::size_t>(j, "classes");
  s.validate();
  return s;
}

nlohmann::json to_json(const ObliqueForest& forest) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : forest.trees)
    trees.push_back({{"weights", t.weights},
                     {"biases", t.biases},
                     {"leaves", t.leaves}});
  return {{"shape", to_json(forest.shape())}, {"trees", std::move(trees)}};
}

ObliqueForest forest_from_json(const nlohmann::json& j) {
  if (!j.contains("shape") || !j.contains("trees"))
    fail(ErrorKind::kData, "forest snapshot needs 'shape' and 'trees'");
  const TreeShape shape = shape_from_json(j.at("shape"));
  ObliqueForest forest;
  for (const auto& jt : j.at("trees")) {
    TreeParams tree(shape);
    tree.weights = field<std::vector<double>>(jt, "weights");
    tree.biases = field<std::vector<double>>(jt, "biases");
    tree.leaves = field<std::vector<double>>(jt, "leaves");
    forest.trees.push_back(std::move(tree));
  }
  forest.validate();
  return forest;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace fairforest
