#pragma once

#include <string>

#include <json.hpp>

#include "fairforest/error.hpp"
#include "fairforest/forest.hpp"

namespace fairforest {

nlohmann::json to_json(const TreeShape& shape);
TreeShape shape_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ObliqueForest& forest);
ObliqueForest forest_from_json(const nlohmann::json& j);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

/// Reads a required field, converting JSON errors into kData errors.
template <class T>
T field(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kData,
                std::string("bad or missing field '") + key + "': " + e.what());
  }
}

}  // namespace fairforest
