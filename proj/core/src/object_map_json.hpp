#pragma once

// Internal: object-map <-> JSON conversion shared with the episode
// serializer, which embeds maps inside episode documents.

#include <string>

#include "json_util.hpp"
#include "reid3d/object_map.hpp"

namespace reid3d::detail {

json object_map_to_json(const ObjectMap& map);

// where names the document location for error messages.
ObjectMap object_map_from_json(const json& j, const std::string& where);

}  // namespace reid3d::detail
