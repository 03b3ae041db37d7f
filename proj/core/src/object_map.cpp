#include "reid3d/object_map.hpp"

#include <cmath>

#include "json_util.hpp"
#include "object_map_json.hpp"

namespace reid3d {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Eigen::MatrixXd ObjectMap::descriptor_matrix() const {
  Eigen::MatrixXd m(size(), descriptor_dim);
  for (int i = 0; i < size(); ++i) m.row(i) = objects[i].descriptor.transpose();
  return m;
}

std::vector<std::string> validate(const ObjectMap& map) {
  std::vector<std::string> violations;
  const auto complain = [&](int i, const std::string& msg) {
    violations.push_back("object " + std::to_string(i) + ": " + msg);
  };
  if (map.layout_tag != "A" && map.layout_tag != "B")
    violations.push_back("layout_tag must be \"A\" or \"B\", got \"" + map.layout_tag + "\"");
  if (map.descriptor_dim <= 0)
    violations.push_back("descriptor_dim must be positive");
  for (int i = 0; i < map.size(); ++i) {
    const ObjectInstance& o = map.objects[i];
    if (!o.box.centroid.allFinite()) complain(i, "non-finite centroid");
    if (!o.box.extents.allFinite() || (o.box.extents.array() <= 0.0).any())
      complain(i, "extents must be finite and > 0");
    if (!std::isfinite(o.box.yaw) || o.box.yaw < -kPi || o.box.yaw >= kPi)
      complain(i, "yaw must lie in [-pi, pi)");
    if (!std::isfinite(o.confidence) || o.confidence < 0.0 || o.confidence > 1.0)
      complain(i, "confidence must lie in [0, 1]");
    if (o.descriptor.size() != map.descriptor_dim)
      complain(i, "descriptor length " + std::to_string(o.descriptor.size()) +
                      " != descriptor_dim " + std::to_string(map.descriptor_dim));
    else if (!o.descriptor.allFinite())
      complain(i, "non-finite descriptor");
  }
  return violations;
}

namespace {

detail::json object_to_json(const ObjectInstance& o) {
  detail::json j;
  j["centroid"] = detail::vec3_to_json(o.box.centroid);
  j["extents"] = detail::vec3_to_json(o.box.extents);
  j["yaw"] = o.box.yaw;
  j["label"] = o.label;
  j["confidence"] = o.confidence;
  j["descriptor"] = detail::vecx_to_json(o.descriptor);
  if (o.instance_id)
    j["instance_id"] = *o.instance_id;
  else
    j["instance_id"] = nullptr;
  return j;
}

ObjectInstance object_from_json(const detail::json& j, const std::string& where) {
  ObjectInstance o;
  try {
    o.box.centroid = detail::json_to_vec3(j.at("centroid"), where + " centroid");
    o.box.extents = detail::json_to_vec3(j.at("extents"), where + " extents");
    o.box.yaw = j.at("yaw").get<double>();
    o.label = j.at("label").get<int>();
    o.confidence = j.at("confidence").get<double>();
    o.descriptor = detail::json_to_vecx(j.at("descriptor"), where + " descriptor");
    if (j.contains("instance_id") && !j["instance_id"].is_null())
      o.instance_id = j["instance_id"].get<std::int64_t>();
  } catch (const detail::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  return o;
}

}  // namespace

namespace detail {

json object_map_to_json(const ObjectMap& map) {
  json j;
  j["version"] = "reid3d-map/1";
  j["layout_tag"] = map.layout_tag;
  j["episode_id"] = map.episode_id;
  j["seed"] = map.seed;
  j["descriptor_dim"] = map.descriptor_dim;
  json objs = json::array();
  for (const auto& o : map.objects) objs.push_back(object_to_json(o));
  j["objects"] = std::move(objs);
  return j;
}

ObjectMap object_map_from_json(const json& j, const std::string& where) {
  require_version(j, "reid3d-map/1", where);
  ObjectMap map;
  try {
    map.layout_tag = j.at("layout_tag").get<std::string>();
    map.episode_id = j.at("episode_id").get<std::int64_t>();
    map.seed = j.at("seed").get<std::uint64_t>();
    map.descriptor_dim = j.at("descriptor_dim").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  if (!j.contains("objects") || !j["objects"].is_array())
    throw ParseError(where + ": missing objects array");
  int idx = 0;
  for (const auto& jo : j["objects"]) {
    map.objects.push_back(
        object_from_json(jo, where + ": object " + std::to_string(idx)));
    ++idx;
  }
  for (int i = 0; i < map.size(); ++i)
    if (map.objects[i].descriptor.size() != map.descriptor_dim)
      throw DataError(where + ": object " + std::to_string(i) + " descriptor length " +
                      std::to_string(map.objects[i].descriptor.size()) +
                      " disagrees with descriptor_dim " +
                      std::to_string(map.descriptor_dim));
  return map;
}

}  // namespace detail

void save_object_map(const ObjectMap& map, const std::string& path) {
  detail::save_json_file(detail::object_map_to_json(map), path);
}

ObjectMap load_object_map(const std::string& path) {
  return detail::object_map_from_json(detail::load_json_file(path), path);
}

}  // namespace reid3d
