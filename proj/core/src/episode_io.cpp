#include <algorithm>
#include <filesystem>
#include <string>

#include "json_util.hpp"
#include "object_map_json.hpp"
#include "reid3d/episode_sim.hpp"
#include "reid3d/errors.hpp"

namespace reid3d::episode_sim {

namespace {

using detail::json;

json box_to_json(const BoundingBox3D& b) {
  json j;
  j["centroid"] = detail::vec3_to_json(b.centroid);
  j["extents"] = detail::vec3_to_json(b.extents);
  j["yaw"] = b.yaw;
  return j;
}

BoundingBox3D box_from_json(const json& j, const std::string& where) {
  BoundingBox3D b;
  try {
    b.centroid = detail::json_to_vec3(j.at("centroid"), where + " centroid");
    b.extents = detail::json_to_vec3(j.at("extents"), where + " extents");
    b.yaw = j.at("yaw").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  return b;
}

json supercats_to_json(const std::vector<Supercategory>& v) {
  json a = json::array();
  for (auto sc : v) a.push_back(to_string(sc));
  return a;
}

std::vector<Supercategory> supercats_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array");
  std::vector<Supercategory> out;
  for (const auto& e : j) out.push_back(supercategory_from_string(e.get<std::string>()));
  return out;
}

std::vector<double> doubles_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array");
  std::vector<double> out;
  for (const auto& e : j) out.push_back(e.get<double>());
  return out;
}

}  // namespace

void save_episode(const EpisodePair& episode, const std::string& path) {
  json j;
  j["version"] = "reid3d-episode/1";
  j["seed"] = episode.seed;
  j["episode_id"] = episode.episode_id;
  j["transform"] = {{"yaw", episode.transform.yaw},
                    {"tx", episode.transform.tx},
                    {"tz", episode.transform.tz}};
  j["maps"] = {{"A", detail::object_map_to_json(episode.map_a)},
               {"B", detail::object_map_to_json(episode.map_b)}};
  json matches = json::array();
  for (const auto& [a, b] : episode.gt.matches) matches.push_back(json::array({a, b}));
  j["gt"] = {{"maps",
              {{"A", detail::object_map_to_json(episode.gt_a)},
               {"B", detail::object_map_to_json(episode.gt_b)}}},
             {"matches", std::move(matches)},
             {"removed", episode.gt.removed},
             {"added", episode.gt.added},
             {"supercategory",
              {{"A", supercats_to_json(episode.gt.supercat_a)},
               {"B", supercats_to_json(episode.gt.supercat_b)}}}};
  j["coverage"] = {{"A", episode.coverage_a}, {"B", episode.coverage_b}};
  j["tour_steps"] = {{"A", episode.tour_steps_a}, {"B", episode.tour_steps_b}};
  detail::save_json_file(j, path);
}

EpisodePair load_episode(const std::string& path) {
  const json j = detail::load_json_file(path);
  detail::require_version(j, "reid3d-episode/1", path);
  EpisodePair ep;
  try {
    ep.seed = j.at("seed").get<std::uint64_t>();
    ep.episode_id = j.at("episode_id").get<std::int64_t>();
    const json& t = j.at("transform");
    ep.transform.yaw = t.at("yaw").get<double>();
    ep.transform.tx = t.at("tx").get<double>();
    ep.transform.tz = t.at("tz").get<double>();
    ep.map_a = detail::object_map_from_json(j.at("maps").at("A"), path + ": maps.A");
    ep.map_b = detail::object_map_from_json(j.at("maps").at("B"), path + ": maps.B");
    const json& gt = j.at("gt");
    ep.gt_a = detail::object_map_from_json(gt.at("maps").at("A"), path + ": gt.maps.A");
    ep.gt_b = detail::object_map_from_json(gt.at("maps").at("B"), path + ": gt.maps.B");
    for (const auto& m : gt.at("matches")) {
      if (!m.is_array() || m.size() != 2)
        throw ParseError(path + ": gt.matches entries must be [i, j] pairs");
      ep.gt.matches.emplace_back(m[0].get<int>(), m[1].get<int>());
    }
    ep.gt.removed = gt.at("removed").get<std::vector<int>>();
    ep.gt.added = gt.at("added").get<std::vector<int>>();
    ep.gt.supercat_a =
        supercats_from_json(gt.at("supercategory").at("A"), path + ": gt.supercategory.A");
    ep.gt.supercat_b =
        supercats_from_json(gt.at("supercategory").at("B"), path + ": gt.supercategory.B");
    ep.coverage_a = doubles_from_json(j.at("coverage").at("A"), path + ": coverage.A");
    ep.coverage_b = doubles_from_json(j.at("coverage").at("B"), path + ": coverage.B");
    ep.tour_steps_a = j.at("tour_steps").at("A").get<int>();
    ep.tour_steps_b = j.at("tour_steps").at("B").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  const auto violations = ep.validate();
  if (!violations.empty())
    throw DataError(path + ": invalid episode: " + violations.front() +
                    (violations.size() > 1
                         ? " (+" + std::to_string(violations.size() - 1) + " more)"
                         : ""));
  return ep;
}

void save_environment(const Environment& env, const std::string& path) {
  json j;
  j["version"] = "reid3d-env/1";
  json rooms = json::array();
  for (const auto& r : env.rooms) rooms.push_back(json::array({r.x0, r.z0, r.x1, r.z1}));
  j["rooms"] = std::move(rooms);
  json obstacles = json::array();
  for (const auto& b : env.obstacles) obstacles.push_back(box_to_json(b));
  j["obstacles"] = std::move(obstacles);
  json receptacles = json::array();
  for (const auto& rc : env.receptacles) {
    json r = box_to_json(rc.box);
    r["support_height"] = rc.support_height;
    receptacles.push_back(std::move(r));
  }
  j["receptacles"] = std::move(receptacles);
  detail::save_json_file(j, path);
}

Environment load_environment(const std::string& path) {
  const json j = detail::load_json_file(path);
  detail::require_version(j, "reid3d-env/1", path);
  Environment env;
  try {
    for (const auto& r : j.at("rooms")) {
      if (!r.is_array() || r.size() != 4)
        throw ParseError(path + ": rooms entries must be [x0, z0, x1, z1]");
      env.rooms.push_back(Rect{r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                               r[3].get<double>()});
    }
    int idx = 0;
    for (const auto& b : j.at("obstacles"))
      env.obstacles.push_back(box_from_json(b, path + ": obstacle " + std::to_string(idx++)));
    idx = 0;
    for (const auto& b : j.at("receptacles")) {
      Receptacle rc;
      rc.box = box_from_json(b, path + ": receptacle " + std::to_string(idx));
      rc.support_height = b.at("support_height").get<double>();
      env.receptacles.push_back(rc);
      ++idx;
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  const auto violations = env.validate();
  if (!violations.empty())
    throw DataError(path + ": invalid environment: " + violations.front());
  return env;
}

void save_catalog(const Catalog& catalog, const std::string& path) {
  json j;
  j["version"] = "reid3d-catalog/1";
  j["descriptor_dim"] = catalog.descriptor_dim;
  j["classes"] = catalog.classes;
  json models = json::array();
  for (const auto& m : catalog.models) {
    json e;
    e["model_id"] = m.model_id;
    e["label"] = m.label;
    e["base_extents"] = detail::vec3_to_json(m.base_extents);
    e["split"] = split_names().at(static_cast<std::size_t>(m.split));
    e["latent"] = detail::vecx_to_json(m.latent);
    models.push_back(std::move(e));
  }
  j["models"] = std::move(models);
  detail::save_json_file(j, path);
}

Catalog load_catalog(const std::string& path) {
  const json j = detail::load_json_file(path);
  detail::require_version(j, "reid3d-catalog/1", path);
  Catalog cat;
  try {
    cat.descriptor_dim = j.at("descriptor_dim").get<int>();
    cat.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& e : j.at("models")) {
      ObjectModel m;
      m.model_id = e.at("model_id").get<int>();
      m.label = e.at("label").get<int>();
      m.base_extents = detail::json_to_vec3(e.at("base_extents"),
                                            path + ": model base_extents");
      const std::string split = e.at("split").get<std::string>();
      const auto& names = split_names();
      const auto it = std::find(names.begin(), names.end(), split);
      if (it == names.end()) throw ParseError(path + ": unknown split '" + split + "'");
      m.split = static_cast<int>(it - names.begin());
      m.latent = detail::json_to_vecx(e.at("latent"), path + ": model latent");
      cat.models.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  const auto violations = cat.validate();
  if (!violations.empty())
    throw DataError(path + ": invalid catalog: " + violations.front());
  return cat;
}

std::vector<std::string> list_episode_files(const std::string& dataset_dir,
                                            const std::string& split) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(dataset_dir) / split;
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    throw DataError("not a dataset split directory: " + dir.string());
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("episode_", 0) == 0 && name.size() > 5 &&
        name.substr(name.size() - 5) == ".json")
      out.push_back(entry.path().string());
  }
  if (ec) throw DataError("cannot list directory: " + dir.string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace reid3d::episode_sim
