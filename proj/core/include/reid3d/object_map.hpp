#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reid3d/geometry.hpp"

namespace reid3d {

// One object in an object-based map. instance_id is a ground-truth
// identity tag carried by simulator output (absent on detections of
// nothing, i.e. false positives, and on maps ingested from external
// detectors). Matching never reads it; evaluation does.
struct ObjectInstance {
  BoundingBox3D box;
  int label = 0;
  double confidence = 1.0;
  Eigen::VectorXd descriptor;
  std::optional<std::int64_t> instance_id;
};

struct ObjectMap {
  std::string layout_tag = "A";  // "A" or "B"
  std::int64_t episode_id = 0;
  std::uint64_t seed = 0;
  int descriptor_dim = 0;
  std::vector<ObjectInstance> objects;

  int size() const { return static_cast<int>(objects.size()); }

  // Objects' descriptors as rows (size() x descriptor_dim).
  Eigen::MatrixXd descriptor_matrix() const;
};

// Structural checks. Returns human-readable violations, empty when the
// map is well formed: positive finite extents, confidence in [0, 1],
// yaw in [-pi, pi), every descriptor of length descriptor_dim, finite
// coordinates.
std::vector<std::string> validate(const ObjectMap& map);

// reid3d-map/1 JSON document. Floating point fields round-trip
// bit-exactly. Throws ParseError for files that cannot be read as the
// schema (naming the offending record) and DataError for structurally
// valid files with inconsistent content.
void save_object_map(const ObjectMap& map, const std::string& path);
ObjectMap load_object_map(const std::string& path);

}  // namespace reid3d
