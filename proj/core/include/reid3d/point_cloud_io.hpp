#pragma once

#include <string>

#include "reid3d/geometry.hpp"

namespace reid3d::geometry {

// Binary cloud format, little-endian:
//   magic   "R3PC"        4 bytes
//   version uint32        currently 1
//   count   uint64
//   count records of x, y, z (float64) then r, g, b (uint8), 27 bytes each.
// Clouds without colors are written with r = g = b = 0 and load with
// colors present. Round-trips coordinates bit-exactly.
void save_point_cloud_binary(const PointCloud& cloud, const std::string& path);
PointCloud load_point_cloud_binary(const std::string& path);

// Debug text format: one "x y z" or "x y z r g b" line per point,
// '#'-prefixed lines ignored. Coordinates are printed with enough digits
// to round-trip exactly.
void save_point_cloud_text(const PointCloud& cloud, const std::string& path);
PointCloud load_point_cloud_text(const std::string& path);

}  // namespace reid3d::geometry
