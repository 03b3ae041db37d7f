#include "reid3d/point_cloud_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "reid3d/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "point cloud binary IO assumes a little-endian host");

namespace reid3d::geometry {

namespace {
constexpr char kMagic[4] = {'R', '3', 'P', 'C'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_point_cloud_binary(const PointCloud& cloud, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  f.write(kMagic, 4);
  f.write(reinterpret_cast<const char*>(&kVersion), 4);
  const std::uint64_t count = cloud.points.size();
  f.write(reinterpret_cast<const char*>(&count), 8);
  const bool colors = cloud.has_colors();
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    double xyz[3] = {cloud.points[i].x(), cloud.points[i].y(), cloud.points[i].z()};
    f.write(reinterpret_cast<const char*>(xyz), 24);
    const std::array<std::uint8_t, 3> rgb = colors ? cloud.colors[i]
                                                   : std::array<std::uint8_t, 3>{0, 0, 0};
    f.write(reinterpret_cast<const char*>(rgb.data()), 3);
  }
  if (!f) throw DataError("write failed: " + path);
}

PointCloud load_point_cloud_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open: " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&count), 8);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a point cloud file (bad magic): " + path);
  if (version != kVersion)
    throw ParseError("unsupported point cloud version " + std::to_string(version) +
                     " in " + path);
  PointCloud cloud;
  cloud.points.reserve(count);
  cloud.colors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    double xyz[3];
    std::uint8_t rgb[3];
    f.read(reinterpret_cast<char*>(xyz), 24);
    f.read(reinterpret_cast<char*>(rgb), 3);
    if (!f)
      throw ParseError("truncated point cloud at record " + std::to_string(i) + ": " + path);
    cloud.points.emplace_back(xyz[0], xyz[1], xyz[2]);
    cloud.colors.push_back({rgb[0], rgb[1], rgb[2]});
  }
  return cloud;
}

void save_point_cloud_text(const PointCloud& cloud, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path);
  const bool colors = cloud.has_colors();
  char buf[128];
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p.x(), p.y(), p.z());
    f << buf;
    if (colors)
      f << ' ' << int(cloud.colors[i][0]) << ' ' << int(cloud.colors[i][1]) << ' '
        << int(cloud.colors[i][2]);
    f << '\n';
  }
  if (!f) throw DataError("write failed: " + path);
}

PointCloud load_point_cloud_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open: " + path);
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  bool colors = false;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x >> y >> z))
      throw ParseError("bad point on line " + std::to_string(lineno) + ": " + path);
    int r, g, b;
    if (ss >> r >> g >> b) {
      colors = true;
      cloud.colors.push_back({static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                              static_cast<std::uint8_t>(b)});
    } else if (colors) {
      throw ParseError("inconsistent color columns on line " + std::to_string(lineno) +
                       ": " + path);
    }
    cloud.points.emplace_back(x, y, z);
  }
  if (colors && cloud.colors.size() != cloud.points.size())
    throw ParseError("inconsistent color columns: " + path);
  return cloud;
}

}  // namespace reid3d::geometry
