#include "reid3d/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "reid3d/errors.hpp"

namespace reid3d {
namespace geometry {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kAreaEpsilon = 1e-12;  // m^2, sliver cutoff

bool pose_is_rigid(const Eigen::Matrix4d& pose) {
  if (!pose.allFinite()) return false;
  const Eigen::Matrix3d r = pose.topLeftCorner<3, 3>();
  if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    return false;
  if (std::abs(r.determinant() - 1.0) > 1e-6) return false;
  const Eigen::RowVector4d bottom = pose.row(3);
  return (bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() <= 1e-9;
}

}  // namespace

double normalize_yaw(double yaw) {
  double y = std::fmod(yaw + kPi, 2.0 * kPi);
  if (y < 0) y += 2.0 * kPi;
  return y - kPi;
}

PointCloud unproject_frame(const CameraFrame& frame, double tilt_rad,
                           double height_cutoff) {
  if (!pose_is_rigid(frame.pose))
    throw DataError("unproject_frame: pose is not a finite rigid transform");
  if (frame.width < 0 || frame.height < 0 ||
      frame.depth.size() != static_cast<std::size_t>(frame.width) * frame.height)
    throw DataError("unproject_frame: depth buffer does not match width*height");
  if (!frame.rgb.empty() && frame.rgb.size() != frame.depth.size())
    throw DataError("unproject_frame: rgb buffer does not match width*height");
  if (frame.fx == 0.0 || frame.fy == 0.0)
    throw DataError("unproject_frame: zero focal length");

  // Downward pitch about the camera x axis, folded into the rotation.
  Eigen::Matrix3d tilt;
  const double ct = std::cos(tilt_rad), st = std::sin(tilt_rad);
  tilt << 1, 0, 0, 0, ct, -st, 0, st, ct;
  const Eigen::Matrix3d r = frame.pose.topLeftCorner<3, 3>() * tilt;
  const Eigen::Vector3d t = frame.pose.topRightCorner<3, 1>();
  const double y_max = frame.camera_height + height_cutoff;
  const bool keep_all = !std::isfinite(height_cutoff) && height_cutoff > 0;

  PointCloud out;
  out.points.reserve(frame.depth.size());
  if (!frame.rgb.empty()) out.colors.reserve(frame.depth.size());
  for (int v = 0; v < frame.height; ++v) {
    for (int u = 0; u < frame.width; ++u) {
      const double d = frame.depth[static_cast<std::size_t>(v) * frame.width + u];
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Eigen::Vector3d ray((u - frame.cx) / frame.fx, (v - frame.cy) / frame.fy, 1.0);
      const Eigen::Vector3d p = r * (d * ray) + t;
      if (!keep_all && p.y() > y_max) continue;
      out.points.push_back(p);
      if (!frame.rgb.empty())
        out.colors.push_back(frame.rgb[static_cast<std::size_t>(v) * frame.width + u]);
    }
  }
  return out;
}

PointCloud accumulate_tour(const std::vector<CameraFrame>& frames, double tilt_rad,
                           double height_cutoff) {
  PointCloud out;
  bool any_colors = false;
  for (const CameraFrame& f : frames)
    if (!f.rgb.empty()) any_colors = true;
  for (const CameraFrame& f : frames) {
    PointCloud part = unproject_frame(f, tilt_rad, height_cutoff);
    out.points.insert(out.points.end(), part.points.begin(), part.points.end());
    if (any_colors) {
      if (part.colors.empty()) part.colors.resize(part.points.size(), {0, 0, 0});
      out.colors.insert(out.colors.end(), part.colors.begin(), part.colors.end());
    }
  }
  return out;
}

PointCloud voxel_subsample(const PointCloud& cloud, double resolution) {
  if (!(resolution > 0.0) || !std::isfinite(resolution))
    throw std::invalid_argument("voxel_subsample: resolution must be finite and > 0");

  struct Cell {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    std::array<double, 3> rgb_sum = {0, 0, 0};
    std::size_t count = 0;
  };
  // std::map keeps the output ordering deterministic.
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, Cell> cells;
  const bool colors = cloud.has_colors();
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Eigen::Vector3d& p = cloud.points[i];
    const auto key = std::make_tuple(
        static_cast<std::int64_t>(std::floor(p.x() / resolution)),
        static_cast<std::int64_t>(std::floor(p.y() / resolution)),
        static_cast<std::int64_t>(std::floor(p.z() / resolution)));
    Cell& c = cells[key];
    c.sum += p;
    if (colors)
      for (int k = 0; k < 3; ++k) c.rgb_sum[k] += cloud.colors[i][k];
    ++c.count;
  }

  PointCloud out;
  out.points.reserve(cells.size());
  if (colors) out.colors.reserve(cells.size());
  for (const auto& [key, c] : cells) {
    out.points.push_back(c.sum / static_cast<double>(c.count));
    if (colors) {
      std::array<std::uint8_t, 3> avg;
      for (int k = 0; k < 3; ++k)
        avg[k] = static_cast<std::uint8_t>(
            std::lround(c.rgb_sum[k] / static_cast<double>(c.count)));
      out.colors.push_back(avg);
    }
  }
  return out;
}

namespace {

// Window start offsets along one axis: k*stride from lo, final start
// clamped so [start, start+window] reaches hi.
std::vector<double> window_starts(double lo, double hi, double window, double stride) {
  std::vector<double> starts;
  const double extent = hi - lo;
  if (extent <= window) {
    starts.push_back(lo);
    return starts;
  }
  for (double s = 0.0;; s += stride) {
    if (s + window >= extent) {
      starts.push_back(lo + extent - window);
      break;
    }
    starts.push_back(lo + s);
  }
  return starts;
}

}  // namespace

std::vector<WindowCrop> crop_sliding_windows(const PointCloud& cloud,
                                             const Eigen::Vector3d& window,
                                             const Eigen::Vector3d& stride) {
  for (int k = 0; k < 3; ++k)
    if (!(window[k] > 0.0) || !(stride[k] > 0.0))
      throw std::invalid_argument("crop_sliding_windows: window and stride must be > 0");
  if (cloud.points.empty()) return {};

  Eigen::Vector3d lo = cloud.points.front(), hi = cloud.points.front();
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  std::array<std::vector<double>, 3> starts;
  for (int k = 0; k < 3; ++k) starts[k] = window_starts(lo[k], hi[k], window[k], stride[k]);

  std::vector<WindowCrop> crops;
  const bool colors = cloud.has_colors();
  for (double sx : starts[0]) {
    const bool last_x = (sx == starts[0].back());
    for (double sy : starts[1]) {
      const bool last_y = (sy == starts[1].back());
      for (double sz : starts[2]) {
        const bool last_z = (sz == starts[2].back());
        WindowCrop crop;
        crop.origin = Eigen::Vector3d(sx, sy, sz);
        for (std::size_t i = 0; i < cloud.points.size(); ++i) {
          const Eigen::Vector3d& p = cloud.points[i];
          const auto inside = [&](double v, double s, double w, bool closed) {
            return v >= s && (v < s + w || (closed && v <= s + w));
          };
          if (inside(p.x(), sx, window.x(), last_x) &&
              inside(p.y(), sy, window.y(), last_y) &&
              inside(p.z(), sz, window.z(), last_z)) {
            crop.cloud.points.push_back(p);
            if (colors) crop.cloud.colors.push_back(cloud.colors[i]);
          }
        }
        if (!crop.cloud.points.empty()) crops.push_back(std::move(crop));
      }
    }
  }
  return crops;
}

std::array<Eigen::Vector2d, 4> footprint_corners(const RotatedRect& r) {
  const double c = std::cos(r.yaw), s = std::sin(r.yaw);
  const double hx = 0.5 * r.size_x, hz = 0.5 * r.size_z;
  std::array<Eigen::Vector2d, 4> out;
  const double dx[4] = {-hx, hx, hx, -hx};
  const double dz[4] = {-hz, -hz, hz, hz};
  for (int k = 0; k < 4; ++k)
    // R_y(yaw) applied to (dx, dz) in the x-z plane
    out[k] = Eigen::Vector2d(r.cx + c * dx[k] + s * dz[k],
                             r.cz - s * dx[k] + c * dz[k]);
  return out;
}

RotatedRect footprint_of(const BoundingBox3D& box) {
  return RotatedRect{box.centroid.x(), box.centroid.z(), box.extents.x(),
                     box.extents.z(), box.yaw};
}

namespace {

double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double a = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(a);
}

// Sutherland-Hodgman clip of poly against the half-plane left of a->b.
std::vector<Eigen::Vector2d> clip_halfplane(const std::vector<Eigen::Vector2d>& poly,
                                            const Eigen::Vector2d& a,
                                            const Eigen::Vector2d& b) {
  std::vector<Eigen::Vector2d> out;
  const std::size_t n = poly.size();
  const auto side = [&](const Eigen::Vector2d& p) {
    return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
  };
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& cur = poly[i];
    const Eigen::Vector2d& nxt = poly[(i + 1) % n];
    const double sc = side(cur), sn = side(nxt);
    if (sc >= 0) out.push_back(cur);
    if ((sc > 0 && sn < 0) || (sc < 0 && sn > 0)) {
      const double t = sc / (sc - sn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

}  // namespace

double rotated_rect_intersection_area(const RotatedRect& a, const RotatedRect& b) {
  const auto ca = footprint_corners(a);
  const auto cb = footprint_corners(b);
  std::vector<Eigen::Vector2d> poly(ca.begin(), ca.end());
  std::vector<Eigen::Vector2d> clip(cb.begin(), cb.end());
  for (int k = 0; k < 4 && !poly.empty(); ++k)
    poly = clip_halfplane(poly, clip[k], clip[(k + 1) % 4]);
  if (poly.size() < 3) return 0.0;
  const double area = polygon_area(poly);
  return area < kAreaEpsilon ? 0.0 : area;
}

double box_iou_3d(const BoundingBox3D& a, const BoundingBox3D& b) {
  const double ylo = std::max(a.centroid.y() - 0.5 * a.extents.y(),
                              b.centroid.y() - 0.5 * b.extents.y());
  const double yhi = std::min(a.centroid.y() + 0.5 * a.extents.y(),
                              b.centroid.y() + 0.5 * b.extents.y());
  const double dy = yhi - ylo;
  if (dy <= 0.0) return 0.0;
  const double inter_area =
      rotated_rect_intersection_area(footprint_of(a), footprint_of(b));
  const double inter = inter_area * dy;
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<Detection> nms(const std::vector<Detection>& detections,
                           double confidence_threshold, double iou_threshold) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return detections[i].confidence > detections[j].confidence;
  });

  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    const Detection& d = detections[idx];
    if (d.confidence < confidence_threshold) continue;
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (box_iou_3d(d.box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

BoundingBox3D apply_rigid_transform(const BoundingBox3D& box, double rotation_rad,
                                    double tx, double tz) {
  const double c = std::cos(rotation_rad), s = std::sin(rotation_rad);
  BoundingBox3D out = box;
  const double x = box.centroid.x(), z = box.centroid.z();
  out.centroid.x() = c * x + s * z + tx;
  out.centroid.z() = -s * x + c * z + tz;
  out.yaw = normalize_yaw(box.yaw + rotation_rad);
  return out;
}

std::vector<BoundingBox3D> apply_rigid_transform(const std::vector<BoundingBox3D>& boxes,
                                                 double rotation_rad, double tx,
                                                 double tz) {
  std::vector<BoundingBox3D> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back(apply_rigid_transform(b, rotation_rad, tx, tz));
  return out;
}

bool point_in_box(const BoundingBox3D& box, const Eigen::Vector3d& p) {
  const Eigen::Vector3d d = p - box.centroid;
  if (std::abs(d.y()) > 0.5 * box.extents.y()) return false;
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  // R_y(-yaw) applied to (d.x, d.z)
  const double lx = c * d.x() - s * d.z();
  const double lz = s * d.x() + c * d.z();
  return std::abs(lx) <= 0.5 * box.extents.x() && std::abs(lz) <= 0.5 * box.extents.z();
}

}  // namespace geometry
}  // namespace reid3d
