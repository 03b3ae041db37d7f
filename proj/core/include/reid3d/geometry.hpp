#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

namespace reid3d {

// Upright 3D box: yaw about the world y (up) axis, full side lengths in
// extents, all extents > 0.
struct BoundingBox3D {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  Eigen::Vector3d extents = Eigen::Vector3d::Zero();
  double yaw = 0.0;

  double volume() const { return extents.x() * extents.y() * extents.z(); }
};

// Posed pinhole depth frame. pose maps camera coordinates to world
// coordinates (column-major 4x4, rigid). Camera convention: +z optical
// axis, +x right, +y down in the image. depth is row-major, meters.
// rgb is empty or width*height entries aligned with depth.
struct CameraFrame {
  int width = 0;
  int height = 0;
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  std::vector<double> depth;
  std::vector<std::array<std::uint8_t, 3>> rgb;
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
  double camera_height = 0.0;  // meters above the floor, world y
};

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<std::array<std::uint8_t, 3>> colors;  // empty or points.size()

  std::size_t size() const { return points.size(); }
  bool has_colors() const { return !colors.empty(); }
};

// Detector output prior to map construction.
struct Detection {
  BoundingBox3D box;
  double confidence = 0.0;
  int label = 0;
  Eigen::VectorXd descriptor;
};

// Axis-aligned rectangle footprint rotated by yaw in the x-z plane.
struct RotatedRect {
  double cx = 0.0, cz = 0.0;
  double size_x = 0.0, size_z = 0.0;  // full side lengths
  double yaw = 0.0;
};

namespace geometry {

// Wraps into [-pi, pi).
double normalize_yaw(double yaw);

// Back-projects one depth frame into a world-frame point cloud.
// tilt_rad is a fixed downward pitch composed into the pose (rotation
// about the camera x axis; positive pitches the optical axis down).
// Pixels with non-positive or non-finite depth are skipped. Points more
// than height_cutoff above the frame's camera height are discarded
// (pass +inf to keep everything). Throws DataError on a non-finite or
// non-rigid pose.
PointCloud unproject_frame(const CameraFrame& frame, double tilt_rad,
                           double height_cutoff);

// Unprojects every frame and concatenates in frame order.
PointCloud accumulate_tour(const std::vector<CameraFrame>& frames,
                           double tilt_rad, double height_cutoff);

// Voxel-grid subsampling: cells are half-open cubes [k*res, (k+1)*res)
// anchored at the world origin; each occupied cell is replaced by the
// centroid of its points (colors averaged). Output is sorted by cell
// index, lexicographic (ix, iy, iz). resolution must be > 0.
PointCloud voxel_subsample(const PointCloud& cloud, double resolution);

struct WindowCrop {
  Eigen::Vector3d origin;  // window min corner
  PointCloud cloud;
};

// Tiles the cloud's AABB with window-sized boxes at the given stride
// (window start positions k*stride from the AABB min per axis; the final
// window per axis is clamped so the far edge is covered). Cells are
// half-open except the last window per axis, which is closed above so
// boundary points are not dropped. Only non-empty crops are returned;
// every point lands in at least one crop. Window and stride components
// must be > 0.
std::vector<WindowCrop> crop_sliding_windows(const PointCloud& cloud,
                                             const Eigen::Vector3d& window,
                                             const Eigen::Vector3d& stride);

// Area of the intersection of two yaw-rotated rectangles in the x-z
// plane (convex polygon clipping). Areas below 1e-12 m^2 collapse to 0.
double rotated_rect_intersection_area(const RotatedRect& a, const RotatedRect& b);

// IoU of two upright yaw-rotated boxes: rotated-rectangle overlap in the
// x-z plane times y-interval overlap. Result clamped to [0, 1].
double box_iou_3d(const BoundingBox3D& a, const BoundingBox3D& b);

// Class-agnostic greedy non-maximum suppression. Detections below
// confidence_threshold are dropped; the rest are scanned in descending
// confidence (ties keep the lower input index first) and any detection
// with IoU strictly above iou_threshold against an already kept one is
// suppressed. Returned in scan order.
std::vector<Detection> nms(const std::vector<Detection>& detections,
                           double confidence_threshold, double iou_threshold);

// Rigid motion in the floor plane: rotates the centroid about the world
// origin y axis by rotation_rad, then translates by (tx, 0, tz); the box
// yaw is advanced by rotation_rad and renormalized. Extents unchanged.
BoundingBox3D apply_rigid_transform(const BoundingBox3D& box, double rotation_rad,
                                    double tx, double tz);
std::vector<BoundingBox3D> apply_rigid_transform(const std::vector<BoundingBox3D>& boxes,
                                                 double rotation_rad, double tx,
                                                 double tz);

// Convenience: world-frame footprint corners of a box (4 x-z pairs).
std::array<Eigen::Vector2d, 4> footprint_corners(const RotatedRect& r);

RotatedRect footprint_of(const BoundingBox3D& box);

// True if p lies inside the (closed) rotated box.
bool point_in_box(const BoundingBox3D& box, const Eigen::Vector3d& p);

}  // namespace geometry
}  // namespace reid3d
