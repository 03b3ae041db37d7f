#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reid3d/geometry.hpp"
#include "reid3d/object_map.hpp"
#include "reid3d/rng.hpp"

namespace reid3d::episode_sim {

// Axis-aligned room footprint in plan view (x right, z forward).
struct Rect {
  double x0 = 0, z0 = 0, x1 = 0, z1 = 0;
  double width() const { return x1 - x0; }
  double depth() const { return z1 - z0; }
  double area() const { return width() * depth(); }
  bool contains(double x, double z) const {
    return x >= x0 && x <= x1 && z >= z0 && z <= z1;
  }
};

// Furniture-scale box whose top face can support placed objects.
struct Receptacle {
  BoundingBox3D box;  // yaw 0, resting on the floor
  double support_height = 0.0;
};

// Rectilinear apartment: union of overlapping room rectangles, plus
// static obstacles and receptacles resting on the floor.
struct Environment {
  std::vector<Rect> rooms;
  std::vector<BoundingBox3D> obstacles;  // yaw 0
  std::vector<Receptacle> receptacles;

  bool contains(double x, double z) const;
  // True iff the disc of the given radius around (x, z) stays inside the
  // floor union (8-direction sample test; rooms are far wider than any
  // sane margin, so the sampling is exact in practice).
  bool contains_with_margin(double x, double z, double margin) const;
  double floor_area() const;  // exact union area by inclusion-exclusion
  Rect bounds() const;

  // Violation strings; empty means valid.
  std::vector<std::string> validate() const;
};

struct EnvConfig {
  int min_rooms = 2, max_rooms = 6;
  // Side range calibrated for tour lengths around 800 planner steps.
  double min_room_side = 5.0, max_room_side = 10.0;
  double min_area = 100.0, max_area = 600.0;  // union area band
  double room_overlap = 0.3;     // how deep a new room reaches into its parent
  double min_shared_span = 3.0;  // opening width between adjacent rooms
  double junction_clearance = 1.4;  // keep room overlaps free of furniture
  int min_obstacles_per_room = 1, max_obstacles_per_room = 2;
  int min_receptacles_per_room = 1, max_receptacles_per_room = 2;
};

Environment generate_environment(const EnvConfig& cfg, Rng& rng);

struct ObjectModel {
  int model_id = 0;
  int label = 0;  // index into the catalog's class list
  Eigen::Vector3d base_extents = Eigen::Vector3d::Ones();  // aspect only
  Eigen::VectorXd latent;  // unit norm, descriptor_dim
  int split = 0;           // 0 train, 1 val, 2 test
};

struct CatalogConfig {
  int n_models = 632;
  int descriptor_dim = 256;
  std::vector<std::string> classes;  // empty -> default 15-class list
  double train_fraction = 0.70, val_fraction = 0.10;  // rest is test
  // Latent model: the first signal_fraction of the dimensions carry a
  // normalized class-mean + instance-offset mix; the rest stay zero so
  // observation noise there is pure nuisance.
  double signal_fraction = 0.5;
  double class_weight = 0.55;
  double instance_weight = 0.85;
};

std::vector<std::string> default_classes();

struct Catalog {
  int descriptor_dim = 0;
  std::vector<std::string> classes;
  std::vector<ObjectModel> models;  // model_id == index

  static Catalog generate(const CatalogConfig& cfg, std::uint64_t seed);
  const ObjectModel& model(int id) const;
  // Model ids of one split, grouped by class index (empty groups kept).
  std::vector<std::vector<int>> split_index(int split) const;
  std::vector<std::string> validate() const;
};

struct PlacedObject {
  int model_id = 0;
  int label = 0;
  BoundingBox3D box;
  std::int64_t instance_id = 0;
};

struct Layout {
  std::vector<PlacedObject> objects;
};

struct PlacementConfig {
  double min_scale = 1.0, max_scale = 1.5;  // largest side, meters
  double receptacle_fraction = 0.5;         // vs. floor placement
  int max_rejections = 10000;
};

// n collision-free upright placements with uniform yaw, sampled by class
// then instance from the given catalog split. Throws GenerationError
// after max_rejections consecutive failures.
Layout sample_initial_layout(const Environment& env, const Catalog& catalog, int split,
                             int n, const PlacementConfig& cfg, Rng& rng);

enum class Supercategory { Unchanged, Moved, Removed, Added };
const char* to_string(Supercategory sc);
Supercategory supercategory_from_string(const std::string& s);

struct EpisodeGroundTruth {
  std::vector<std::pair<int, int>> matches;  // (index in A, index in B)
  std::vector<int> removed;                  // indices in A
  std::vector<int> added;                    // indices in B
  std::vector<Supercategory> supercat_a, supercat_b;  // per object
};

struct Modification {
  Layout layout_b;  // pre-transform
  EpisodeGroundTruth gt;
};

// Keeps one third in place, re-places one third, drops one third, and
// adds as many fresh instances from the same split. |layout_a| must be
// divisible by 3.
Modification modify_layout(const Environment& env, const Catalog& catalog, int split,
                           const Layout& layout_a, const PlacementConfig& cfg, Rng& rng);

struct RigidTransform2D {
  double yaw = 0.0, tx = 0.0, tz = 0.0;
};

RigidTransform2D sample_transform(Rng& rng);  // yaw U(-pi,pi), t U(-10,10)
void apply_transform(Layout& layout, const RigidTransform2D& t);

struct TourConfig {
  int n_candidates = 1000;
  double waypoint_clearance = 1.0;  // candidate distance from obstacles
  double waypoint_spacing = 2.0;
  double grid_resolution = 0.1;
  double path_clearance = 0.3;  // walls and obstacles, along the path
};

struct Tour {
  std::vector<Eigen::Vector2d> waypoints;
  std::vector<Eigen::Vector2d> path;  // grid polyline through all waypoints
  int steps() const { return static_cast<int>(path.size()); }
};

// Candidate locations keep waypoint_clearance from every obstacle and
// receptacle; each selected waypoint removes candidates within
// waypoint_spacing; the next waypoint is the closest survivor. Legs are
// 8-connected A* paths on a grid_resolution grid with path_clearance.
// Throws GenerationError when no candidate exists.
Tour sample_tour(const Environment& env, const TourConfig& cfg, Rng& rng);

struct CoverageConfig {
  double fov_deg = 90.0;
  // Effective detection radius, calibrated so the default generator leaves
  // roughly a fifth of the objects unobserved per tour.
  double max_range = 1.65;
  int azimuth_bins = 8;
  double sample_stride = 0.3;  // path resampling step, meters
};

// Per-object fraction of azimuth bins seen from at least one path point:
// a sample sees an object when it is within max_range, inside the
// field of view around the direction of travel, and the sight line stays
// on the floor and clear of obstacle and receptacle footprints (the
// supporting receptacle of the object itself does not block). The bin is
// the world-frame azimuth of the camera as seen from the object.
std::vector<double> coverage(const Tour& tour, const Environment& env,
                             const Layout& layout, const CoverageConfig& cfg);

struct DetectionNoiseConfig {
  double miss_rate = 0.02;          // residual miss at saturated coverage
  double fp_rate = 1.5;             // Poisson mean per layout
  double centroid_sigma = 0.05;     // meters, per axis
  double extent_sigma = 0.05;       // relative, per axis
  double yaw_sigma = 0.10;          // radians
  double label_confusion = 0.05;
  double desc_sigma_base = 0.30;    // sigma(cov) = base + slope * (1 - cov)
  double desc_sigma_slope = 0.50;
  double coverage_saturation = 0.25;  // p_detect = (1-miss) * min(1, cov/sat); <= 0 drops the gate
  double conf_base = 0.50, conf_coverage = 0.40, conf_sigma = 0.10;

  void validate() const;  // throws DataError on out-of-range fields
};

double detect_probability(const DetectionNoiseConfig& noise, double cov);
double descriptor_sigma(const DetectionNoiseConfig& noise, double cov);

// Unit-sphere observation: normalize(latent + sigma * g / sqrt(d)), so
// sigma is the expected noise norm regardless of dimension.
Eigen::VectorXd observe_descriptor(const Eigen::VectorXd& latent, double sigma, Rng& rng);
Eigen::VectorXd random_unit_vector(int dim, Rng& rng);

// Simulated detector output over one layout: per-object detection gated
// by coverage, jittered boxes, occasional label confusion, descriptors
// from the latent + noise model, plus Poisson false positives carrying
// null instance ids and random unit descriptors.
ObjectMap simulate_detections(const Environment& env, const Layout& layout,
                              const std::vector<double>& cov, const Catalog& catalog,
                              const DetectionNoiseConfig& noise,
                              const std::string& layout_tag, std::int64_t episode_id,
                              std::uint64_t seed, Rng& rng);

struct EpisodePair {
  std::uint64_t seed = 0;
  std::int64_t episode_id = 0;
  RigidTransform2D transform;
  ObjectMap gt_a, gt_b;  // true boxes, latent descriptors, instance ids
  ObjectMap map_a, map_b;  // simulated detections
  EpisodeGroundTruth gt;   // indices into gt_a / gt_b
  std::vector<double> coverage_a, coverage_b;  // per ground-truth object
  int tour_steps_a = 0, tour_steps_b = 0;

  std::vector<std::string> validate() const;
};

struct EpisodeConfig {
  int objects_per_layout = 30;
  EnvConfig env;
  PlacementConfig placement;
  TourConfig tour;
  CoverageConfig coverage;
  DetectionNoiseConfig noise;
};

EpisodePair generate_episode(const Catalog& catalog, int split, const EpisodeConfig& cfg,
                             std::int64_t episode_id, std::uint64_t episode_seed,
                             Environment* env_out = nullptr);

// Oracle maps for the ground-truth-box setting: every observed object
// (coverage > 0) with its true box and a fresh descriptor drawn at the
// stored coverage; no misses beyond observability, no false positives,
// no box jitter. Deterministic per episode seed.
std::pair<ObjectMap, ObjectMap> gtbox_maps(const EpisodePair& episode,
                                           const DetectionNoiseConfig& noise);

struct DatasetConfig {
  std::uint64_t seed = 1;
  int n_train = 461, n_val = 65, n_test = 126;
  CatalogConfig catalog;
  EpisodeConfig episode;
  std::string out_dir = "dataset";
  int threads = 1;
};

struct DatasetSummary {
  int n_train = 0, n_val = 0, n_test = 0;
  double mean_observed_fraction = 0.0;  // over both layouts, all episodes
  double mean_tour_steps = 0.0;
  std::int64_t gt_pairs_train = 0;  // |matches| summed over train episodes
};

// Writes catalog.json plus train/val/test episode and environment files
// under cfg.out_dir. One independently seeded generator per episode, so
// output bytes do not depend on the thread count.
DatasetSummary generate_dataset(const DatasetConfig& cfg);

// Serialization (reid3d-episode/1, reid3d-env/1, reid3d-catalog/1).
void save_episode(const EpisodePair& episode, const std::string& path);
EpisodePair load_episode(const std::string& path);
void save_environment(const Environment& env, const std::string& path);
Environment load_environment(const std::string& path);
void save_catalog(const Catalog& catalog, const std::string& path);
Catalog load_catalog(const std::string& path);

// Split subdirectory names, in split-index order.
const std::vector<std::string>& split_names();
std::vector<std::string> list_episode_files(const std::string& dataset_dir,
                                            const std::string& split);

}  // namespace reid3d::episode_sim
