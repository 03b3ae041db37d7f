#include "reid3d/episode_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <mutex>
#include <queue>
#include <thread>

#include "reid3d/errors.hpp"

namespace reid3d::episode_sim {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Per-episode substream tags. Every phase of generation draws from its
// own derived generator so a change in one phase cannot shift another.
namespace stream {
constexpr std::uint64_t kCatalog = 0;
constexpr std::uint64_t kEnv = 1;
constexpr std::uint64_t kLayout = 2;
constexpr std::uint64_t kModify = 3;
constexpr std::uint64_t kTransform = 4;
constexpr std::uint64_t kTourA = 5;
constexpr std::uint64_t kTourB = 6;
constexpr std::uint64_t kDetA = 7;
constexpr std::uint64_t kDetB = 8;
constexpr std::uint64_t kGtboxA = 9;
constexpr std::uint64_t kGtboxB = 10;
constexpr std::uint64_t kEpisodeBase = 1000;
}  // namespace stream

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

struct Aabb {
  Eigen::Vector3d mn, mx;
};

Aabb aabb_of(const BoundingBox3D& b) {
  const auto corners = geometry::footprint_corners(geometry::footprint_of(b));
  Aabb out;
  out.mn.x() = out.mx.x() = corners[0].x();
  out.mn.z() = out.mx.z() = corners[0].y();
  for (int k = 1; k < 4; ++k) {
    out.mn.x() = std::min(out.mn.x(), corners[k].x());
    out.mx.x() = std::max(out.mx.x(), corners[k].x());
    out.mn.z() = std::min(out.mn.z(), corners[k].y());
    out.mx.z() = std::max(out.mx.z(), corners[k].y());
  }
  out.mn.y() = b.centroid.y() - b.extents.y() / 2.0;
  out.mx.y() = b.centroid.y() + b.extents.y() / 2.0;
  return out;
}

// Touching faces do not collide.
bool aabb_overlap(const Aabb& a, const Aabb& b) {
  for (int k = 0; k < 3; ++k)
    if (!(a.mn[k] < b.mx[k] && b.mn[k] < a.mx[k])) return false;
  return true;
}

Rect footprint_rect(const BoundingBox3D& b) {
  return Rect{b.centroid.x() - b.extents.x() / 2.0, b.centroid.z() - b.extents.z() / 2.0,
              b.centroid.x() + b.extents.x() / 2.0, b.centroid.z() + b.extents.z() / 2.0};
}

double rect_distance(const Rect& r, double x, double z) {
  const double dx = std::max({r.x0 - x, 0.0, x - r.x1});
  const double dz = std::max({r.z0 - z, 0.0, z - r.z1});
  return std::hypot(dx, dz);
}

std::optional<Rect> rect_intersection(const Rect& a, const Rect& b) {
  const Rect r{std::max(a.x0, b.x0), std::max(a.z0, b.z0), std::min(a.x1, b.x1),
               std::min(a.z1, b.z1)};
  if (r.x1 <= r.x0 || r.z1 <= r.z0) return std::nullopt;
  return r;
}

Rect inflate(const Rect& r, double m) { return Rect{r.x0 - m, r.z0 - m, r.x1 + m, r.z1 + m}; }

bool rects_overlap(const Rect& a, const Rect& b) {
  return a.x0 < b.x1 && b.x0 < a.x1 && a.z0 < b.z1 && b.z0 < a.z1;
}

}  // namespace

bool Environment::contains(double x, double z) const {
  for (const auto& r : rooms)
    if (r.contains(x, z)) return true;
  return false;
}

bool Environment::contains_with_margin(double x, double z, double margin) const {
  if (!contains(x, z)) return false;
  if (margin <= 0.0) return true;
  const double d = margin * 0.7071067811865476;
  return contains(x + margin, z) && contains(x - margin, z) && contains(x, z + margin) &&
         contains(x, z - margin) && contains(x + d, z + d) && contains(x + d, z - d) &&
         contains(x - d, z + d) && contains(x - d, z - d);
}

double Environment::floor_area() const {
  const int n = static_cast<int>(rooms.size());
  double area = 0.0;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::optional<Rect> inter;
    for (int i = 0; i < n; ++i) {
      if (!(mask & (1u << i))) continue;
      inter = inter ? rect_intersection(*inter, rooms[i]) : std::optional<Rect>(rooms[i]);
      if (!inter) break;
    }
    if (!inter) continue;
    const int bits = __builtin_popcount(mask);
    area += (bits % 2 == 1 ? 1.0 : -1.0) * inter->area();
  }
  return area;
}

Rect Environment::bounds() const {
  Rect b = rooms.at(0);
  for (const auto& r : rooms) {
    b.x0 = std::min(b.x0, r.x0);
    b.z0 = std::min(b.z0, r.z0);
    b.x1 = std::max(b.x1, r.x1);
    b.z1 = std::max(b.z1, r.z1);
  }
  return b;
}

std::vector<std::string> Environment::validate() const {
  std::vector<std::string> out;
  if (rooms.empty()) out.push_back("environment has no rooms");
  for (std::size_t i = 0; i < rooms.size(); ++i)
    if (rooms[i].width() <= 0 || rooms[i].depth() <= 0)
      out.push_back("room " + std::to_string(i) + " has non-positive size");
  for (std::size_t i = 0; i < receptacles.size(); ++i) {
    const auto& rc = receptacles[i];
    const Rect fp = footprint_rect(rc.box);
    if (!(contains(fp.x0, fp.z0) && contains(fp.x0, fp.z1) && contains(fp.x1, fp.z0) &&
          contains(fp.x1, fp.z1)))
      out.push_back("receptacle " + std::to_string(i) + " leaves the floor polygon");
    const double top = rc.box.centroid.y() + rc.box.extents.y() / 2.0;
    if (std::abs(top - rc.support_height) > 1e-9)
      out.push_back("receptacle " + std::to_string(i) + " support height is not its top face");
    if (rc.box.yaw != 0.0)
      out.push_back("receptacle " + std::to_string(i) + " is not axis-aligned");
  }
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    const Aabb oa = aabb_of(obstacles[i]);
    for (std::size_t j = 0; j < receptacles.size(); ++j)
      if (aabb_overlap(oa, aabb_of(receptacles[j].box)))
        out.push_back("obstacle " + std::to_string(i) + " overlaps receptacle " +
                      std::to_string(j));
  }
  return out;
}

namespace {

// Class-aligned room furniture placement shared by obstacles and
// receptacles: inside the owning room with wall spacing, clear of the
// junction zones between rooms, and spaced away from earlier boxes.
bool place_room_box(const Environment& env, int room_index, const Eigen::Vector3d& extents,
                    double junction_clearance, double spacing, Rng& rng,
                    BoundingBox3D* out) {
  const Rect& room = env.rooms[static_cast<std::size_t>(room_index)];
  const double wall = 1.0;
  const double lox = room.x0 + wall + extents.x() / 2.0;
  const double hix = room.x1 - wall - extents.x() / 2.0;
  const double loz = room.z0 + wall + extents.z() / 2.0;
  const double hiz = room.z1 - wall - extents.z() / 2.0;
  if (lox >= hix || loz >= hiz) return false;
  for (int attempt = 0; attempt < 60; ++attempt) {
    BoundingBox3D box;
    box.extents = extents;
    box.centroid = Eigen::Vector3d(rng.uniform(lox, hix), extents.y() / 2.0,
                                   rng.uniform(loz, hiz));
    box.yaw = 0.0;
    const Rect fp = footprint_rect(box);
    const Rect keepout = inflate(fp, junction_clearance);
    bool bad = false;
    for (std::size_t r = 0; r < env.rooms.size(); ++r) {
      if (static_cast<int>(r) == room_index) continue;
      if (rects_overlap(keepout, env.rooms[r])) {
        bad = true;
        break;
      }
    }
    if (bad) continue;
    const Rect spaced = inflate(fp, spacing);
    for (const auto& ob : env.obstacles)
      if (rects_overlap(spaced, footprint_rect(ob))) {
        bad = true;
        break;
      }
    if (!bad)
      for (const auto& rc : env.receptacles)
        if (rects_overlap(spaced, footprint_rect(rc.box))) {
          bad = true;
          break;
        }
    if (bad) continue;
    *out = box;
    return true;
  }
  return false;
}

// 4-connected flood fill over a coarse traversability grid: true when
// every free cell is reachable from every other.
bool free_space_connected(const Environment& env) {
  const double res = 0.2, clearance = 0.3;
  const Rect b = env.bounds();
  const int nx = std::max(1, static_cast<int>(std::ceil(b.width() / res)));
  const int nz = std::max(1, static_cast<int>(std::ceil(b.depth() / res)));
  std::vector<Rect> blockers;
  for (const auto& ob : env.obstacles) blockers.push_back(footprint_rect(ob));
  for (const auto& rc : env.receptacles) blockers.push_back(footprint_rect(rc.box));
  std::vector<char> trav(static_cast<std::size_t>(nx) * nz, 0);
  int total = 0, first = -1;
  for (int j = 0; j < nz; ++j)
    for (int i = 0; i < nx; ++i) {
      const double x = b.x0 + (i + 0.5) * res;
      const double z = b.z0 + (j + 0.5) * res;
      if (!env.contains_with_margin(x, z, clearance)) continue;
      bool clear = true;
      for (const auto& r : blockers)
        if (rect_distance(r, x, z) < clearance) {
          clear = false;
          break;
        }
      if (!clear) continue;
      trav[static_cast<std::size_t>(j) * nx + i] = 1;
      ++total;
      if (first < 0) first = j * nx + i;
    }
  if (total == 0) return false;
  std::vector<int> stack{first};
  std::vector<char> seen(trav.size(), 0);
  seen[static_cast<std::size_t>(first)] = 1;
  int reached = 0;
  while (!stack.empty()) {
    const int c = stack.back();
    stack.pop_back();
    ++reached;
    const int i = c % nx, j = c / nx;
    const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int ni = i + di[k], nj = j + dj[k];
      if (ni < 0 || ni >= nx || nj < 0 || nj >= nz) continue;
      const std::size_t nc = static_cast<std::size_t>(nj) * nx + ni;
      if (trav[nc] && !seen[nc]) {
        seen[nc] = 1;
        stack.push_back(static_cast<int>(nc));
      }
    }
  }
  return reached == total;
}

}  // namespace

Environment generate_environment(const EnvConfig& cfg, Rng& rng) {
  if (cfg.min_rooms < 1 || cfg.max_rooms < cfg.min_rooms)
    throw std::invalid_argument("generate_environment: bad room count range");
  for (int attempt = 0; attempt < 200; ++attempt) {
    Environment env;
    const int n_rooms = static_cast<int>(rng.uniform_int(cfg.min_rooms, cfg.max_rooms));
    env.rooms.push_back(Rect{0.0, 0.0, rng.uniform(cfg.min_room_side, cfg.max_room_side),
                             rng.uniform(cfg.min_room_side, cfg.max_room_side)});
    bool layout_ok = true;
    for (int r = 1; r < n_rooms; ++r) {
      bool placed = false;
      for (int tries = 0; tries < 50 && !placed; ++tries) {
        const Rect& parent = env.rooms[rng.uniform_index(env.rooms.size())];
        const double w = rng.uniform(cfg.min_room_side, cfg.max_room_side);
        const double d = rng.uniform(cfg.min_room_side, cfg.max_room_side);
        const int side = static_cast<int>(rng.uniform_index(4));
        Rect room;
        if (side == 0 || side == 1) {
          room.x0 = side == 0 ? parent.x1 - cfg.room_overlap : parent.x0 - w + cfg.room_overlap;
          room.x1 = room.x0 + w;
          const double lo = parent.z0 - (d - cfg.min_shared_span);
          const double hi = parent.z1 - cfg.min_shared_span;
          if (hi <= lo) continue;
          room.z0 = rng.uniform(lo, hi);
          room.z1 = room.z0 + d;
        } else {
          room.z0 = side == 2 ? parent.z1 - cfg.room_overlap : parent.z0 - d + cfg.room_overlap;
          room.z1 = room.z0 + d;
          const double lo = parent.x0 - (w - cfg.min_shared_span);
          const double hi = parent.x1 - cfg.min_shared_span;
          if (hi <= lo) continue;
          room.x0 = rng.uniform(lo, hi);
          room.x1 = room.x0 + w;
        }
        env.rooms.push_back(room);
        placed = true;
      }
      if (!placed) {
        layout_ok = false;
        break;
      }
    }
    if (!layout_ok) continue;
    const double area = env.floor_area();
    if (area < cfg.min_area || area > cfg.max_area) continue;

    bool furniture_ok = true;
    for (int r = 0; r < static_cast<int>(env.rooms.size()) && furniture_ok; ++r) {
      const int n_obs = static_cast<int>(
          rng.uniform_int(cfg.min_obstacles_per_room, cfg.max_obstacles_per_room));
      for (int k = 0; k < n_obs; ++k) {
        const Eigen::Vector3d ext(rng.uniform(0.8, 3.0), rng.uniform(0.5, 2.0),
                                  rng.uniform(0.8, 3.0));
        BoundingBox3D box;
        if (place_room_box(env, r, ext, cfg.junction_clearance, 1.0, rng, &box))
          env.obstacles.push_back(box);
      }
      const int n_rec = static_cast<int>(
          rng.uniform_int(cfg.min_receptacles_per_room, cfg.max_receptacles_per_room));
      for (int k = 0; k < n_rec; ++k) {
        const Eigen::Vector3d ext(rng.uniform(0.6, 1.6), rng.uniform(0.4, 1.0),
                                  rng.uniform(0.6, 1.6));
        BoundingBox3D box;
        if (place_room_box(env, r, ext, cfg.junction_clearance, 1.0, rng, &box)) {
          Receptacle rc;
          rc.box = box;
          rc.support_height = box.centroid.y() + box.extents.y() / 2.0;
          env.receptacles.push_back(rc);
        }
      }
    }
    if (!furniture_ok || env.receptacles.empty()) continue;
    if (!free_space_connected(env)) continue;
    return env;
  }
  throw GenerationError("generate_environment: no valid environment after 200 attempts");
}

std::vector<std::string> default_classes() {
  return {"chair",   "bed",    "toilet",   "couch",      "potted plant",
          "bag",     "figurine", "plant",  "puzzle",     "toy vehicle",
          "lotion",  "doll",   "cartridge", "supplement", "shoe"};
}

namespace {

Eigen::Vector3d class_extent_template(int label) {
  static const Eigen::Vector3d t[15] = {
      {0.6, 1.0, 0.6},  {2.0, 0.6, 1.6},  {0.5, 0.8, 0.7},   {2.0, 0.9, 0.9},
      {0.5, 1.1, 0.5},  {0.5, 0.6, 0.3},  {0.3, 0.6, 0.3},   {0.4, 0.9, 0.4},
      {0.8, 0.25, 0.8}, {0.8, 0.4, 0.5},  {0.25, 0.6, 0.25}, {0.4, 0.8, 0.3},
      {0.5, 0.3, 0.4},  {0.3, 0.5, 0.3},  {0.75, 0.3, 0.35}};
  return t[label % 15];
}

}  // namespace

Eigen::VectorXd random_unit_vector(int dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  while (true) {
    for (int k = 0; k < dim; ++k) v[k] = rng.normal();
    const double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

Catalog Catalog::generate(const CatalogConfig& cfg, std::uint64_t seed) {
  if (cfg.n_models < 1 || cfg.descriptor_dim < 2)
    throw std::invalid_argument("Catalog::generate: bad size configuration");
  if (cfg.train_fraction <= 0 || cfg.val_fraction <= 0 ||
      cfg.train_fraction + cfg.val_fraction >= 1.0)
    throw std::invalid_argument("Catalog::generate: bad split fractions");
  Catalog cat;
  cat.descriptor_dim = cfg.descriptor_dim;
  cat.classes = cfg.classes.empty() ? default_classes() : cfg.classes;
  const int n_classes = static_cast<int>(cat.classes.size());
  const int d = cfg.descriptor_dim;
  const int ds = std::min(
      d, std::max(1, static_cast<int>(std::lround(cfg.signal_fraction * d))));

  Rng rng = Rng::derive(seed, 0x636174ull);
  std::vector<Eigen::VectorXd> class_means(n_classes);
  for (int c = 0; c < n_classes; ++c) class_means[c] = random_unit_vector(ds, rng);

  // Round-robin class sizes, then a per-class shuffled train/val/test cut
  // so no model id ever crosses splits.
  std::vector<int> class_count(n_classes, cfg.n_models / n_classes);
  for (int c = 0; c < cfg.n_models % n_classes; ++c) ++class_count[c];
  int next_id = 0;
  for (int c = 0; c < n_classes; ++c) {
    const int n = class_count[c];
    if (n < 3)
      throw std::invalid_argument("Catalog::generate: class " + cat.classes[c] +
                                  " has fewer than 3 models; cannot cover all splits");
    std::vector<int> order(n);
    for (int k = 0; k < n; ++k) order[k] = k;
    rng.shuffle(order);
    const int n_train = std::max(1, static_cast<int>(std::floor(cfg.train_fraction * n)));
    const int n_val = std::max(1, static_cast<int>(std::floor(cfg.val_fraction * n)));
    if (n_train + n_val >= n)
      throw std::invalid_argument("Catalog::generate: split fractions leave no test models");
    std::vector<int> split_of(n, 2);
    for (int k = 0; k < n_train; ++k) split_of[order[k]] = 0;
    for (int k = n_train; k < n_train + n_val; ++k) split_of[order[k]] = 1;

    for (int k = 0; k < n; ++k) {
      ObjectModel m;
      m.model_id = next_id++;
      m.label = c;
      m.split = split_of[k];
      const Eigen::Vector3d tpl = class_extent_template(c);
      for (int a = 0; a < 3; ++a) m.base_extents[a] = tpl[a] * (1.0 + rng.uniform(-0.2, 0.2));
      const Eigen::VectorXd offset = random_unit_vector(ds, rng);
      Eigen::VectorXd sig =
          cfg.class_weight * class_means[c] + cfg.instance_weight * offset;
      sig /= sig.norm();
      m.latent = Eigen::VectorXd::Zero(d);
      m.latent.head(ds) = sig;
      cat.models.push_back(std::move(m));
    }
  }
  return cat;
}

const ObjectModel& Catalog::model(int id) const {
  if (id < 0 || id >= static_cast<int>(models.size()))
    throw DataError("catalog: unknown model id " + std::to_string(id));
  return models[static_cast<std::size_t>(id)];
}

std::vector<std::vector<int>> Catalog::split_index(int split) const {
  std::vector<std::vector<int>> by_class(classes.size());
  for (const auto& m : models)
    if (m.split == split) by_class[static_cast<std::size_t>(m.label)].push_back(m.model_id);
  return by_class;
}

std::vector<std::string> Catalog::validate() const {
  std::vector<std::string> out;
  if (descriptor_dim < 2) out.push_back("descriptor_dim < 2");
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    if (m.model_id != static_cast<int>(i))
      out.push_back("model " + std::to_string(i) + " id mismatch");
    if (m.label < 0 || m.label >= static_cast<int>(classes.size()))
      out.push_back("model " + std::to_string(i) + " has unknown label");
    if (m.latent.size() != descriptor_dim)
      out.push_back("model " + std::to_string(i) + " latent dimension mismatch");
    else if (std::abs(m.latent.norm() - 1.0) > 1e-9)
      out.push_back("model " + std::to_string(i) + " latent is not unit norm");
    if (m.split < 0 || m.split > 2)
      out.push_back("model " + std::to_string(i) + " has unknown split");
    if (m.base_extents.minCoeff() <= 0)
      out.push_back("model " + std::to_string(i) + " has non-positive extents");
  }
  for (int split = 0; split < 3; ++split)
    for (std::size_t c = 0; c < classes.size(); ++c) {
      bool any = false;
      for (const auto& m : models)
        if (m.split == split && m.label == static_cast<int>(c)) any = true;
      if (!any)
        out.push_back("class " + classes[c] + " missing from split " + std::to_string(split));
    }
  return out;
}

namespace {

// Shared placement machinery for initial layouts, moves, and additions.
struct Placer {
  const Environment& env;
  const PlacementConfig& cfg;
  std::vector<Aabb> placed;  // instance boxes already committed

  explicit Placer(const Environment& e, const PlacementConfig& c) : env(e), cfg(c) {}

  // One pose attempt for a body of the given extents; nullopt on
  // collision or containment failure.
  std::optional<BoundingBox3D> attempt(const Eigen::Vector3d& extents, Rng& rng) const {
    BoundingBox3D box;
    box.extents = extents;
    box.yaw = geometry::normalize_yaw(rng.uniform(-kPi, kPi));
    int support = -1;
    if (!env.receptacles.empty() && rng.bernoulli(cfg.receptacle_fraction)) {
      support = static_cast<int>(rng.uniform_index(env.receptacles.size()));
      const auto& rc = env.receptacles[static_cast<std::size_t>(support)];
      const Rect fp = footprint_rect(rc.box);
      box.centroid = Eigen::Vector3d(rng.uniform(fp.x0, fp.x1),
                                     rc.support_height + extents.y() / 2.0,
                                     rng.uniform(fp.z0, fp.z1));
    } else {
      const Rect b = env.bounds();
      box.centroid = Eigen::Vector3d(rng.uniform(b.x0, b.x1), extents.y() / 2.0,
                                     rng.uniform(b.z0, b.z1));
      if (!env.contains(box.centroid.x(), box.centroid.z())) return std::nullopt;
    }
    const Aabb a = aabb_of(box);
    if (!(env.contains(a.mn.x(), a.mn.z()) && env.contains(a.mn.x(), a.mx.z()) &&
          env.contains(a.mx.x(), a.mn.z()) && env.contains(a.mx.x(), a.mx.z())))
      return std::nullopt;
    for (const auto& other : placed)
      if (aabb_overlap(a, other)) return std::nullopt;
    for (const auto& ob : env.obstacles)
      if (aabb_overlap(a, aabb_of(ob))) return std::nullopt;
    for (std::size_t r = 0; r < env.receptacles.size(); ++r) {
      if (static_cast<int>(r) == support) continue;
      if (aabb_overlap(a, aabb_of(env.receptacles[r].box))) return std::nullopt;
    }
    return box;
  }

  // Retries until success, charging consecutive failures against the
  // shared rejection budget.
  BoundingBox3D place(const Eigen::Vector3d& extents, Rng& rng, int* rejections) const {
    while (true) {
      auto box = attempt(extents, rng);
      if (box) {
        *rejections = 0;
        return *box;
      }
      if (++*rejections > cfg.max_rejections)
        throw GenerationError("object placement: rejection budget exhausted, environment too crowded");
    }
  }

  void commit(const BoundingBox3D& box) { placed.push_back(aabb_of(box)); }
};

Eigen::Vector3d scaled_extents(const ObjectModel& model, const PlacementConfig& cfg,
                               Rng& rng) {
  const double t = rng.uniform(cfg.min_scale, cfg.max_scale);
  return model.base_extents * (t / model.base_extents.maxCoeff());
}

int sample_model_id(const std::vector<std::vector<int>>& by_class, Rng& rng) {
  std::vector<int> usable;
  for (std::size_t c = 0; c < by_class.size(); ++c)
    if (!by_class[c].empty()) usable.push_back(static_cast<int>(c));
  if (usable.empty()) throw DataError("catalog split has no models");
  const int c = usable[rng.uniform_index(usable.size())];
  const auto& ids = by_class[static_cast<std::size_t>(c)];
  return ids[rng.uniform_index(ids.size())];
}

}  // namespace

Layout sample_initial_layout(const Environment& env, const Catalog& catalog, int split,
                             int n, const PlacementConfig& cfg, Rng& rng) {
  if (n < 0) throw std::invalid_argument("sample_initial_layout: negative count");
  if (env.rooms.empty() || env.floor_area() <= 0)
    throw std::invalid_argument("sample_initial_layout: environment has no floor");
  const auto by_class = catalog.split_index(split);
  Layout layout;
  Placer placer(env, cfg);
  int rejections = 0;
  for (int k = 0; k < n; ++k) {
    const int model_id = sample_model_id(by_class, rng);
    const ObjectModel& model = catalog.model(model_id);
    const Eigen::Vector3d extents = scaled_extents(model, cfg, rng);
    PlacedObject obj;
    obj.model_id = model_id;
    obj.label = model.label;
    obj.instance_id = k;
    obj.box = placer.place(extents, rng, &rejections);
    placer.commit(obj.box);
    layout.objects.push_back(std::move(obj));
  }
  return layout;
}

const char* to_string(Supercategory sc) {
  switch (sc) {
    case Supercategory::Unchanged: return "unchanged";
    case Supercategory::Moved: return "moved";
    case Supercategory::Removed: return "removed";
    case Supercategory::Added: return "added";
  }
  return "unchanged";
}

Supercategory supercategory_from_string(const std::string& s) {
  if (s == "unchanged") return Supercategory::Unchanged;
  if (s == "moved") return Supercategory::Moved;
  if (s == "removed") return Supercategory::Removed;
  if (s == "added") return Supercategory::Added;
  throw DataError("unknown supercategory: " + s);
}

Modification modify_layout(const Environment& env, const Catalog& catalog, int split,
                           const Layout& layout_a, const PlacementConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(layout_a.objects.size());
  if (n % 3 != 0)
    throw std::invalid_argument("modify_layout: layout size must be divisible by 3");
  const int third = n / 3;

  std::vector<int> perm(n);
  for (int k = 0; k < n; ++k) perm[k] = k;
  rng.shuffle(perm);

  Modification mod;
  mod.gt.supercat_a.assign(static_cast<std::size_t>(n), Supercategory::Unchanged);
  for (int k = third; k < 2 * third; ++k)
    mod.gt.supercat_a[static_cast<std::size_t>(perm[k])] = Supercategory::Moved;
  for (int k = 2 * third; k < n; ++k)
    mod.gt.supercat_a[static_cast<std::size_t>(perm[k])] = Supercategory::Removed;

  Placer placer(env, cfg);
  // Unchanged objects anchor the scene before anything new is placed.
  for (int i = 0; i < n; ++i)
    if (mod.gt.supercat_a[static_cast<std::size_t>(i)] == Supercategory::Unchanged)
      placer.commit(layout_a.objects[static_cast<std::size_t>(i)].box);

  int rejections = 0;
  for (int i = 0; i < n; ++i) {
    const auto sc = mod.gt.supercat_a[static_cast<std::size_t>(i)];
    if (sc == Supercategory::Removed) {
      mod.gt.removed.push_back(i);
      continue;
    }
    PlacedObject obj = layout_a.objects[static_cast<std::size_t>(i)];
    if (sc == Supercategory::Moved) {
      obj.box = placer.place(obj.box.extents, rng, &rejections);
      placer.commit(obj.box);
    }
    const int b_index = static_cast<int>(mod.layout_b.objects.size());
    mod.gt.matches.emplace_back(i, b_index);
    mod.gt.supercat_b.push_back(sc);
    mod.layout_b.objects.push_back(std::move(obj));
  }

  const auto by_class = catalog.split_index(split);
  for (int k = 0; k < third; ++k) {
    const int model_id = sample_model_id(by_class, rng);
    const ObjectModel& model = catalog.model(model_id);
    PlacedObject obj;
    obj.model_id = model_id;
    obj.label = model.label;
    obj.instance_id = n + k;
    obj.box = placer.place(scaled_extents(model, cfg, rng), rng, &rejections);
    placer.commit(obj.box);
    mod.gt.added.push_back(static_cast<int>(mod.layout_b.objects.size()));
    mod.gt.supercat_b.push_back(Supercategory::Added);
    mod.layout_b.objects.push_back(std::move(obj));
  }
  return mod;
}

RigidTransform2D sample_transform(Rng& rng) {
  RigidTransform2D t;
  t.yaw = geometry::normalize_yaw(rng.uniform(-kPi, kPi));
  t.tx = rng.uniform(-10.0, 10.0);
  t.tz = rng.uniform(-10.0, 10.0);
  return t;
}

void apply_transform(Layout& layout, const RigidTransform2D& t) {
  for (auto& obj : layout.objects)
    obj.box = geometry::apply_rigid_transform(obj.box, t.yaw, t.tx, t.tz);
}

namespace {

struct NavGrid {
  double x0 = 0, z0 = 0, res = 0.1;
  int nx = 0, nz = 0;
  std::vector<char> trav;

  bool ok(int i, int j) const {
    return i >= 0 && i < nx && j >= 0 && j < nz &&
           trav[static_cast<std::size_t>(j) * nx + i];
  }
  Eigen::Vector2d center(int i, int j) const {
    return {x0 + (i + 0.5) * res, z0 + (j + 0.5) * res};
  }
  std::pair<int, int> cell_of(const Eigen::Vector2d& p) const {
    return {static_cast<int>(std::floor((p.x() - x0) / res)),
            static_cast<int>(std::floor((p.y() - z0) / res))};
  }
};

NavGrid build_nav_grid(const Environment& env, double res, double clearance) {
  NavGrid g;
  const Rect b = env.bounds();
  g.x0 = b.x0;
  g.z0 = b.z0;
  g.res = res;
  g.nx = std::max(1, static_cast<int>(std::ceil(b.width() / res)));
  g.nz = std::max(1, static_cast<int>(std::ceil(b.depth() / res)));
  std::vector<Rect> blockers;
  for (const auto& ob : env.obstacles) blockers.push_back(footprint_rect(ob));
  for (const auto& rc : env.receptacles) blockers.push_back(footprint_rect(rc.box));
  g.trav.assign(static_cast<std::size_t>(g.nx) * g.nz, 0);
  for (int j = 0; j < g.nz; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const Eigen::Vector2d p = g.center(i, j);
      if (!env.contains_with_margin(p.x(), p.y(), clearance)) continue;
      bool clear = true;
      for (const auto& r : blockers)
        if (rect_distance(r, p.x(), p.y()) < clearance) {
          clear = false;
          break;
        }
      g.trav[static_cast<std::size_t>(j) * g.nx + i] = clear ? 1 : 0;
    }
  return g;
}

std::optional<std::pair<int, int>> nearest_traversable(const NavGrid& g,
                                                       const Eigen::Vector2d& p) {
  auto [ci, cj] = g.cell_of(p);
  for (int radius = 0; radius <= 8; ++radius)
    for (int dj = -radius; dj <= radius; ++dj)
      for (int di = -radius; di <= radius; ++di) {
        if (std::max(std::abs(di), std::abs(dj)) != radius) continue;
        if (g.ok(ci + di, cj + dj)) return std::make_pair(ci + di, cj + dj);
      }
  return std::nullopt;
}

// 8-connected A* with octile heuristic; diagonal steps require both
// orthogonal neighbors free. Deterministic tie-break on cell index.
std::vector<Eigen::Vector2d> astar(const NavGrid& g, std::pair<int, int> from,
                                   std::pair<int, int> to) {
  const int n = g.nx * g.nz;
  const auto id = [&](int i, int j) { return j * g.nx + i; };
  const int start = id(from.first, from.second), goal = id(to.first, to.second);
  std::vector<double> dist(static_cast<std::size_t>(n),
                           std::numeric_limits<double>::infinity());
  std::vector<int> parent(static_cast<std::size_t>(n), -1);
  const auto h = [&](int c) {
    const double dx = std::abs(c % g.nx - to.first);
    const double dz = std::abs(c / g.nx - to.second);
    return std::max(dx, dz) + 0.41421356237309515 * std::min(dx, dz);
  };
  using Entry = std::pair<double, int>;  // (f, cell)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;
  dist[static_cast<std::size_t>(start)] = 0.0;
  open.emplace(h(start), start);
  const int di[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  const int dj[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  while (!open.empty()) {
    const auto [f, c] = open.top();
    open.pop();
    if (c == goal) break;
    const int i = c % g.nx, j = c / g.nx;
    if (f > dist[static_cast<std::size_t>(c)] + h(c) + 1e-12) continue;
    for (int k = 0; k < 8; ++k) {
      const int ni = i + di[k], nj = j + dj[k];
      if (!g.ok(ni, nj)) continue;
      if (k >= 4 && !(g.ok(i + di[k], j) && g.ok(i, j + dj[k]))) continue;
      const double step = k < 4 ? 1.0 : 1.4142135623730951;
      const double nd = dist[static_cast<std::size_t>(c)] + step;
      const int nc = id(ni, nj);
      if (nd < dist[static_cast<std::size_t>(nc)] - 1e-12) {
        dist[static_cast<std::size_t>(nc)] = nd;
        parent[static_cast<std::size_t>(nc)] = c;
        open.emplace(nd + h(nc), nc);
      }
    }
  }
  if (!std::isfinite(dist[static_cast<std::size_t>(goal)])) return {};
  std::vector<Eigen::Vector2d> path;
  for (int c = goal; c != -1; c = parent[static_cast<std::size_t>(c)])
    path.push_back(g.center(c % g.nx, c / g.nx));
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

Tour sample_tour(const Environment& env, const TourConfig& cfg, Rng& rng) {
  const NavGrid grid = build_nav_grid(env, cfg.grid_resolution, cfg.path_clearance);
  std::vector<Rect> blockers;
  for (const auto& ob : env.obstacles) blockers.push_back(footprint_rect(ob));
  for (const auto& rc : env.receptacles) blockers.push_back(footprint_rect(rc.box));

  const Rect b = env.bounds();
  const double wall_margin = 0.5;
  std::vector<Eigen::Vector2d> candidates;
  for (int k = 0; k < cfg.n_candidates; ++k) {
    const Eigen::Vector2d p(rng.uniform(b.x0, b.x1), rng.uniform(b.z0, b.z1));
    if (!env.contains_with_margin(p.x(), p.y(), wall_margin)) continue;
    bool clear = true;
    for (const auto& r : blockers)
      if (rect_distance(r, p.x(), p.y()) < cfg.waypoint_clearance) {
        clear = false;
        break;
      }
    if (!clear) continue;
    auto [ci, cj] = grid.cell_of(p);
    if (!grid.ok(ci, cj)) continue;
    candidates.push_back(p);
  }
  if (candidates.empty())
    throw GenerationError("sample_tour: no candidate waypoint has the required clearance");

  Tour tour;
  Eigen::Vector2d current = candidates[rng.uniform_index(candidates.size())];
  tour.waypoints.push_back(current);
  const auto prune = [&](const Eigen::Vector2d& at) {
    std::vector<Eigen::Vector2d> kept;
    for (const auto& c : candidates)
      if ((c - at).norm() >= cfg.waypoint_spacing) kept.push_back(c);
    candidates = std::move(kept);
  };
  prune(current);

  auto cur_cell = nearest_traversable(grid, current);
  if (cur_cell) tour.path.push_back(grid.center(cur_cell->first, cur_cell->second));

  while (!candidates.empty()) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      const double d = (candidates[k] - current).norm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    const Eigen::Vector2d next = candidates[best];
    const auto next_cell = nearest_traversable(grid, next);
    if (!cur_cell || !next_cell) {
      candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(best));
      continue;
    }
    auto leg = astar(grid, *cur_cell, *next_cell);
    if (leg.empty()) {
      candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(best));
      continue;
    }
    tour.path.insert(tour.path.end(), leg.begin() + 1, leg.end());
    tour.waypoints.push_back(next);
    current = next;
    cur_cell = next_cell;
    prune(current);
  }
  return tour;
}

std::vector<double> coverage(const Tour& tour, const Environment& env,
                             const Layout& layout, const CoverageConfig& cfg) {
  const int n = static_cast<int>(layout.objects.size());
  std::vector<double> scores(static_cast<std::size_t>(n), 0.0);
  if (n == 0 || tour.path.empty() || cfg.azimuth_bins < 1) return scores;

  std::vector<Rect> obstacle_fp, receptacle_fp;
  for (const auto& ob : env.obstacles) obstacle_fp.push_back(footprint_rect(ob));
  for (const auto& rc : env.receptacles) receptacle_fp.push_back(footprint_rect(rc.box));

  // A receptacle never occludes the object standing on it.
  std::vector<int> support(static_cast<std::size_t>(n), -1);
  for (int o = 0; o < n; ++o) {
    const auto& box = layout.objects[static_cast<std::size_t>(o)].box;
    const double bottom = box.centroid.y() - box.extents.y() / 2.0;
    for (std::size_t r = 0; r < env.receptacles.size(); ++r) {
      if (std::abs(bottom - env.receptacles[r].support_height) > 1e-6) continue;
      if (receptacle_fp[r].contains(box.centroid.x(), box.centroid.z())) {
        support[static_cast<std::size_t>(o)] = static_cast<int>(r);
        break;
      }
    }
  }

  // Resample the path and attach a direction of travel to each sample.
  std::vector<Eigen::Vector2d> pos, heading;
  {
    Eigen::Vector2d last_dir(1.0, 0.0);
    double since = cfg.sample_stride;  // force-emit the first point
    for (std::size_t k = 0; k < tour.path.size(); ++k) {
      if (k + 1 < tour.path.size()) {
        const Eigen::Vector2d d = tour.path[k + 1] - tour.path[k];
        if (d.norm() > 1e-12) last_dir = d.normalized();
      }
      if (since >= cfg.sample_stride) {
        pos.push_back(tour.path[k]);
        heading.push_back(last_dir);
        since = 0.0;
      }
      if (k + 1 < tour.path.size()) since += (tour.path[k + 1] - tour.path[k]).norm();
    }
  }

  const double cos_half_fov = std::cos(cfg.fov_deg * kPi / 180.0 / 2.0);
  std::vector<std::uint32_t> bins(static_cast<std::size_t>(n), 0);

  for (std::size_t s = 0; s < pos.size(); ++s) {
    for (int o = 0; o < n; ++o) {
      const auto& box = layout.objects[static_cast<std::size_t>(o)].box;
      const Eigen::Vector2d obj(box.centroid.x(), box.centroid.z());
      const Eigen::Vector2d to_obj = obj - pos[s];
      const double d = to_obj.norm();
      if (d > cfg.max_range) continue;
      if (d > 1e-9 && to_obj.dot(heading[s]) / d < cos_half_fov) continue;

      bool blocked = false;
      const int steps = static_cast<int>(std::floor(d / 0.1));
      for (int k = 1; k <= steps && !blocked; ++k) {
        const Eigen::Vector2d p = pos[s] + to_obj * (k * 0.1 / std::max(d, 1e-12));
        if (!env.contains(p.x(), p.y())) {
          blocked = true;
          break;
        }
        for (const auto& r : obstacle_fp)
          if (r.contains(p.x(), p.y())) {
            blocked = true;
            break;
          }
        if (blocked) break;
        for (std::size_t r = 0; r < receptacle_fp.size(); ++r) {
          if (static_cast<int>(r) == support[static_cast<std::size_t>(o)]) continue;
          if (receptacle_fp[r].contains(p.x(), p.y())) {
            blocked = true;
            break;
          }
        }
      }
      if (blocked) continue;

      const double az = std::atan2(pos[s].y() - obj.y(), pos[s].x() - obj.x());
      int bin = static_cast<int>(std::floor((az + kPi) / (2.0 * kPi) * cfg.azimuth_bins));
      bin = std::min(std::max(bin, 0), cfg.azimuth_bins - 1);
      bins[static_cast<std::size_t>(o)] |= (1u << bin);
    }
  }
  for (int o = 0; o < n; ++o)
    scores[static_cast<std::size_t>(o)] =
        static_cast<double>(__builtin_popcount(bins[static_cast<std::size_t>(o)])) /
        cfg.azimuth_bins;
  return scores;
}

void DetectionNoiseConfig::validate() const {
  const auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0))
      throw DataError(std::string("noise config: ") + name + " must be in [0, 1]");
  };
  prob(miss_rate, "miss_rate");
  prob(label_confusion, "label_confusion");
  const auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw DataError(std::string("noise config: ") + name + " must be >= 0");
  };
  nonneg(fp_rate, "fp_rate");
  nonneg(centroid_sigma, "centroid_sigma");
  nonneg(extent_sigma, "extent_sigma");
  nonneg(yaw_sigma, "yaw_sigma");
  nonneg(desc_sigma_base, "desc_sigma_base");
  nonneg(desc_sigma_slope, "desc_sigma_slope");
  nonneg(conf_sigma, "conf_sigma");
  if (!std::isfinite(coverage_saturation))
    throw DataError("noise config: coverage_saturation must be finite");
  if (!std::isfinite(conf_base) || !std::isfinite(conf_coverage))
    throw DataError("noise config: confidence parameters must be finite");
}

double detect_probability(const DetectionNoiseConfig& noise, double cov) {
  if (noise.coverage_saturation <= 0.0) return 1.0 - noise.miss_rate;
  if (cov <= 0.0) return 0.0;
  return (1.0 - noise.miss_rate) * std::min(1.0, cov / noise.coverage_saturation);
}

double descriptor_sigma(const DetectionNoiseConfig& noise, double cov) {
  return noise.desc_sigma_base + noise.desc_sigma_slope * (1.0 - clamp01(cov));
}

Eigen::VectorXd observe_descriptor(const Eigen::VectorXd& latent, double sigma, Rng& rng) {
  const double scale = sigma / std::sqrt(static_cast<double>(latent.size()));
  while (true) {
    Eigen::VectorXd x = latent;
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] += scale * rng.normal();
    const double n = x.norm();
    if (n > 1e-12) return x / n;
  }
}

ObjectMap simulate_detections(const Environment& env, const Layout& layout,
                              const std::vector<double>& cov, const Catalog& catalog,
                              const DetectionNoiseConfig& noise,
                              const std::string& layout_tag, std::int64_t episode_id,
                              std::uint64_t seed, Rng& rng) {
  noise.validate();
  if (cov.size() != layout.objects.size())
    throw std::invalid_argument("simulate_detections: coverage size mismatch");
  const int n_classes = static_cast<int>(catalog.classes.size());

  ObjectMap map;
  map.layout_tag = layout_tag;
  map.episode_id = episode_id;
  map.seed = seed;
  map.descriptor_dim = catalog.descriptor_dim;

  for (std::size_t i = 0; i < layout.objects.size(); ++i) {
    const auto& obj = layout.objects[i];
    if (!rng.bernoulli(detect_probability(noise, cov[i]))) continue;

    ObjectInstance det;
    det.box = obj.box;
    for (int a = 0; a < 3; ++a) det.box.centroid[a] += noise.centroid_sigma * rng.normal();
    for (int a = 0; a < 3; ++a)
      det.box.extents[a] =
          std::max(0.05, det.box.extents[a] * (1.0 + noise.extent_sigma * rng.normal()));
    det.box.yaw = geometry::normalize_yaw(det.box.yaw + noise.yaw_sigma * rng.normal());

    det.label = obj.label;
    if (n_classes > 1 && rng.bernoulli(noise.label_confusion)) {
      int other = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n_classes - 1)));
      if (other >= obj.label) ++other;
      det.label = other;
    }
    det.confidence =
        clamp01(noise.conf_base + noise.conf_coverage * cov[i] + noise.conf_sigma * rng.normal());
    det.descriptor = observe_descriptor(catalog.model(obj.model_id).latent,
                                        descriptor_sigma(noise, cov[i]), rng);
    det.instance_id = obj.instance_id;
    map.objects.push_back(std::move(det));
  }

  const Rect b = env.bounds();
  const int n_fp = static_cast<int>(rng.poisson(noise.fp_rate));
  for (int k = 0; k < n_fp; ++k) {
    Eigen::Vector2d p;
    bool found = false;
    for (int attempt = 0; attempt < 100; ++attempt) {
      p = Eigen::Vector2d(rng.uniform(b.x0, b.x1), rng.uniform(b.z0, b.z1));
      if (env.contains(p.x(), p.y())) {
        found = true;
        break;
      }
    }
    if (!found) continue;
    ObjectInstance det;
    det.box.extents = Eigen::Vector3d(rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5),
                                      rng.uniform(0.3, 1.5));
    det.box.centroid = Eigen::Vector3d(p.x(), det.box.extents.y() / 2.0, p.y());
    det.box.yaw = geometry::normalize_yaw(rng.uniform(-kPi, kPi));
    det.label = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n_classes)));
    det.confidence = rng.uniform(0.05, 0.6);
    det.descriptor = random_unit_vector(catalog.descriptor_dim, rng);
    det.instance_id = std::nullopt;
    map.objects.push_back(std::move(det));
  }
  return map;
}

namespace {

ObjectMap ground_truth_map(const Layout& layout, const Catalog& catalog,
                           const std::string& tag, std::int64_t episode_id,
                           std::uint64_t seed) {
  ObjectMap map;
  map.layout_tag = tag;
  map.episode_id = episode_id;
  map.seed = seed;
  map.descriptor_dim = catalog.descriptor_dim;
  for (const auto& obj : layout.objects) {
    ObjectInstance inst;
    inst.box = obj.box;
    inst.label = obj.label;
    inst.confidence = 1.0;
    inst.descriptor = catalog.model(obj.model_id).latent;
    inst.instance_id = obj.instance_id;
    map.objects.push_back(std::move(inst));
  }
  return map;
}

void transform_map(ObjectMap& map, const RigidTransform2D& t) {
  for (auto& obj : map.objects)
    obj.box = geometry::apply_rigid_transform(obj.box, t.yaw, t.tx, t.tz);
}

}  // namespace

EpisodePair generate_episode(const Catalog& catalog, int split, const EpisodeConfig& cfg,
                             std::int64_t episode_id, std::uint64_t episode_seed,
                             Environment* env_out) {
  cfg.noise.validate();
  Rng env_rng = Rng::derive(episode_seed, stream::kEnv);
  const Environment env = generate_environment(cfg.env, env_rng);

  Rng layout_rng = Rng::derive(episode_seed, stream::kLayout);
  const Layout layout_a = sample_initial_layout(env, catalog, split, cfg.objects_per_layout,
                                                cfg.placement, layout_rng);
  Rng mod_rng = Rng::derive(episode_seed, stream::kModify);
  Modification mod = modify_layout(env, catalog, split, layout_a, cfg.placement, mod_rng);

  Rng tour_a_rng = Rng::derive(episode_seed, stream::kTourA);
  const Tour tour_a = sample_tour(env, cfg.tour, tour_a_rng);
  Rng tour_b_rng = Rng::derive(episode_seed, stream::kTourB);
  const Tour tour_b = sample_tour(env, cfg.tour, tour_b_rng);

  EpisodePair ep;
  ep.seed = episode_seed;
  ep.episode_id = episode_id;
  ep.gt = std::move(mod.gt);
  ep.coverage_a = coverage(tour_a, env, layout_a, cfg.coverage);
  ep.coverage_b = coverage(tour_b, env, mod.layout_b, cfg.coverage);
  ep.tour_steps_a = tour_a.steps();
  ep.tour_steps_b = tour_b.steps();

  Rng det_a_rng = Rng::derive(episode_seed, stream::kDetA);
  ep.map_a = simulate_detections(env, layout_a, ep.coverage_a, catalog, cfg.noise, "A",
                                 episode_id, episode_seed, det_a_rng);
  Rng det_b_rng = Rng::derive(episode_seed, stream::kDetB);
  ep.map_b = simulate_detections(env, mod.layout_b, ep.coverage_b, catalog, cfg.noise, "B",
                                 episode_id, episode_seed, det_b_rng);

  Rng trans_rng = Rng::derive(episode_seed, stream::kTransform);
  ep.transform = sample_transform(trans_rng);
  apply_transform(mod.layout_b, ep.transform);
  transform_map(ep.map_b, ep.transform);

  ep.gt_a = ground_truth_map(layout_a, catalog, "A", episode_id, episode_seed);
  ep.gt_b = ground_truth_map(mod.layout_b, catalog, "B", episode_id, episode_seed);

  if (env_out) *env_out = env;
  return ep;
}

std::pair<ObjectMap, ObjectMap> gtbox_maps(const EpisodePair& episode,
                                           const DetectionNoiseConfig& noise) {
  noise.validate();
  const auto build = [&](const ObjectMap& gt, const std::vector<double>& cov,
                         std::uint64_t stream_tag) {
    Rng rng = Rng::derive(episode.seed, stream_tag);
    ObjectMap map;
    map.layout_tag = gt.layout_tag;
    map.episode_id = gt.episode_id;
    map.seed = episode.seed;
    map.descriptor_dim = gt.descriptor_dim;
    for (std::size_t i = 0; i < gt.objects.size(); ++i) {
      if (cov.at(i) <= 0.0) continue;
      ObjectInstance inst = gt.objects[i];
      inst.descriptor =
          observe_descriptor(gt.objects[i].descriptor, descriptor_sigma(noise, cov[i]), rng);
      map.objects.push_back(std::move(inst));
    }
    return map;
  };
  return {build(episode.gt_a, episode.coverage_a, stream::kGtboxA),
          build(episode.gt_b, episode.coverage_b, stream::kGtboxB)};
}

std::vector<std::string> EpisodePair::validate() const {
  std::vector<std::string> out;
  for (const auto& v : reid3d::validate(gt_a)) out.push_back("gt map A: " + v);
  for (const auto& v : reid3d::validate(gt_b)) out.push_back("gt map B: " + v);
  for (const auto& v : reid3d::validate(map_a)) out.push_back("detection map A: " + v);
  for (const auto& v : reid3d::validate(map_b)) out.push_back("detection map B: " + v);

  const int na = gt_a.size(), nb = gt_b.size();
  if (static_cast<int>(gt.supercat_a.size()) != na)
    out.push_back("supercategory list A length mismatch");
  if (static_cast<int>(gt.supercat_b.size()) != nb)
    out.push_back("supercategory list B length mismatch");
  if (static_cast<int>(coverage_a.size()) != na) out.push_back("coverage A length mismatch");
  if (static_cast<int>(coverage_b.size()) != nb) out.push_back("coverage B length mismatch");
  for (double c : coverage_a)
    if (!(c >= 0.0 && c <= 1.0)) out.push_back("coverage A value out of [0, 1]");
  for (double c : coverage_b)
    if (!(c >= 0.0 && c <= 1.0)) out.push_back("coverage B value out of [0, 1]");

  std::vector<int> a_seen(static_cast<std::size_t>(std::max(na, 0)), 0);
  std::vector<int> b_seen(static_cast<std::size_t>(std::max(nb, 0)), 0);
  const auto in_a = [&](int i) { return i >= 0 && i < na; };
  const auto in_b = [&](int j) { return j >= 0 && j < nb; };
  for (const auto& [i, j] : gt.matches) {
    if (!in_a(i) || !in_b(j)) {
      out.push_back("match index out of range");
      continue;
    }
    ++a_seen[static_cast<std::size_t>(i)];
    ++b_seen[static_cast<std::size_t>(j)];
    if (gt_a.objects[static_cast<std::size_t>(i)].instance_id !=
        gt_b.objects[static_cast<std::size_t>(j)].instance_id)
      out.push_back("matched pair (" + std::to_string(i) + ", " + std::to_string(j) +
                    ") has different instance ids");
  }
  for (int i : gt.removed) {
    if (!in_a(i)) {
      out.push_back("removed index out of range");
      continue;
    }
    ++a_seen[static_cast<std::size_t>(i)];
    if (gt.supercat_a[static_cast<std::size_t>(i)] != Supercategory::Removed)
      out.push_back("removed object " + std::to_string(i) + " not tagged removed");
  }
  for (int j : gt.added) {
    if (!in_b(j)) {
      out.push_back("added index out of range");
      continue;
    }
    ++b_seen[static_cast<std::size_t>(j)];
    if (gt.supercat_b[static_cast<std::size_t>(j)] != Supercategory::Added)
      out.push_back("added object " + std::to_string(j) + " not tagged added");
  }
  for (int i = 0; i < na; ++i)
    if (a_seen[static_cast<std::size_t>(i)] != 1)
      out.push_back("layout A object " + std::to_string(i) +
                    " not covered exactly once by matches + removed");
  for (int j = 0; j < nb; ++j)
    if (b_seen[static_cast<std::size_t>(j)] != 1)
      out.push_back("layout B object " + std::to_string(j) +
                    " not covered exactly once by matches + added");

  // Detections may only reference identities that exist in their layout.
  const auto check_ids = [&](const ObjectMap& detections, const ObjectMap& gt_map,
                             const char* tag) {
    for (const auto& det : detections.objects) {
      if (!det.instance_id) continue;
      bool found = false;
      for (const auto& obj : gt_map.objects)
        if (obj.instance_id == det.instance_id) found = true;
      if (!found)
        out.push_back(std::string("detection map ") + tag + " references unknown instance " +
                      std::to_string(*det.instance_id));
    }
  };
  check_ids(map_a, gt_a, "A");
  check_ids(map_b, gt_b, "B");
  return out;
}

const std::vector<std::string>& split_names() {
  static const std::vector<std::string> names{"train", "val", "test"};
  return names;
}

DatasetSummary generate_dataset(const DatasetConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.episode.noise.validate();
  if (cfg.n_train < 0 || cfg.n_val < 0 || cfg.n_test < 0)
    throw std::invalid_argument("generate_dataset: negative split size");

  const Catalog catalog =
      Catalog::generate(cfg.catalog, Rng::derive(cfg.seed, stream::kCatalog).next_u64());

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw DataError("cannot create output directory: " + cfg.out_dir);
  for (const auto& split : split_names()) {
    fs::create_directories(fs::path(cfg.out_dir) / split, ec);
    if (ec) throw DataError("cannot create output directory: " + cfg.out_dir + "/" + split);
  }
  save_catalog(catalog, (fs::path(cfg.out_dir) / "catalog.json").string());

  struct Job {
    int split = 0;
    std::int64_t episode_id = 0;
    std::string episode_path, env_path;
  };
  std::vector<Job> jobs;
  const int sizes[3] = {cfg.n_train, cfg.n_val, cfg.n_test};
  std::int64_t next_id = 0;
  for (int split = 0; split < 3; ++split)
    for (int k = 0; k < sizes[split]; ++k) {
      Job job;
      job.split = split;
      job.episode_id = next_id++;
      char name[64];
      std::snprintf(name, sizeof name, "episode_%05lld.json",
                    static_cast<long long>(job.episode_id));
      job.episode_path = (fs::path(cfg.out_dir) / split_names()[split] / name).string();
      std::snprintf(name, sizeof name, "env_%05lld.json",
                    static_cast<long long>(job.episode_id));
      job.env_path = (fs::path(cfg.out_dir) / split_names()[split] / name).string();
      jobs.push_back(std::move(job));
    }

  struct PerEpisode {
    int split = 0;
    int observed = 0, total = 0;
    int tour_steps = 0;
    std::int64_t gt_pairs = 0;
  };
  std::vector<PerEpisode> results(jobs.size());

  const auto run_job = [&](std::size_t j) {
    const Job& job = jobs[j];
    // Crowded or disconnected samples are rejected and retried with the next
    // value of the per-episode seed stream; the sequence depends only on
    // (cfg.seed, episode_id), so retries stay deterministic.
    Rng seed_rng =
        Rng::derive(cfg.seed, stream::kEpisodeBase + static_cast<std::uint64_t>(job.episode_id));
    constexpr int kMaxEpisodeAttempts = 16;
    Environment env;
    EpisodePair ep;
    for (int attempt = 0;; ++attempt) {
      const std::uint64_t episode_seed = seed_rng.next_u64();
      try {
        ep = generate_episode(catalog, job.split, cfg.episode, job.episode_id, episode_seed, &env);
        break;
      } catch (const GenerationError&) {
        if (attempt + 1 >= kMaxEpisodeAttempts) throw;
      }
    }
    save_episode(ep, job.episode_path);
    save_environment(env, job.env_path);
    PerEpisode r;
    r.split = job.split;
    for (double c : ep.coverage_a) {
      r.total += 1;
      if (c > 0.0) r.observed += 1;
    }
    for (double c : ep.coverage_b) {
      r.total += 1;
      if (c > 0.0) r.observed += 1;
    }
    r.tour_steps = (ep.tour_steps_a + ep.tour_steps_b) / 2;
    r.gt_pairs = static_cast<std::int64_t>(ep.gt.matches.size());
    results[j] = r;
  };

  const int threads = std::max(1, cfg.threads);
  if (threads == 1 || jobs.size() < 2) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        while (true) {
          const std::size_t j = next.fetch_add(1);
          if (j >= jobs.size()) return;
          try {
            run_job(j);
          } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!first_error) first_error = std::current_exception();
            return;
          }
        }
      });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  DatasetSummary summary;
  summary.n_train = cfg.n_train;
  summary.n_val = cfg.n_val;
  summary.n_test = cfg.n_test;
  std::int64_t observed = 0, total = 0, steps = 0;
  for (const auto& r : results) {
    observed += r.observed;
    total += r.total;
    steps += r.tour_steps;
    if (r.split == 0) summary.gt_pairs_train += r.gt_pairs;
  }
  if (total > 0)
    summary.mean_observed_fraction = static_cast<double>(observed) / static_cast<double>(total);
  if (!results.empty())
    summary.mean_tour_steps = static_cast<double>(steps) / static_cast<double>(results.size());
  return summary;
}

}  // namespace reid3d::episode_sim
