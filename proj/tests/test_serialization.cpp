#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "reid3d/episode_sim.hpp"
#include "reid3d/errors.hpp"
#include "reid3d/object_map.hpp"
#include "reid3d/point_cloud_io.hpp"
#include "reid3d/rng.hpp"
#include "reid3d/run_config.hpp"
#include "test_util.hpp"

using namespace reid3d;
using namespace reid3d::episode_sim;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  REQUIRE(f.good());
  f << text;
}

ObjectMap sample_map() {
  ObjectMap map;
  map.layout_tag = "B";
  map.episode_id = 42;
  map.seed = 0xdeadbeefcafeULL;
  map.descriptor_dim = 3;
  ObjectInstance a;
  a.box = BoundingBox3D{{0.1, 1.0 / 3.0, -2.5}, {1.0, 2.0, 0.25}, 0.7853981633974483};
  a.label = 4;
  a.confidence = 0.875;
  a.descriptor = Eigen::Vector3d(0.1, -1e-17, 3.0);
  a.instance_id = 17;
  map.objects.push_back(a);
  ObjectInstance fp;  // false positive, no identity
  fp.box = BoundingBox3D{{-4.0, 0.5, 9.25}, {0.3, 0.3, 0.3}, -3.0};
  fp.label = 0;
  fp.confidence = 0.0;
  fp.descriptor = Eigen::Vector3d(1.0, 0.0, 0.0);
  fp.instance_id = std::nullopt;
  map.objects.push_back(fp);
  return map;
}

void check_maps_equal(const ObjectMap& x, const ObjectMap& y) {
  CHECK(x.layout_tag == y.layout_tag);
  CHECK(x.episode_id == y.episode_id);
  CHECK(x.seed == y.seed);
  CHECK(x.descriptor_dim == y.descriptor_dim);
  REQUIRE(x.objects.size() == y.objects.size());
  for (std::size_t i = 0; i < x.objects.size(); ++i) {
    const auto& a = x.objects[i];
    const auto& b = y.objects[i];
    CHECK(a.box.centroid == b.box.centroid);
    CHECK(a.box.extents == b.box.extents);
    CHECK(a.box.yaw == b.box.yaw);
    CHECK(a.label == b.label);
    CHECK(a.confidence == b.confidence);
    CHECK(a.descriptor == b.descriptor);
    CHECK(a.instance_id == b.instance_id);
  }
}

}  // namespace

TEST_SUITE("serialization") {
  TEST_CASE("object map round-trips bit-exactly") {
    const std::string dir = test::tmp_dir("ser_map");
    const ObjectMap map = sample_map();
    const std::string p1 = dir + "/map.json", p2 = dir + "/map2.json";
    save_object_map(map, p1);
    const ObjectMap back = load_object_map(p1);
    check_maps_equal(map, back);
    // A second save of the loaded map reproduces the file byte for byte.
    save_object_map(back, p2);
    CHECK(slurp(p1) == slurp(p2));
  }

  TEST_CASE("object map validation catches malformed fields") {
    ObjectMap map = sample_map();
    CHECK(validate(map).empty());

    ObjectMap bad = map;
    bad.layout_tag = "C";
    bad.objects[0].box.yaw = 3.2;
    bad.objects[0].confidence = 1.5;
    bad.objects[1].descriptor = Eigen::Vector2d(1.0, 0.0);
    const auto violations = validate(bad);
    CHECK(violations.size() == 4);

    ObjectMap neg = map;
    neg.objects[0].box.extents.y() = 0.0;
    CHECK(validate(neg).size() == 1);
  }

  TEST_CASE("descriptor matrix stacks rows in object order") {
    const ObjectMap map = sample_map();
    const Eigen::MatrixXd m = map.descriptor_matrix();
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 3);
    CHECK(m.row(0).transpose() == map.objects[0].descriptor);
    CHECK(m.row(1).transpose() == map.objects[1].descriptor);
  }

  TEST_CASE("object map loader rejects broken documents") {
    const std::string dir = test::tmp_dir("ser_map_bad");
    const ObjectMap map = sample_map();
    const std::string good = dir + "/good.json";
    save_object_map(map, good);

    CHECK_THROWS_AS(load_object_map(dir + "/absent.json"), ParseError);

    spit(dir + "/garbage.json", "{ not json at all");
    CHECK_THROWS_AS(load_object_map(dir + "/garbage.json"), ParseError);

    std::string text = slurp(good);
    const auto at = text.find("reid3d-map/1");
    REQUIRE(at != std::string::npos);
    text.replace(at, 12, "reid3d-map/9");
    spit(dir + "/version.json", text);
    CHECK_THROWS_AS(load_object_map(dir + "/version.json"), ParseError);

    // Structurally valid JSON whose content is inconsistent.
    ObjectMap mismatched = map;
    mismatched.descriptor_dim = 4;
    save_object_map(mismatched, dir + "/mismatch.json");
    CHECK_THROWS_AS(load_object_map(dir + "/mismatch.json"), DataError);
  }

  TEST_CASE("episode round-trips through its file format") {
    const std::string dir = test::tmp_dir("ser_episode");
    CatalogConfig cc;
    cc.n_models = 60;
    cc.descriptor_dim = 8;
    const Catalog cat = Catalog::generate(cc, 3);
    EpisodeConfig cfg;
    const EpisodePair ep = generate_episode(cat, 0, cfg, 7, 4242);

    const std::string p1 = dir + "/ep.json", p2 = dir + "/ep2.json";
    save_episode(ep, p1);
    const EpisodePair back = load_episode(p1);

    CHECK(back.seed == ep.seed);
    CHECK(back.episode_id == ep.episode_id);
    CHECK(back.transform.yaw == ep.transform.yaw);
    CHECK(back.transform.tx == ep.transform.tx);
    CHECK(back.transform.tz == ep.transform.tz);
    check_maps_equal(back.gt_a, ep.gt_a);
    check_maps_equal(back.gt_b, ep.gt_b);
    check_maps_equal(back.map_a, ep.map_a);
    check_maps_equal(back.map_b, ep.map_b);
    CHECK(back.gt.matches == ep.gt.matches);
    CHECK(back.gt.removed == ep.gt.removed);
    CHECK(back.gt.added == ep.gt.added);
    CHECK(back.gt.supercat_a == ep.gt.supercat_a);
    CHECK(back.gt.supercat_b == ep.gt.supercat_b);
    CHECK(back.coverage_a == ep.coverage_a);
    CHECK(back.coverage_b == ep.coverage_b);
    CHECK(back.tour_steps_a == ep.tour_steps_a);
    CHECK(back.tour_steps_b == ep.tour_steps_b);
    CHECK(back.validate().empty());

    save_episode(back, p2);
    CHECK(slurp(p1) == slurp(p2));
  }

  TEST_CASE("environment round-trips exactly") {
    const std::string dir = test::tmp_dir("ser_env");
    EnvConfig cfg;
    Rng rng(Rng::derive(600, 1));
    const Environment env = generate_environment(cfg, rng);
    const std::string p1 = dir + "/env.json", p2 = dir + "/env2.json";
    save_environment(env, p1);
    const Environment back = load_environment(p1);

    REQUIRE(back.rooms.size() == env.rooms.size());
    for (std::size_t i = 0; i < env.rooms.size(); ++i) {
      CHECK(back.rooms[i].x0 == env.rooms[i].x0);
      CHECK(back.rooms[i].z0 == env.rooms[i].z0);
      CHECK(back.rooms[i].x1 == env.rooms[i].x1);
      CHECK(back.rooms[i].z1 == env.rooms[i].z1);
    }
    REQUIRE(back.obstacles.size() == env.obstacles.size());
    for (std::size_t i = 0; i < env.obstacles.size(); ++i) {
      CHECK(back.obstacles[i].centroid == env.obstacles[i].centroid);
      CHECK(back.obstacles[i].extents == env.obstacles[i].extents);
      CHECK(back.obstacles[i].yaw == env.obstacles[i].yaw);
    }
    REQUIRE(back.receptacles.size() == env.receptacles.size());
    for (std::size_t i = 0; i < env.receptacles.size(); ++i) {
      CHECK(back.receptacles[i].box.centroid == env.receptacles[i].box.centroid);
      CHECK(back.receptacles[i].support_height == env.receptacles[i].support_height);
    }
    save_environment(back, p2);
    CHECK(slurp(p1) == slurp(p2));
  }

  TEST_CASE("catalog round-trips exactly") {
    const std::string dir = test::tmp_dir("ser_catalog");
    CatalogConfig cc;
    cc.n_models = 60;
    cc.descriptor_dim = 12;
    const Catalog cat = Catalog::generate(cc, 9);
    const std::string p1 = dir + "/cat.json", p2 = dir + "/cat2.json";
    save_catalog(cat, p1);
    const Catalog back = load_catalog(p1);

    CHECK(back.descriptor_dim == cat.descriptor_dim);
    CHECK(back.classes == cat.classes);
    REQUIRE(back.models.size() == cat.models.size());
    for (std::size_t i = 0; i < cat.models.size(); ++i) {
      CHECK(back.models[i].model_id == cat.models[i].model_id);
      CHECK(back.models[i].label == cat.models[i].label);
      CHECK(back.models[i].split == cat.models[i].split);
      CHECK(back.models[i].base_extents == cat.models[i].base_extents);
      CHECK(back.models[i].latent == cat.models[i].latent);
    }
    save_catalog(back, p2);
    CHECK(slurp(p1) == slurp(p2));
  }

  TEST_CASE("run config persists every field it claims to") {
    const std::string dir = test::tmp_dir("ser_run");
    cli::RunConfig cfg;
    cfg.seed = 99;
    cfg.threads = 4;
    cfg.out_dir = "somewhere";
    cfg.dataset_dir = "data";
    cfg.variant = "h1l";
    cfg.split = "val";
    cfg.n_train = 12;
    cfg.descriptor_dim = 32;
    cfg.noise.fp_rate = 0.25;
    cfg.noise.desc_sigma_base = 0.05;
    cfg.d_out = 48;
    cfg.tau = 0.5;
    cfg.match_threshold = 0.31;
    cfg.matcher_lr = 1e-4;
    cfg.triplet_margin = 0.75;
    cfg.eval_episode_limit = 3;

    const std::string p1 = dir + "/run.json", p2 = dir + "/run2.json";
    cli::save_run_config(cfg, p1);
    const cli::RunConfig back = cli::load_run_config(p1);
    CHECK(back.seed == 99);
    CHECK(back.threads == 4);
    CHECK(back.out_dir == "somewhere");
    CHECK(back.dataset_dir == "data");
    CHECK(back.variant == "h1l");
    CHECK(back.split == "val");
    CHECK(back.n_train == 12);
    CHECK(back.descriptor_dim == 32);
    CHECK(back.noise.fp_rate == 0.25);
    CHECK(back.noise.desc_sigma_base == 0.05);
    CHECK(back.d_out == 48);
    CHECK(back.tau == 0.5);
    CHECK(back.match_threshold == 0.31);
    CHECK(back.matcher_lr == 1e-4);
    CHECK(back.triplet_margin == 0.75);
    CHECK(back.eval_episode_limit == 3);
    cli::save_run_config(back, p2);
    CHECK(slurp(p1) == slurp(p2));
  }

  TEST_CASE("episode file listing filters and sorts") {
    const std::string dir = test::tmp_dir("ser_listing");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "train");
    spit(dir + "/train/episode_00002.json", "{}");
    spit(dir + "/train/episode_00000.json", "{}");
    spit(dir + "/train/env_00000.json", "{}");
    spit(dir + "/train/notes.txt", "x");
    const auto files = list_episode_files(dir, "train");
    REQUIRE(files.size() == 2);
    CHECK(files[0] < files[1]);
    CHECK(files[0].find("episode_00000.json") != std::string::npos);
    CHECK(files[1].find("episode_00002.json") != std::string::npos);
    CHECK_THROWS_AS(list_episode_files(dir, "val"), DataError);
  }

  TEST_CASE("binary point clouds round-trip bit-exactly") {
    const std::string dir = test::tmp_dir("ser_cloud");
    PointCloud cloud;
    cloud.points = {{0.1, 1.0 / 3.0, -1e-300}, {5.0, -2.5, 1e17}};
    cloud.colors = {{{10, 20, 30}}, {{0, 255, 7}}};
    const std::string p = dir + "/cloud.r3pc";
    geometry::save_point_cloud_binary(cloud, p);
    const auto back = geometry::load_point_cloud_binary(p);
    REQUIRE(back.size() == 2);
    CHECK(back.points[0] == cloud.points[0]);
    CHECK(back.points[1] == cloud.points[1]);
    REQUIRE(back.has_colors());
    CHECK(back.colors[0] == cloud.colors[0]);
    CHECK(back.colors[1] == cloud.colors[1]);

    PointCloud plain;
    plain.points = {{1.0, 2.0, 3.0}};
    geometry::save_point_cloud_binary(plain, p);
    const auto back2 = geometry::load_point_cloud_binary(p);
    REQUIRE(back2.size() == 1);
    CHECK(back2.points[0] == plain.points[0]);

    spit(dir + "/bad.r3pc", "XXXX????");
    CHECK_THROWS_AS(geometry::load_point_cloud_binary(dir + "/bad.r3pc"), ParseError);
    CHECK_THROWS_AS(geometry::load_point_cloud_binary(dir + "/absent.r3pc"), ParseError);
  }

  TEST_CASE("text point clouds accept comments and round-trip") {
    const std::string dir = test::tmp_dir("ser_cloud_text");
    PointCloud cloud;
    cloud.points = {{0.1, 0.2, 0.30000000000000004}, {-7.25, 0.0, 2.0}};
    const std::string p = dir + "/cloud.txt";
    geometry::save_point_cloud_text(cloud, p);
    const auto back = geometry::load_point_cloud_text(p);
    REQUIRE(back.size() == 2);
    CHECK(back.points[0] == cloud.points[0]);
    CHECK(back.points[1] == cloud.points[1]);

    spit(dir + "/hand.txt", "# header\n1 2 3 10 20 30\n2.5 -1 0 1 2 3\n");
    const auto hand = geometry::load_point_cloud_text(dir + "/hand.txt");
    REQUIRE(hand.size() == 2);
    REQUIRE(hand.has_colors());
    CHECK(hand.points[0] == Eigen::Vector3d(1, 2, 3));
    CHECK(hand.colors[1] == std::array<std::uint8_t, 3>{{1, 2, 3}});

    spit(dir + "/ragged.txt", "1 2 3\n1 2\n");
    CHECK_THROWS_AS(geometry::load_point_cloud_text(dir + "/ragged.txt"), ParseError);
  }
}
