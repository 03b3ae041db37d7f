#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "reid3d/errors.hpp"
#include "reid3d/object_map.hpp"
#include "reid3d/pipeline.hpp"
#include "reid3d/run_config.hpp"
#include "test_util.hpp"

#ifndef REID3D_TOOL_PATH
#error "REID3D_TOOL_PATH must point at the reid3d binary"
#endif

using namespace reid3d;

namespace {

std::string tool() { return std::string("\"") + REID3D_TOOL_PATH + "\""; }

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

// Generated once, shared by the eval / train cases below.
const std::string& tiny_dataset() {
  static const std::string dir = [] {
    const std::string d = test::tmp_dir("cli_dataset");
    const std::string cmd = tool() +
                            " gen --out \"" + d +
                            "\" --n-train 2 --n-val 1 --n-test 2 --n-models 60"
                            " --descriptor-dim 8 --objects 12 --seed 5 > \"" +
                            d + "/gen.out\" 2> \"" + d + "/gen.err\"";
    REQUIRE(test::run_command(cmd) == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with code 1") {
    CHECK(test::run_command(tool() + " > /dev/null 2>&1") == 1);
    CHECK(test::run_command(tool() + " gen --no-such-flag > /dev/null 2>&1") == 1);
    CHECK(test::run_command(tool() + " match --map-b only.json > /dev/null 2>&1") == 1);
    CHECK(test::run_command(tool() + " train --variant h-l2 > /dev/null 2>&1") == 1);
  }

  TEST_CASE("data errors exit with code 2") {
    const std::string dir = test::tmp_dir("cli_missing");
    CHECK(test::run_command(tool() + " eval --data \"" + dir +
                            "/nowhere\" --variant gtmatch > /dev/null 2>&1") == 2);
    CHECK(test::run_command(tool() + " match --map-a \"" + dir + "/a.json\" --map-b \"" +
                            dir + "/b.json\" --variant h-l2 > /dev/null 2>&1") == 2);
  }

  TEST_CASE("exception kinds map onto the exit-code contract") {
    CHECK(cli::run_guarded([] { return 0; }) == 0);
    CHECK(cli::run_guarded([]() -> int { throw std::invalid_argument("x"); }) == 1);
    CHECK(cli::run_guarded([]() -> int { throw DataError("x"); }) == 2);
    CHECK(cli::run_guarded([]() -> int { throw ParseError("x"); }) == 2);
    CHECK(cli::run_guarded([]() -> int { throw GenerationError("x"); }) == 2);
    CHECK(cli::run_guarded([]() -> int { throw NumericError("x"); }) == 3);
  }

  TEST_CASE("gen writes the dataset, a summary and its resolved config") {
    const std::string& d = tiny_dataset();
    namespace fs = std::filesystem;
    CHECK(episode_sim::list_episode_files(d, "train").size() == 2);
    CHECK(episode_sim::list_episode_files(d, "val").size() == 1);
    CHECK(episode_sim::list_episode_files(d, "test").size() == 2);
    CHECK(fs::exists(d + "/catalog.json"));
    CHECK(fs::exists(d + "/config.json"));

    const std::string out = slurp(d + "/gen.out");
    CHECK(out.find("train 2\n") != std::string::npos);
    CHECK(out.find("val 1\n") != std::string::npos);
    CHECK(out.find("test 2\n") != std::string::npos);
    CHECK(out.find("observed_fraction") != std::string::npos);

    const cli::RunConfig cfg = cli::load_run_config(d + "/config.json");
    CHECK(cfg.seed == 5);
    CHECK(cfg.n_train == 2);
    CHECK(cfg.objects_per_layout == 12);
  }

  TEST_CASE("gen is reproducible for a fixed seed") {
    const std::string d1 = test::tmp_dir("cli_gen_a");
    const std::string d2 = test::tmp_dir("cli_gen_b");
    const std::string tail =
        " --n-train 1 --n-val 0 --n-test 0 --n-models 60 --descriptor-dim 8"
        " --objects 12 --seed 11 > /dev/null 2>&1";
    REQUIRE(test::run_command(tool() + " gen --out \"" + d1 + "\"" + tail) == 0);
    REQUIRE(test::run_command(tool() + " gen --out \"" + d2 + "\"" + tail) == 0);
    CHECK(slurp(d1 + "/catalog.json") == slurp(d2 + "/catalog.json"));
    CHECK(slurp(d1 + "/train/episode_00000.json") == slurp(d2 + "/train/episode_00000.json"));
  }

  TEST_CASE("flags override the config file") {
    const std::string dir = test::tmp_dir("cli_override");
    cli::RunConfig base;
    base.seed = 6;
    base.n_train = 3;
    base.n_val = 1;
    base.n_test = 0;
    base.n_models = 60;
    base.descriptor_dim = 8;
    base.objects_per_layout = 12;
    const std::string cfg_path = dir + "/run.json";
    cli::save_run_config(base, cfg_path);

    REQUIRE(test::run_command(tool() + " gen --config \"" + cfg_path + "\" --out \"" + dir +
                              "/data\" --n-train 1 > /dev/null 2>&1") == 0);
    CHECK(episode_sim::list_episode_files(dir + "/data", "train").size() == 1);  // flag wins
    CHECK(episode_sim::list_episode_files(dir + "/data", "val").size() == 1);    // config value
    CHECK(episode_sim::list_episode_files(dir + "/data", "test").empty());
  }

  TEST_CASE("quiet logging suppresses stderr chatter") {
    const std::string dir = test::tmp_dir("cli_quiet");
    REQUIRE(test::run_command("REID3D_LOG=quiet " + tool() + " gen --out \"" + dir +
                              "/data\" --n-train 1 --n-val 0 --n-test 0 --n-models 60"
                              " --descriptor-dim 8 --objects 12 --seed 3 > /dev/null 2> \"" +
                              dir + "/err\"") == 0);
    CHECK(slurp(dir + "/err").empty());
  }

  TEST_CASE("match pairs a map with itself") {
    const std::string dir = test::tmp_dir("cli_match");
    ObjectMap map;
    map.descriptor_dim = 4;
    Rng rng(2);
    for (int i = 0; i < 3; ++i) {
      ObjectInstance o;
      o.box = BoundingBox3D{{3.0 * i, 0.5, 0.0}, {1.0, 1.0, 1.0}, 0.0};
      o.label = i;
      o.descriptor = episode_sim::random_unit_vector(4, rng);
      map.objects.push_back(o);
    }
    const std::string pa = dir + "/a.json";
    ObjectMap map_b = map;
    map_b.layout_tag = "B";
    const std::string pb = dir + "/b.json";
    save_object_map(map, pa);
    save_object_map(map_b, pb);

    const std::string out_doc = dir + "/result.json";
    const std::string cmd = tool() + " match --map-a \"" + pa + "\" --map-b \"" + pb +
                            "\" --variant h-l2 --out \"" + out_doc + "\" > \"" + dir +
                            "/out\" 2> /dev/null";
    REQUIRE(test::run_command(cmd) == 0);
    const std::string out = slurp(dir + "/out");
    CHECK(out.find("matched 3\n") != std::string::npos);
    CHECK(out.find("unmatched_a 0\n") != std::string::npos);
    CHECK(out.find("unmatched_b 0\n") != std::string::npos);
    CHECK(slurp(out_doc).find("\"matches\"") != std::string::npos);
    CHECK(std::filesystem::exists(out_doc + ".config.json"));

    // Oracle methods cannot run on bare maps.
    CHECK(test::run_command(tool() + " match --map-a \"" + pa + "\" --map-b \"" + pb +
                            "\" --variant gtmatch > /dev/null 2>&1") == 1);
  }

  TEST_CASE("train then eval produces the metrics table") {
    const std::string& data = tiny_dataset();
    const std::string out = test::tmp_dir("cli_train_eval");

    REQUIRE(test::run_command(tool() + " train --data \"" + data + "\" --out \"" + out +
                              "\" --variant h1l --epochs 2 --d-out 8 --seed 7"
                              " > /dev/null 2>&1") == 0);
    CHECK(std::filesystem::exists(out + "/" +
                                  pipeline::checkpoint_filename(pipeline::Method::H1L)));
    CHECK(std::filesystem::exists(out + "/h1l_loss.csv"));
    CHECK(std::filesystem::exists(out + "/train_h1l_config.json"));

    REQUIRE(test::run_command(tool() + " train --data \"" + data + "\" --out \"" + out +
                              "\" --variant 3dsmnet --epochs 1 --d-out 8 --hidden1 8"
                              " --hidden2 4 --sinkhorn-iters 15 --seed 7 > /dev/null 2>&1") ==
            0);

    REQUIRE(test::run_command(tool() + " eval --data \"" + data + "\" --out \"" + out +
                              "\" --variant 3dsmnet --checkpoints \"" + out +
                              "\" --split test > /dev/null 2>&1") == 0);
    const std::string csv = slurp(out + "/metrics.csv");
    CHECK(count_lines(csv) == 7);  // header + 6 groups
    CHECK(csv.rfind("method,group,n,rank1,", 0) == 0);
    CHECK(csv.find("\n3dsmnet,overall,2,") != std::string::npos);
    CHECK(csv.find("3dsmnet,added,") != std::string::npos);
    CHECK(std::filesystem::exists(out + "/eval_config.json"));

    REQUIRE(test::run_command(tool() + " eval --data \"" + data + "\" --out \"" + out +
                              "\" --variant gtmatch --split test > /dev/null 2>&1") == 0);
    const std::string oracle_csv = slurp(out + "/metrics.csv");
    CHECK(oracle_csv.rfind("\ngtmatch,overall,2,100,") != std::string::npos);
  }

  TEST_CASE("bench runs its timing loop") {
    const std::string dir = test::tmp_dir("cli_bench");
    REQUIRE(test::run_command(tool() +
                              " bench --size 6 --reps 1 --descriptor-dim 8 --d-out 8 > \"" +
                              dir + "/out\" 2> /dev/null") == 0);
    const std::string out = slurp(dir + "/out");
    CHECK(out.find("forward_match") != std::string::npos);
    CHECK(out.find("hungarian") != std::string::npos);
  }
}
