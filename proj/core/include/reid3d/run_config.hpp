#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "reid3d/episode_sim.hpp"
#include "reid3d/learning.hpp"

namespace reid3d::cli {

// Every knob of every subcommand, serializable as reid3d-run/1. Each
// command writes the resolved config next to its outputs so a run can
// be reproduced from disk alone.
struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = "out";
  std::string dataset_dir = "dataset";
  std::string checkpoint_dir;  // empty: use out_dir
  std::string checkpoint;      // empty: checkpoint_dir + conventional name
  std::string variant = "3dsmnet";  // method name, or "all" for eval
  std::string split = "test";

  int n_train = 461, n_val = 65, n_test = 126;
  int n_models = 632;
  int descriptor_dim = 256;
  int objects_per_layout = 30;
  episode_sim::DetectionNoiseConfig noise;

  int d_out = 256, hidden1 = 256, hidden2 = 64;
  int sinkhorn_iterations = 100;
  double tau = 1.0;
  double match_threshold = 0.2;
  double matcher_lr = 5e-3;
  int matcher_batch = 8, matcher_epochs = 30;
  double triplet_lr = 1.5e-2;
  int triplet_batch = 64, triplet_epochs = 50;
  double triplet_margin = 1.0;
  double iou_threshold = 0.25;

  int train_episode_limit = 0;  // 0: use the whole split
  int eval_episode_limit = 0;
  int bench_size = 30, bench_reps = 20;
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

// REID3D_LOG = quiet | info | debug (default info). Messages go to
// stderr; command results go to stdout.
bool log_enabled(int level);  // 1 info, 2 debug
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

// Subcommand bodies. Throw on failure; exit codes are produced by
// run_guarded.
int cmd_gen(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_match(const RunConfig& cfg, const std::string& map_a_path,
              const std::string& map_b_path, const std::string& out_path);
int cmd_bench(const RunConfig& cfg);

// Maps exceptions onto the exit-code contract: 0 success, 1 usage
// error (std::invalid_argument), 2 data/generation error, 3 numeric
// error. Messages go to stderr.
int run_guarded(const std::function<int()>& body);

}  // namespace reid3d::cli
