#include <cstdint>
#include <functional>
#include <string>

#include "CLI11.hpp"
#include "reid3d/run_config.hpp"

namespace {

using reid3d::cli::RunConfig;

// A flag that overrides its RunConfig field only when the user set it,
// so config-file values survive unless explicitly overridden.
template <typename T>
struct Flag {
  CLI::Option* opt = nullptr;
  T value{};

  CLI::Option* add(CLI::App& cmd, const std::string& name, const std::string& help) {
    opt = cmd.add_option(name, value, help);
    return opt;
  }
  void apply(T& dst) const {
    if (opt != nullptr && opt->count() > 0) dst = value;
  }
};

struct CommonFlags {
  Flag<std::string> config;
  Flag<std::uint64_t> seed;
  Flag<int> threads;

  void add(CLI::App& cmd) {
    config.add(cmd, "--config", "Run configuration JSON (flags override it)");
    seed.add(cmd, "--seed", "Master seed");
    threads.add(cmd, "--threads", "Worker threads; 1 keeps outputs bit-deterministic");
  }

  RunConfig build() const {
    RunConfig cfg;
    if (config.opt->count() > 0) cfg = reid3d::cli::load_run_config(config.value);
    seed.apply(cfg.seed);
    threads.apply(cfg.threads);
    return cfg;
  }
};

struct GenCmd {
  CommonFlags common;
  Flag<std::string> out;
  Flag<int> n_train, n_val, n_test, n_models, descriptor_dim, objects;

  void add(CLI::App& cmd) {
    common.add(cmd);
    out.add(cmd, "--out", "Dataset output directory");
    n_train.add(cmd, "--n-train", "Training episodes");
    n_val.add(cmd, "--n-val", "Validation episodes");
    n_test.add(cmd, "--n-test", "Test episodes");
    n_models.add(cmd, "--n-models", "Catalog size");
    descriptor_dim.add(cmd, "--descriptor-dim", "Descriptor dimensionality");
    objects.add(cmd, "--objects", "Objects per layout");
  }

  int run() const {
    RunConfig cfg = common.build();
    out.apply(cfg.dataset_dir);
    n_train.apply(cfg.n_train);
    n_val.apply(cfg.n_val);
    n_test.apply(cfg.n_test);
    n_models.apply(cfg.n_models);
    descriptor_dim.apply(cfg.descriptor_dim);
    objects.apply(cfg.objects_per_layout);
    return reid3d::cli::cmd_gen(cfg);
  }
};

struct TrainCmd {
  CommonFlags common;
  Flag<std::string> data, out, variant;
  Flag<int> epochs, batch_size, d_out, hidden1, hidden2, train_limit, sinkhorn_iters;
  Flag<double> lr, tau;

  void add(CLI::App& cmd) {
    common.add(cmd);
    data.add(cmd, "--data", "Dataset directory");
    out.add(cmd, "--out", "Output directory for checkpoint and loss curve");
    variant.add(cmd, "--variant",
                "Method: h1l, h2l, h3l, sinkhorn-fixed or 3dsmnet");
    epochs.add(cmd, "--epochs", "Training epochs");
    batch_size.add(cmd, "--batch-size", "Mini-batch size");
    lr.add(cmd, "--lr", "Learning rate");
    d_out.add(cmd, "--d-out", "Projected descriptor dimension");
    hidden1.add(cmd, "--hidden1", "First hidden width of the dustbin MLPs");
    hidden2.add(cmd, "--hidden2", "Second hidden width of the dustbin MLPs");
    train_limit.add(cmd, "--train-limit", "Cap on episodes per split (0 = all)");
    sinkhorn_iters.add(cmd, "--sinkhorn-iters", "Sinkhorn iterations");
    tau.add(cmd, "--tau", "Sinkhorn temperature");
  }

  int run() const {
    RunConfig cfg = common.build();
    data.apply(cfg.dataset_dir);
    out.apply(cfg.out_dir);
    variant.apply(cfg.variant);
    d_out.apply(cfg.d_out);
    hidden1.apply(cfg.hidden1);
    hidden2.apply(cfg.hidden2);
    train_limit.apply(cfg.train_episode_limit);
    sinkhorn_iters.apply(cfg.sinkhorn_iterations);
    tau.apply(cfg.tau);
    const bool triplet = cfg.variant == "h1l" || cfg.variant == "h2l" || cfg.variant == "h3l";
    epochs.apply(triplet ? cfg.triplet_epochs : cfg.matcher_epochs);
    batch_size.apply(triplet ? cfg.triplet_batch : cfg.matcher_batch);
    lr.apply(triplet ? cfg.triplet_lr : cfg.matcher_lr);
    return reid3d::cli::cmd_train(cfg);
  }
};

struct EvalCmd {
  CommonFlags common;
  Flag<std::string> data, out, variant, checkpoints, checkpoint, split;
  Flag<int> eval_limit;
  Flag<double> iou_threshold;

  void add(CLI::App& cmd) {
    common.add(cmd);
    data.add(cmd, "--data", "Dataset directory");
    out.add(cmd, "--out", "Output directory for metrics.csv");
    variant.add(cmd, "--variant", "Method name, or 'all'");
    checkpoints.add(cmd, "--checkpoints", "Directory holding trained checkpoints");
    checkpoint.add(cmd, "--checkpoint", "Explicit checkpoint file (single method only)");
    split.add(cmd, "--split", "Dataset split: train, val or test");
    eval_limit.add(cmd, "--eval-limit", "Cap on evaluated episodes (0 = all)");
    iou_threshold.add(cmd, "--iou-threshold", "Detection-to-GT IoU threshold");
  }

  int run() const {
    RunConfig cfg = common.build();
    data.apply(cfg.dataset_dir);
    out.apply(cfg.out_dir);
    variant.apply(cfg.variant);
    checkpoints.apply(cfg.checkpoint_dir);
    checkpoint.apply(cfg.checkpoint);
    split.apply(cfg.split);
    eval_limit.apply(cfg.eval_episode_limit);
    iou_threshold.apply(cfg.iou_threshold);
    return reid3d::cli::cmd_eval(cfg);
  }
};

struct MatchCmd {
  CommonFlags common;
  Flag<std::string> variant, checkpoint;
  Flag<double> threshold;
  std::string map_a, map_b;
  std::string out = "match.json";

  void add(CLI::App& cmd) {
    common.add(cmd);
    cmd.add_option("--map-a", map_a, "First object map")->required();
    cmd.add_option("--map-b", map_b, "Second object map")->required();
    variant.add(cmd, "--variant", "Method name (oracles excluded)");
    checkpoint.add(cmd, "--checkpoint", "Checkpoint file for trained methods");
    threshold.add(cmd, "--threshold", "Match probability threshold");
    cmd.add_option("--out", out, "Result file");
  }

  int run() const {
    RunConfig cfg = common.build();
    variant.apply(cfg.variant);
    checkpoint.apply(cfg.checkpoint);
    threshold.apply(cfg.match_threshold);
    return reid3d::cli::cmd_match(cfg, map_a, map_b, out);
  }
};

struct BenchCmd {
  CommonFlags common;
  Flag<int> size, reps, descriptor_dim, d_out;

  void add(CLI::App& cmd) {
    common.add(cmd);
    size.add(cmd, "--size", "Objects per synthetic map");
    reps.add(cmd, "--reps", "Repetitions per operation");
    descriptor_dim.add(cmd, "--descriptor-dim", "Descriptor dimensionality");
    d_out.add(cmd, "--d-out", "Projected descriptor dimension");
  }

  int run() const {
    RunConfig cfg = common.build();
    size.apply(cfg.bench_size);
    reps.apply(cfg.bench_reps);
    descriptor_dim.apply(cfg.descriptor_dim);
    d_out.apply(cfg.d_out);
    return reid3d::cli::cmd_bench(cfg);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D multi-object re-identification over episodic scene maps"};
  app.require_subcommand(1);

  GenCmd gen;
  TrainCmd train;
  EvalCmd eval;
  MatchCmd match;
  BenchCmd bench;
  gen.add(*app.add_subcommand("gen", "Generate an episode dataset"));
  train.add(*app.add_subcommand("train", "Train a matching method"));
  eval.add(*app.add_subcommand("eval", "Evaluate methods and emit metrics.csv"));
  match.add(*app.add_subcommand("match", "Match two object map files"));
  bench.add(*app.add_subcommand("bench", "Time the core operations"));

  std::function<int()> runner;
  app.get_subcommand("gen")->callback([&] { runner = [&] { return gen.run(); }; });
  app.get_subcommand("train")->callback([&] { runner = [&] { return train.run(); }; });
  app.get_subcommand("eval")->callback([&] { runner = [&] { return eval.run(); }; });
  app.get_subcommand("match")->callback([&] { runner = [&] { return match.run(); }; });
  app.get_subcommand("bench")->callback([&] { runner = [&] { return bench.run(); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  return reid3d::cli::run_guarded(runner);
}
