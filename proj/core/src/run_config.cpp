#include "reid3d/run_config.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <utility>
#include <vector>

#include "json_util.hpp"
#include "reid3d/errors.hpp"
#include "reid3d/evaluation.hpp"
#include "reid3d/geometry.hpp"
#include "reid3d/pipeline.hpp"
#include "reid3d/rng.hpp"

namespace reid3d::cli {

namespace {

namespace fs = std::filesystem;
using detail::json;
using episode_sim::DetectionNoiseConfig;
using episode_sim::EpisodePair;

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json noise_to_json(const DetectionNoiseConfig& n) {
  json j;
  j["miss_rate"] = n.miss_rate;
  j["fp_rate"] = n.fp_rate;
  j["centroid_sigma"] = n.centroid_sigma;
  j["extent_sigma"] = n.extent_sigma;
  j["yaw_sigma"] = n.yaw_sigma;
  j["label_confusion"] = n.label_confusion;
  j["desc_sigma_base"] = n.desc_sigma_base;
  j["desc_sigma_slope"] = n.desc_sigma_slope;
  j["coverage_saturation"] = n.coverage_saturation;
  j["conf_base"] = n.conf_base;
  j["conf_coverage"] = n.conf_coverage;
  j["conf_sigma"] = n.conf_sigma;
  return j;
}

void noise_from_json(const json& j, DetectionNoiseConfig& n) {
  maybe(j, "miss_rate", n.miss_rate);
  maybe(j, "fp_rate", n.fp_rate);
  maybe(j, "centroid_sigma", n.centroid_sigma);
  maybe(j, "extent_sigma", n.extent_sigma);
  maybe(j, "yaw_sigma", n.yaw_sigma);
  maybe(j, "label_confusion", n.label_confusion);
  maybe(j, "desc_sigma_base", n.desc_sigma_base);
  maybe(j, "desc_sigma_slope", n.desc_sigma_slope);
  maybe(j, "coverage_saturation", n.coverage_saturation);
  maybe(j, "conf_base", n.conf_base);
  maybe(j, "conf_coverage", n.conf_coverage);
  maybe(j, "conf_sigma", n.conf_sigma);
}

std::string format(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

std::string format(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return buf;
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  return format("%.10g", *v);
}

std::string cell2(const std::optional<double>& v) {
  if (!v) return "-";
  return format("%.2f", *v);
}

int log_level() {
  static const int level = [] {
    const char* v = std::getenv("REID3D_LOG");
    if (!v) return 1;
    const std::string s(v);
    if (s == "quiet" || s == "0") return 0;
    if (s == "debug" || s == "2") return 2;
    return 1;
  }();
  return level;
}

std::vector<EpisodePair> load_split(const std::string& dataset_dir, const std::string& split,
                                    int limit) {
  auto files = episode_sim::list_episode_files(dataset_dir, split);
  if (limit > 0 && static_cast<int>(files.size()) > limit)
    files.resize(static_cast<std::size_t>(limit));
  std::vector<EpisodePair> episodes;
  episodes.reserve(files.size());
  for (const auto& f : files) episodes.push_back(episode_sim::load_episode(f));
  return episodes;
}

pipeline::TrainOptions train_options(const RunConfig& cfg) {
  pipeline::TrainOptions opt;
  opt.d_out = cfg.d_out;
  opt.hidden1 = cfg.hidden1;
  opt.hidden2 = cfg.hidden2;
  opt.sinkhorn_iterations = cfg.sinkhorn_iterations;
  opt.tau = cfg.tau;
  opt.match_threshold = cfg.match_threshold;
  opt.matcher.lr = cfg.matcher_lr;
  opt.matcher.batch_size = cfg.matcher_batch;
  opt.matcher.epochs = cfg.matcher_epochs;
  opt.matcher.seed = cfg.seed;
  opt.triplet.lr = cfg.triplet_lr;
  opt.triplet.batch_size = cfg.triplet_batch;
  opt.triplet.epochs = cfg.triplet_epochs;
  opt.triplet.margin = cfg.triplet_margin;
  opt.triplet.seed = cfg.seed;
  opt.iou_threshold = cfg.iou_threshold;
  opt.init_seed = cfg.seed;
  return opt;
}

// Checkpoint path for one method under this config.
std::string checkpoint_path(const RunConfig& cfg, pipeline::Method m, bool single_method) {
  if (single_method && !cfg.checkpoint.empty()) return cfg.checkpoint;
  const std::string dir = cfg.checkpoint_dir.empty() ? cfg.out_dir : cfg.checkpoint_dir;
  return dir + "/" + pipeline::checkpoint_filename(m);
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  const json j = detail::load_json_file(path);
  detail::require_version(j, "reid3d-run/1", path);
  RunConfig cfg;
  try {
    maybe(j, "seed", cfg.seed);
    maybe(j, "threads", cfg.threads);
    maybe(j, "out_dir", cfg.out_dir);
    maybe(j, "dataset_dir", cfg.dataset_dir);
    maybe(j, "checkpoint_dir", cfg.checkpoint_dir);
    maybe(j, "checkpoint", cfg.checkpoint);
    maybe(j, "variant", cfg.variant);
    maybe(j, "split", cfg.split);
    maybe(j, "iou_threshold", cfg.iou_threshold);
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      maybe(d, "n_train", cfg.n_train);
      maybe(d, "n_val", cfg.n_val);
      maybe(d, "n_test", cfg.n_test);
      maybe(d, "n_models", cfg.n_models);
      maybe(d, "descriptor_dim", cfg.descriptor_dim);
      maybe(d, "objects_per_layout", cfg.objects_per_layout);
    }
    if (j.contains("noise")) noise_from_json(j.at("noise"), cfg.noise);
    if (j.contains("matcher")) {
      const json& m = j.at("matcher");
      maybe(m, "d_out", cfg.d_out);
      maybe(m, "hidden1", cfg.hidden1);
      maybe(m, "hidden2", cfg.hidden2);
      maybe(m, "sinkhorn_iterations", cfg.sinkhorn_iterations);
      maybe(m, "tau", cfg.tau);
      maybe(m, "match_threshold", cfg.match_threshold);
      maybe(m, "lr", cfg.matcher_lr);
      maybe(m, "batch_size", cfg.matcher_batch);
      maybe(m, "epochs", cfg.matcher_epochs);
    }
    if (j.contains("triplet")) {
      const json& t = j.at("triplet");
      maybe(t, "lr", cfg.triplet_lr);
      maybe(t, "batch_size", cfg.triplet_batch);
      maybe(t, "epochs", cfg.triplet_epochs);
      maybe(t, "margin", cfg.triplet_margin);
    }
    if (j.contains("limits")) {
      const json& l = j.at("limits");
      maybe(l, "train_episodes", cfg.train_episode_limit);
      maybe(l, "eval_episodes", cfg.eval_episode_limit);
    }
    if (j.contains("bench")) {
      const json& b = j.at("bench");
      maybe(b, "size", cfg.bench_size);
      maybe(b, "reps", cfg.bench_reps);
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  cfg.noise.validate();
  if (cfg.threads < 1) throw DataError(path + ": threads must be >= 1");
  return cfg;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  json j;
  j["version"] = "reid3d-run/1";
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["out_dir"] = cfg.out_dir;
  j["dataset_dir"] = cfg.dataset_dir;
  j["checkpoint_dir"] = cfg.checkpoint_dir;
  j["checkpoint"] = cfg.checkpoint;
  j["variant"] = cfg.variant;
  j["split"] = cfg.split;
  j["iou_threshold"] = cfg.iou_threshold;
  j["dataset"] = {{"n_train", cfg.n_train},
                  {"n_val", cfg.n_val},
                  {"n_test", cfg.n_test},
                  {"n_models", cfg.n_models},
                  {"descriptor_dim", cfg.descriptor_dim},
                  {"objects_per_layout", cfg.objects_per_layout}};
  j["noise"] = noise_to_json(cfg.noise);
  j["matcher"] = {{"d_out", cfg.d_out},
                  {"hidden1", cfg.hidden1},
                  {"hidden2", cfg.hidden2},
                  {"sinkhorn_iterations", cfg.sinkhorn_iterations},
                  {"tau", cfg.tau},
                  {"match_threshold", cfg.match_threshold},
                  {"lr", cfg.matcher_lr},
                  {"batch_size", cfg.matcher_batch},
                  {"epochs", cfg.matcher_epochs}};
  j["triplet"] = {{"lr", cfg.triplet_lr},
                  {"batch_size", cfg.triplet_batch},
                  {"epochs", cfg.triplet_epochs},
                  {"margin", cfg.triplet_margin}};
  j["limits"] = {{"train_episodes", cfg.train_episode_limit},
                 {"eval_episodes", cfg.eval_episode_limit}};
  j["bench"] = {{"size", cfg.bench_size}, {"reps", cfg.bench_reps}};
  detail::save_json_file(j, path);
}

bool log_enabled(int level) { return log_level() >= level; }

void log_info(const std::string& msg) {
  if (log_enabled(1)) std::fprintf(stderr, "[reid3d] %s\n", msg.c_str());
}

void log_debug(const std::string& msg) {
  if (log_enabled(2)) std::fprintf(stderr, "[reid3d] %s\n", msg.c_str());
}

int cmd_gen(const RunConfig& cfg) {
  episode_sim::DatasetConfig dc;
  dc.seed = cfg.seed;
  dc.n_train = cfg.n_train;
  dc.n_val = cfg.n_val;
  dc.n_test = cfg.n_test;
  dc.catalog.n_models = cfg.n_models;
  dc.catalog.descriptor_dim = cfg.descriptor_dim;
  dc.episode.objects_per_layout = cfg.objects_per_layout;
  dc.episode.noise = cfg.noise;
  dc.out_dir = cfg.dataset_dir;
  dc.threads = cfg.threads;
  log_info(format("generating %d/%d/%d episodes into %s", dc.n_train, dc.n_val, dc.n_test,
                  dc.out_dir.c_str()));
  const auto summary = episode_sim::generate_dataset(dc);
  save_run_config(cfg, cfg.dataset_dir + "/config.json");
  std::printf("train %d\nval %d\ntest %d\n", summary.n_train, summary.n_val, summary.n_test);
  std::printf("observed_fraction %.4f\n", summary.mean_observed_fraction);
  std::printf("mean_tour_steps %.1f\n", summary.mean_tour_steps);
  std::printf("gt_pairs_train %lld\n", static_cast<long long>(summary.gt_pairs_train));
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto method = pipeline::method_from_string(cfg.variant);
  if (!pipeline::is_trainable(method))
    throw std::invalid_argument(cfg.variant + " has nothing to train");
  log_info("loading train/val splits from " + cfg.dataset_dir);
  const auto train = load_split(cfg.dataset_dir, "train", cfg.train_episode_limit);
  const auto val = load_split(cfg.dataset_dir, "val", cfg.train_episode_limit);
  if (train.empty()) throw DataError("no training episodes under " + cfg.dataset_dir);
  log_info(format("training %s on %zu episodes", cfg.variant.c_str(), train.size()));
  const auto trained = pipeline::train_method(method, train, val, train_options(cfg));
  fs::create_directories(cfg.out_dir);
  const std::string ckpt = cfg.out_dir + "/" + pipeline::checkpoint_filename(method);
  pipeline::save_artifacts(method, trained.artifacts, ckpt);
  learning::save_loss_curve(trained.curve, cfg.out_dir + "/" + cfg.variant + "_loss.csv");
  save_run_config(cfg, cfg.out_dir + "/train_" + cfg.variant + "_config.json");
  if (!trained.curve.empty()) {
    const auto& last = trained.curve.back();
    if (std::isnan(last.val_accuracy))
      std::printf("final_loss %.6f\n", last.mean_loss);
    else
      std::printf("final_loss %.6f\nval_accuracy %.2f\n", last.mean_loss, last.val_accuracy);
  }
  std::printf("checkpoint %s\n", ckpt.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  std::vector<pipeline::Method> methods;
  if (cfg.variant == "all")
    methods = pipeline::all_methods();
  else
    methods.push_back(pipeline::method_from_string(cfg.variant));
  const auto episodes = load_split(cfg.dataset_dir, cfg.split, cfg.eval_episode_limit);
  if (episodes.empty())
    throw DataError("no episodes in split '" + cfg.split + "' under " + cfg.dataset_dir);
  fs::create_directories(cfg.out_dir);

  std::string csv =
      "method,group,n,rank1,rank1_se,rank5,rank5_se,map,map_se,acc,acc_se,"
      "tuple_acc,tuple_acc_se,tuple_prec,tuple_prec_se,tuple_rec,tuple_rec_se,"
      "dustbin_mean,dustbin_std\n";
  for (const auto m : methods) {
    pipeline::MethodArtifacts artifacts;
    if (pipeline::is_trainable(pipeline::artifact_method(m))) {
      const std::string path = checkpoint_path(cfg, m, methods.size() == 1);
      log_info(format("loading %s checkpoint from %s", pipeline::to_string(m), path.c_str()));
      artifacts = pipeline::load_artifacts(m, path);
    }
    log_info(format("evaluating %s on %zu episodes", pipeline::to_string(m), episodes.size()));
    const auto ev =
        pipeline::evaluate_method(m, artifacts, episodes, cfg.noise, cfg.iou_threshold);
    for (const auto& g : ev.groups) {
      csv += format("%s,%s,%d,", pipeline::to_string(m), g.group.c_str(), ev.n_episodes);
      csv += cell(g.rank1.mean) + "," + cell(g.rank1.se) + ",";
      csv += cell(g.rank5.mean) + "," + cell(g.rank5.se) + ",";
      csv += cell(g.reid_map.mean) + "," + cell(g.reid_map.se) + ",";
      csv += cell(g.accuracy.mean) + "," + cell(g.accuracy.se) + ",";
      csv += cell(g.tuple_accuracy.mean) + "," + cell(g.tuple_accuracy.se) + ",";
      csv += cell(g.tuple_precision.mean) + "," + cell(g.tuple_precision.se) + ",";
      csv += cell(g.tuple_recall.mean) + "," + cell(g.tuple_recall.se) + ",";
      if (g.group == "overall") {
        csv += cell(ev.dustbin_mean) + "," + cell(ev.dustbin_std);
      } else {
        csv += ",";
      }
      csv += "\n";
    }
    const auto& overall = ev.group("overall");
    std::printf("%-14s rank1 %6s  rank5 %6s  mAP %6s  acc %6s +- %s\n", pipeline::to_string(m),
                cell2(overall.rank1.mean).c_str(), cell2(overall.rank5.mean).c_str(),
                cell2(overall.reid_map.mean).c_str(), cell2(overall.accuracy.mean).c_str(),
                cell2(overall.accuracy.se).c_str());
  }

  const std::string csv_path = cfg.out_dir + "/metrics.csv";
  detail::save_text_file(csv, csv_path);
  save_run_config(cfg, cfg.out_dir + "/eval_config.json");
  std::printf("metrics %s\n", csv_path.c_str());
  return 0;
}

int cmd_match(const RunConfig& cfg, const std::string& map_a_path,
              const std::string& map_b_path, const std::string& out_path) {
  const auto method = pipeline::method_from_string(cfg.variant);
  if (method == pipeline::Method::GTMatch || method == pipeline::Method::GTBox)
    throw std::invalid_argument("oracle methods need episode ground truth, not bare maps");
  EpisodePair ep;
  ep.map_a = load_object_map(map_a_path);
  ep.map_b = load_object_map(map_b_path);
  if (ep.map_a.descriptor_dim != ep.map_b.descriptor_dim)
    throw DataError(format("descriptor dimension mismatch: %s has %d, %s has %d",
                           map_a_path.c_str(), ep.map_a.descriptor_dim, map_b_path.c_str(),
                           ep.map_b.descriptor_dim));
  pipeline::MethodArtifacts artifacts;
  if (pipeline::is_trainable(method)) {
    const std::string path = checkpoint_path(cfg, method, true);
    artifacts = pipeline::load_artifacts(method, path);
    const bool sinkhorn = method == pipeline::Method::SinkhornFixed ||
                          method == pipeline::Method::SMNet;
    const int expected =
        sinkhorn ? artifacts.params.descriptor_dim : artifacts.projection.input_dim();
    if (expected != ep.map_a.descriptor_dim)
      throw DataError(format("checkpoint %s expects descriptor_dim %d, maps carry %d",
                             path.c_str(), expected, ep.map_a.descriptor_dim));
  }
  const auto run = pipeline::run_episode(method, artifacts, ep, cfg.iou_threshold);
  matcher::save_match_result(run.result, out_path);
  save_run_config(cfg, out_path + ".config.json");
  std::printf("matched %zu\nunmatched_a %zu\nunmatched_b %zu\n", run.result.matches.size(),
              run.result.unmatched_a.size(), run.result.unmatched_b.size());
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  const int m = std::max(1, cfg.bench_size);
  const int d = std::max(2, cfg.descriptor_dim);
  const int reps = std::max(1, cfg.bench_reps);
  Rng rng(Rng::derive(cfg.seed, 0x62656e63));
  Eigen::MatrixXd FA(m, d), FB(m, d);
  for (int i = 0; i < m; ++i) {
    FA.row(i) = episode_sim::random_unit_vector(d, rng).transpose();
    FB.row(i) = episode_sim::random_unit_vector(d, rng).transpose();
  }
  auto params = matcher::MatcherParams::init(d, cfg.d_out, cfg.hidden1, cfg.hidden2,
                                             matcher::DustbinVariant::Adaptive, cfg.seed);
  params.sinkhorn_iterations = cfg.sinkhorn_iterations;
  params.tau = cfg.tau;

  learning::SupervisedEpisode sup;
  sup.FA = FA;
  sup.FB = FB;
  for (int i = 0; i < m; ++i) sup.matches.emplace_back(i, i);

  Eigen::MatrixXd cost(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) cost(i, j) = rng.uniform();

  const auto time_op = [&](const char* name, const std::function<void()>& op) {
    const auto start = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) op();
    const auto stop = std::chrono::steady_clock::now();
    const double ms =
        std::chrono::duration<double, std::milli>(stop - start).count() / reps;
    std::printf("%-24s %6d reps  %10.3f ms/op\n", name, reps, ms);
  };

  time_op("forward_match", [&] { matcher::forward_match(params, FA, FB); });
  time_op("episode_gradient", [&] { learning::episode_gradient(params, sup); });
  time_op("hungarian", [&] { matcher::hungarian(cost); });
  time_op("box_iou_3d x1000", [&] {
    BoundingBox3D a, b;
    double acc = 0.0;
    for (int k = 0; k < 1000; ++k) {
      a.centroid = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
      a.extents = Eigen::Vector3d(0.5 + rng.uniform(), 0.5 + rng.uniform(), 0.5 + rng.uniform());
      a.yaw = rng.uniform(-3.0, 3.0);
      b.centroid = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
      b.extents = Eigen::Vector3d(0.5 + rng.uniform(), 0.5 + rng.uniform(), 0.5 + rng.uniform());
      b.yaw = rng.uniform(-3.0, 3.0);
      acc += geometry::box_iou_3d(a, b);
    }
    if (acc < 0.0) std::printf("impossible\n");  // keep the loop observable
  });
  return 0;
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const GenerationError& e) {
    std::fprintf(stderr, "generation error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

}  // namespace reid3d::cli
