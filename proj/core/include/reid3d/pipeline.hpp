#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reid3d/episode_sim.hpp"
#include "reid3d/evaluation.hpp"
#include "reid3d/learning.hpp"
#include "reid3d/matcher.hpp"

namespace reid3d::pipeline {

// Matching methods in table row order. GTMatch and GTBox are oracles;
// GTBox runs the trained SMNet matcher on ground-truth boxes.
enum class Method { HL2, HM, H1L, H2L, H3L, SinkhornFixed, SMNet, GTMatch, GTBox };

const char* to_string(Method m);
Method method_from_string(const std::string& name);  // throws invalid_argument
const std::vector<Method>& all_methods();

bool is_trainable(Method m);
// Method whose checkpoint this method evaluates with (GTBox -> SMNet,
// identity elsewhere).
Method artifact_method(Method m);
// Suggested checkpoint file name inside a training output directory.
std::string checkpoint_filename(Method m);

// Trained state. Only the member matching the method is meaningful:
// params for SinkhornFixed / SMNet / GTBox, projection for H1L..H3L.
struct MethodArtifacts {
  matcher::MatcherParams params;
  Mlp projection;
};

// Supervision in detection space: descriptor rows from the maps, the
// partition from IoU id assignment against the ground-truth maps. A
// detection whose partner went undetected counts as unmatched.
learning::SupervisedEpisode build_supervision(
    const episode_sim::EpisodePair& episode,
    double iou_threshold = evaluation::kDefaultIouThreshold);

struct TrainOptions {
  int d_out = 256;
  int hidden1 = 256, hidden2 = 64;
  int sinkhorn_iterations = 100;
  double tau = 1.0;
  double match_threshold = 0.2;
  learning::TrainConfig matcher;          // NLL variants
  learning::TripletTrainConfig triplet;   // projection baselines
  double iou_threshold = evaluation::kDefaultIouThreshold;
  std::uint64_t init_seed = 7;
};

struct TrainedMethod {
  MethodArtifacts artifacts;
  std::vector<learning::LossCurvePoint> curve;
};

// Throws invalid_argument for methods without trainable parameters.
TrainedMethod train_method(Method m, const std::vector<episode_sim::EpisodePair>& train,
                           const std::vector<episode_sim::EpisodePair>& val,
                           const TrainOptions& opt);

void save_artifacts(Method m, const MethodArtifacts& artifacts, const std::string& path);
MethodArtifacts load_artifacts(Method m, const std::string& path);

// GTBox swaps in the ground-truth-box oracle maps; other methods
// evaluate the episode as stored.
episode_sim::EpisodePair prepare_episode(Method m, const episode_sim::EpisodePair& episode,
                                         const episode_sim::DetectionNoiseConfig& noise);

struct EpisodeRun {
  Eigen::MatrixXd scores;  // m_A x m_B ranking scores
  matcher::MatchResult result;
  std::optional<double> mean_dustbin;  // Sinkhorn variants only
};

// episode must already be prepared for this method. The IoU threshold
// only matters for GTMatch, whose oracle reads the id assignment.
EpisodeRun run_episode(Method m, const MethodArtifacts& artifacts,
                       const episode_sim::EpisodePair& episode,
                       double iou_threshold = evaluation::kDefaultIouThreshold);

// Aggregates for one metric group: "overall" carries every column,
// "unchanged" / "moved" the rank metrics plus accuracy, and "added" /
// "removed" / "fp" accuracy alone.
struct GroupAggregate {
  std::string group;
  evaluation::AggregateMetric rank1, rank5, reid_map, accuracy;
  evaluation::AggregateMetric tuple_accuracy, tuple_precision, tuple_recall;
};

struct MethodEvaluation {
  Method method = Method::HL2;
  int n_episodes = 0;
  std::vector<evaluation::EpisodeMetrics> per_episode;
  std::vector<std::optional<double>> dustbin_means;  // per episode
  std::optional<double> dustbin_mean, dustbin_std;   // over defined entries
  std::vector<GroupAggregate> groups;

  const GroupAggregate& group(const std::string& name) const;  // throws invalid_argument
};

MethodEvaluation evaluate_method(Method m, const MethodArtifacts& artifacts,
                                 const std::vector<episode_sim::EpisodePair>& episodes,
                                 const episode_sim::DetectionNoiseConfig& noise,
                                 double iou_threshold = evaluation::kDefaultIouThreshold,
                                 std::uint64_t bootstrap_seed = 42);

// Paired per-episode difference x - y of overall matching accuracy,
// with its own bootstrap SE. Both evaluations must cover the same
// episode list.
struct PairedDiff {
  double mean_diff = 0.0;
  std::optional<double> se;
  int n = 0;
};

PairedDiff paired_accuracy_diff(const MethodEvaluation& x, const MethodEvaluation& y);

}  // namespace reid3d::pipeline
