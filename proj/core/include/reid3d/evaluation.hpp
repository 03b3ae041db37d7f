#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "reid3d/episode_sim.hpp"
#include "reid3d/matcher.hpp"
#include "reid3d/object_map.hpp"

namespace reid3d::evaluation {

inline constexpr double kDefaultIouThreshold = 0.25;

// Detection-to-ground-truth correspondence: greedy highest-IoU-first
// one-to-one assignment, ties broken toward lower indices, pairs below
// the threshold dropped.
struct IdAssignment {
  std::vector<int> gt_of_det;  // per detection: gt object index or -1
  std::vector<int> det_of_gt;  // per gt object: detection index or -1
  std::vector<std::optional<std::int64_t>> id_of_det;  // gt instance id
};

IdAssignment assign_gt_ids(const ObjectMap& detections, const ObjectMap& gt,
                           double iou_threshold = kDefaultIouThreshold);

// One re-ID query: an A detection whose ground-truth partner is detected
// in B. The gallery is every B detection.
struct RankList {
  int query = 0;         // detection index in A
  int target = 0;        // correct detection index in B
  int position = 0;      // 1-based: 1 + count of strictly better scores
  int gallery_size = 0;
  episode_sim::Supercategory supercat = episode_sim::Supercategory::Unchanged;
};

std::vector<RankList> build_rank_lists(const Eigen::MatrixXd& scores,
                                       const episode_sim::EpisodePair& episode,
                                       const IdAssignment& ids_a,
                                       const IdAssignment& ids_b);

// Percent of queries ranked in the top k; null on an empty query set.
std::optional<double> cmc(const std::vector<RankList>& lists, int k);
// Single-positive mAP: mean of 1/position, percent; null as cmc.
std::optional<double> reid_map(const std::vector<RankList>& lists);

struct MatchingAccuracy {
  int correct = 0, total = 0;
  void add(bool ok) {
    correct += ok ? 1 : 0;
    ++total;
  }
  std::optional<double> percent() const;
};

// B-side accuracy with its supercategory slices. A detection counts
// correct when matched to the detection of its partner object, or left
// unmatched when no such detection exists (added object, false-positive
// detection, or partner missed in A). fp covers detections without a
// ground-truth assignment; removed is the A-side slice (correct when
// unmatched). overall = unchanged + moved + added + fp exactly.
struct AccuracyBreakdown {
  MatchingAccuracy overall, unchanged, moved, added, fp, removed;
};

AccuracyBreakdown matching_accuracy(const matcher::MatchResult& result,
                                    const episode_sim::EpisodePair& episode,
                                    const IdAssignment& ids_a, const IdAssignment& ids_b);

// Joint detection + re-ID tuples in ground-truth id space. A matched
// pair with a null id on either side is an immediate FP; unmatched
// detections with null ids contribute nothing.
struct TupleCounts {
  int tp = 0, fp = 0, fn = 0;
  bool zero_predictions = false;
  double precision() const;  // percent; 0 when nothing was predicted
  double recall() const;
  double accuracy() const;  // tp / (tp + fp + fn)
};

TupleCounts tuple_metrics(const matcher::MatchResult& result,
                          const episode_sim::EpisodePair& episode,
                          const IdAssignment& ids_a, const IdAssignment& ids_b);

// Everything above for one episode and one method's scores + matches.
struct EpisodeMetrics {
  std::optional<double> rank1, rank5, reid_map;  // percent
  AccuracyBreakdown accuracy;
  TupleCounts tuples;
  std::optional<double> rank1_unchanged, rank5_unchanged, map_unchanged;
  std::optional<double> rank1_moved, rank5_moved, map_moved;
};

EpisodeMetrics evaluate_episode(const Eigen::MatrixXd& scores,
                                const matcher::MatchResult& result,
                                const episode_sim::EpisodePair& episode,
                                double iou_threshold = kDefaultIouThreshold);

// Perfect matcher over detections: pairs sharing a ground-truth id are
// matched, everything else is unmatched; scores are the 0/1 indicator.
struct OracleMatch {
  Eigen::MatrixXd scores;
  matcher::MatchResult result;
};

OracleMatch oracle_gtmatch(const IdAssignment& ids_a, const IdAssignment& ids_b);

// Percentile bootstrap standard error of the mean; null with fewer than
// two samples. Deterministic per seed.
std::optional<double> bootstrap_se(const std::vector<double>& samples,
                                   int n_resamples = 1000, std::uint64_t seed = 42);

// Mean over the defined entries plus its bootstrap SE.
struct AggregateMetric {
  std::optional<double> mean, se;
  int n = 0;
};

AggregateMetric aggregate_metric(const std::vector<std::optional<double>>& values,
                                 int n_resamples = 1000, std::uint64_t seed = 42);

// Detector quality from an id assignment: assigned detections are TP,
// the rest FP, undetected ground-truth objects FN.
struct DetectionPR {
  int tp = 0, fp = 0, fn = 0;
  double precision() const;  // percent
  double recall() const;
};

DetectionPR detection_pr(const IdAssignment& ids);

}  // namespace reid3d::evaluation
