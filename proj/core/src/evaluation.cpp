#include "reid3d/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "reid3d/geometry.hpp"
#include "reid3d/rng.hpp"

namespace reid3d::evaluation {

namespace {

using episode_sim::EpisodePair;
using episode_sim::Supercategory;

// Matched counterpart per detection, -1 when unmatched.
struct MatchLookup {
  std::vector<int> a_to_b, b_to_a;
  MatchLookup(const matcher::MatchResult& r, int m_a, int m_b)
      : a_to_b(static_cast<std::size_t>(m_a), -1),
        b_to_a(static_cast<std::size_t>(m_b), -1) {
    for (const auto& [i, j] : r.matches) {
      a_to_b[static_cast<std::size_t>(i)] = j;
      b_to_a[static_cast<std::size_t>(j)] = i;
    }
  }
};

// Ground-truth partner indices in gt-object space, -1 when absent.
struct PartnerLookup {
  std::vector<int> b_of_a, a_of_b;
  PartnerLookup(const EpisodePair& ep)
      : b_of_a(ep.gt_a.objects.size(), -1), a_of_b(ep.gt_b.objects.size(), -1) {
    for (const auto& [a, b] : ep.gt.matches) {
      b_of_a[static_cast<std::size_t>(a)] = b;
      a_of_b[static_cast<std::size_t>(b)] = a;
    }
  }
};

}  // namespace

IdAssignment assign_gt_ids(const ObjectMap& detections, const ObjectMap& gt,
                           double iou_threshold) {
  const int n_det = static_cast<int>(detections.objects.size());
  const int n_gt = static_cast<int>(gt.objects.size());
  IdAssignment out;
  out.gt_of_det.assign(static_cast<std::size_t>(n_det), -1);
  out.det_of_gt.assign(static_cast<std::size_t>(n_gt), -1);
  out.id_of_det.assign(static_cast<std::size_t>(n_det), std::nullopt);

  struct Pair {
    double iou;
    int det, gt;
  };
  std::vector<Pair> pairs;
  for (int d = 0; d < n_det; ++d)
    for (int g = 0; g < n_gt; ++g) {
      const double iou = geometry::box_iou_3d(detections.objects[static_cast<std::size_t>(d)].box,
                                              gt.objects[static_cast<std::size_t>(g)].box);
      if (iou >= iou_threshold) pairs.push_back({iou, d, g});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    return std::tie(y.iou, x.det, x.gt) < std::tie(x.iou, y.det, y.gt);
  });
  for (const auto& p : pairs) {
    if (out.gt_of_det[static_cast<std::size_t>(p.det)] != -1 ||
        out.det_of_gt[static_cast<std::size_t>(p.gt)] != -1)
      continue;
    out.gt_of_det[static_cast<std::size_t>(p.det)] = p.gt;
    out.det_of_gt[static_cast<std::size_t>(p.gt)] = p.det;
    out.id_of_det[static_cast<std::size_t>(p.det)] =
        gt.objects[static_cast<std::size_t>(p.gt)].instance_id;
  }
  return out;
}

std::vector<RankList> build_rank_lists(const Eigen::MatrixXd& scores,
                                       const episode_sim::EpisodePair& episode,
                                       const IdAssignment& ids_a,
                                       const IdAssignment& ids_b) {
  const PartnerLookup partner(episode);
  const int m_a = static_cast<int>(scores.rows());
  const int m_b = static_cast<int>(scores.cols());
  std::vector<RankList> lists;
  for (int i = 0; i < m_a; ++i) {
    const int g_a = ids_a.gt_of_det[static_cast<std::size_t>(i)];
    if (g_a < 0) continue;
    const int g_b = partner.b_of_a[static_cast<std::size_t>(g_a)];
    if (g_b < 0) continue;
    const int target = ids_b.det_of_gt[static_cast<std::size_t>(g_b)];
    if (target < 0) continue;
    RankList rl;
    rl.query = i;
    rl.target = target;
    rl.gallery_size = m_b;
    const double ref = scores(i, target);
    int better = 0;
    for (int j = 0; j < m_b; ++j)
      if (scores(i, j) > ref) ++better;
    rl.position = 1 + better;
    rl.supercat = episode.gt.supercat_a[static_cast<std::size_t>(g_a)];
    lists.push_back(rl);
  }
  return lists;
}

std::optional<double> cmc(const std::vector<RankList>& lists, int k) {
  if (lists.empty()) return std::nullopt;
  int hits = 0;
  for (const auto& rl : lists)
    if (rl.position <= k) ++hits;
  return 100.0 * hits / static_cast<double>(lists.size());
}

std::optional<double> reid_map(const std::vector<RankList>& lists) {
  if (lists.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& rl : lists) sum += 1.0 / rl.position;
  return 100.0 * sum / static_cast<double>(lists.size());
}

std::optional<double> MatchingAccuracy::percent() const {
  if (total == 0) return std::nullopt;
  return 100.0 * correct / static_cast<double>(total);
}

AccuracyBreakdown matching_accuracy(const matcher::MatchResult& result,
                                    const episode_sim::EpisodePair& episode,
                                    const IdAssignment& ids_a, const IdAssignment& ids_b) {
  const int m_a = static_cast<int>(episode.map_a.objects.size());
  const int m_b = static_cast<int>(episode.map_b.objects.size());
  const MatchLookup matched(result, m_a, m_b);
  const PartnerLookup partner(episode);
  AccuracyBreakdown out;
  for (int j = 0; j < m_b; ++j) {
    const int g_b = ids_b.gt_of_det[static_cast<std::size_t>(j)];
    const int got = matched.b_to_a[static_cast<std::size_t>(j)];
    bool ok = false;
    MatchingAccuracy* slice = nullptr;
    if (g_b < 0) {
      ok = got == -1;
      slice = &out.fp;
    } else {
      const Supercategory sc = episode.gt.supercat_b[static_cast<std::size_t>(g_b)];
      if (sc == Supercategory::Added) {
        ok = got == -1;
        slice = &out.added;
      } else {
        const int g_a = partner.a_of_b[static_cast<std::size_t>(g_b)];
        const int want = g_a < 0 ? -1 : ids_a.det_of_gt[static_cast<std::size_t>(g_a)];
        ok = got == want;
        slice = sc == Supercategory::Moved ? &out.moved : &out.unchanged;
      }
    }
    out.overall.add(ok);
    slice->add(ok);
  }
  for (int i = 0; i < m_a; ++i) {
    const int g_a = ids_a.gt_of_det[static_cast<std::size_t>(i)];
    if (g_a < 0) continue;
    if (episode.gt.supercat_a[static_cast<std::size_t>(g_a)] != Supercategory::Removed)
      continue;
    out.removed.add(matched.a_to_b[static_cast<std::size_t>(i)] == -1);
  }
  return out;
}

double TupleCounts::precision() const {
  if (tp + fp == 0) return fn > 0 ? 0.0 : 100.0;
  return 100.0 * tp / static_cast<double>(tp + fp);
}

double TupleCounts::recall() const {
  if (tp + fn == 0) return 100.0;
  return 100.0 * tp / static_cast<double>(tp + fn);
}

double TupleCounts::accuracy() const {
  if (tp + fp + fn == 0) return 100.0;
  return 100.0 * tp / static_cast<double>(tp + fp + fn);
}

TupleCounts tuple_metrics(const matcher::MatchResult& result,
                          const episode_sim::EpisodePair& episode,
                          const IdAssignment& ids_a, const IdAssignment& ids_b) {
  using Id = std::optional<std::int64_t>;
  using Tuple = std::pair<Id, Id>;
  std::set<Tuple> gt_set;
  for (const auto& [a, b] : episode.gt.matches)
    gt_set.emplace(episode.gt_a.objects[static_cast<std::size_t>(a)].instance_id,
                   episode.gt_b.objects[static_cast<std::size_t>(b)].instance_id);
  for (int a : episode.gt.removed)
    gt_set.emplace(episode.gt_a.objects[static_cast<std::size_t>(a)].instance_id, std::nullopt);
  for (int b : episode.gt.added)
    gt_set.emplace(std::nullopt, episode.gt_b.objects[static_cast<std::size_t>(b)].instance_id);

  TupleCounts out;
  int n_pred = 0;
  const auto classify = [&](const Tuple& t) {
    ++n_pred;
    if (gt_set.count(t))
      ++out.tp;
    else
      ++out.fp;
  };
  for (const auto& [i, j] : result.matches) {
    const Id ta = ids_a.id_of_det[static_cast<std::size_t>(i)];
    const Id tb = ids_b.id_of_det[static_cast<std::size_t>(j)];
    if (!ta || !tb) {
      ++n_pred;
      ++out.fp;  // claims a correspondence no ground-truth pair can back
      continue;
    }
    classify({ta, tb});
  }
  for (int i : result.unmatched_a) {
    const Id ta = ids_a.id_of_det[static_cast<std::size_t>(i)];
    if (ta) classify({ta, std::nullopt});
  }
  for (int j : result.unmatched_b) {
    const Id tb = ids_b.id_of_det[static_cast<std::size_t>(j)];
    if (tb) classify({std::nullopt, tb});
  }
  out.fn = static_cast<int>(gt_set.size()) - out.tp;
  out.zero_predictions = n_pred == 0;
  return out;
}

EpisodeMetrics evaluate_episode(const Eigen::MatrixXd& scores,
                                const matcher::MatchResult& result,
                                const episode_sim::EpisodePair& episode,
                                double iou_threshold) {
  const IdAssignment ids_a = assign_gt_ids(episode.map_a, episode.gt_a, iou_threshold);
  const IdAssignment ids_b = assign_gt_ids(episode.map_b, episode.gt_b, iou_threshold);
  EpisodeMetrics m;
  const auto lists = build_rank_lists(scores, episode, ids_a, ids_b);
  m.rank1 = cmc(lists, 1);
  m.rank5 = cmc(lists, 5);
  m.reid_map = evaluation::reid_map(lists);
  std::vector<RankList> unchanged, moved;
  for (const auto& rl : lists)
    (rl.supercat == Supercategory::Moved ? moved : unchanged).push_back(rl);
  m.rank1_unchanged = cmc(unchanged, 1);
  m.rank5_unchanged = cmc(unchanged, 5);
  m.map_unchanged = evaluation::reid_map(unchanged);
  m.rank1_moved = cmc(moved, 1);
  m.rank5_moved = cmc(moved, 5);
  m.map_moved = evaluation::reid_map(moved);
  m.accuracy = matching_accuracy(result, episode, ids_a, ids_b);
  m.tuples = tuple_metrics(result, episode, ids_a, ids_b);
  return m;
}

OracleMatch oracle_gtmatch(const IdAssignment& ids_a, const IdAssignment& ids_b) {
  const int m_a = static_cast<int>(ids_a.gt_of_det.size());
  const int m_b = static_cast<int>(ids_b.gt_of_det.size());
  OracleMatch out;
  out.scores = Eigen::MatrixXd::Zero(m_a, m_b);
  std::vector<bool> b_used(static_cast<std::size_t>(m_b), false);
  for (int i = 0; i < m_a; ++i) {
    const auto& ta = ids_a.id_of_det[static_cast<std::size_t>(i)];
    int hit = -1;
    if (ta) {
      for (int j = 0; j < m_b; ++j) {
        const auto& tb = ids_b.id_of_det[static_cast<std::size_t>(j)];
        if (tb && *tb == *ta) {
          out.scores(i, j) = 1.0;
          hit = j;
          break;  // gt ids are one-to-one per side
        }
      }
    }
    if (hit >= 0) {
      out.result.matches.emplace_back(i, hit);
      out.result.match_scores.push_back(1.0);
      b_used[static_cast<std::size_t>(hit)] = true;
    } else {
      out.result.unmatched_a.push_back(i);
    }
  }
  for (int j = 0; j < m_b; ++j)
    if (!b_used[static_cast<std::size_t>(j)]) out.result.unmatched_b.push_back(j);
  return out;
}

std::optional<double> bootstrap_se(const std::vector<double>& samples, int n_resamples,
                                   std::uint64_t seed) {
  const std::size_t n = samples.size();
  if (n < 2) return std::nullopt;
  Rng rng(Rng::derive(seed, 0x626f6f74));
  double sum = 0.0, sum_sq = 0.0;
  for (int r = 0; r < n_resamples; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += samples[rng.uniform_index(n)];
    const double mean = acc / static_cast<double>(n);
    sum += mean;
    sum_sq += mean * mean;
  }
  const double mean = sum / n_resamples;
  const double var = std::max(0.0, sum_sq / n_resamples - mean * mean);
  return std::sqrt(var);
}

AggregateMetric aggregate_metric(const std::vector<std::optional<double>>& values,
                                 int n_resamples, std::uint64_t seed) {
  std::vector<double> defined;
  for (const auto& v : values)
    if (v) defined.push_back(*v);
  AggregateMetric out;
  out.n = static_cast<int>(defined.size());
  if (defined.empty()) return out;
  double sum = 0.0;
  for (double v : defined) sum += v;
  out.mean = sum / static_cast<double>(defined.size());
  out.se = bootstrap_se(defined, n_resamples, seed);
  return out;
}

double DetectionPR::precision() const {
  if (tp + fp == 0) return fn > 0 ? 0.0 : 100.0;
  return 100.0 * tp / static_cast<double>(tp + fp);
}

double DetectionPR::recall() const {
  if (tp + fn == 0) return 100.0;
  return 100.0 * tp / static_cast<double>(tp + fn);
}

DetectionPR detection_pr(const IdAssignment& ids) {
  DetectionPR pr;
  for (int g : ids.gt_of_det) (g >= 0 ? pr.tp : pr.fp) += 1;
  for (int d : ids.det_of_gt)
    if (d < 0) ++pr.fn;
  return pr;
}

}  // namespace reid3d::evaluation
