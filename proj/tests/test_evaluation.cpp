#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "doctest.h"
#include "reid3d/evaluation.hpp"
#include "reid3d/rng.hpp"

using namespace reid3d;
using namespace reid3d::evaluation;
using episode_sim::EpisodePair;
using episode_sim::Supercategory;
using matcher::MatchResult;

namespace {

BoundingBox3D slot_box(int slot) {
  return BoundingBox3D{{3.0 * slot, 0.5, 0.0}, {1.0, 1.0, 1.0}, 0.0};
}

ObjectInstance make_instance(int slot, std::int64_t id, Rng& rng) {
  ObjectInstance o;
  o.box = slot_box(slot);
  o.label = slot % 5;
  o.confidence = 1.0;
  o.descriptor = episode_sim::random_unit_vector(8, rng);
  o.instance_id = id;
  return o;
}

// Synthetic episode with perfect detections: matched objects first on
// both sides (alternating unchanged / moved), then removed on A and
// added on B. Boxes occupy disjoint slots so id assignment is exact.
EpisodePair make_episode(int n_match, int n_removed, int n_added, std::uint64_t seed = 1) {
  Rng rng(seed);
  EpisodePair ep;
  ep.gt_a.descriptor_dim = ep.gt_b.descriptor_dim = 8;
  for (int i = 0; i < n_match; ++i) {
    ep.gt_a.objects.push_back(make_instance(i, i, rng));
    ep.gt_b.objects.push_back(make_instance(i, i, rng));
    ep.gt.matches.emplace_back(i, i);
    const auto sc = i % 2 == 0 ? Supercategory::Unchanged : Supercategory::Moved;
    ep.gt.supercat_a.push_back(sc);
    ep.gt.supercat_b.push_back(sc);
  }
  for (int k = 0; k < n_removed; ++k) {
    ep.gt_a.objects.push_back(make_instance(n_match + k, 500 + k, rng));
    ep.gt.removed.push_back(n_match + k);
    ep.gt.supercat_a.push_back(Supercategory::Removed);
  }
  for (int k = 0; k < n_added; ++k) {
    ep.gt_b.objects.push_back(make_instance(n_match + k, 1000 + k, rng));
    ep.gt.added.push_back(n_match + k);
    ep.gt.supercat_b.push_back(Supercategory::Added);
  }
  ep.map_a = ep.gt_a;
  ep.map_b = ep.gt_b;
  ep.coverage_a.assign(ep.gt_a.objects.size(), 1.0);
  ep.coverage_b.assign(ep.gt_b.objects.size(), 1.0);
  ep.tour_steps_a = ep.tour_steps_b = 1;
  return ep;
}

MatchResult all_dustbin(const EpisodePair& ep) {
  MatchResult r;
  for (int i = 0; i < ep.map_a.size(); ++i) r.unmatched_a.push_back(i);
  for (int j = 0; j < ep.map_b.size(); ++j) r.unmatched_b.push_back(j);
  return r;
}

constexpr std::int64_t kNull = std::numeric_limits<std::int64_t>::min();
using TupleSet = std::set<std::pair<std::int64_t, std::int64_t>>;

std::int64_t id_or_null(const std::optional<std::int64_t>& id) {
  return id ? *id : kNull;
}

// Tuple counting recomputed from the definitions, set algebra only.
struct TupleOracle {
  int tp = 0, fp = 0, fn = 0;
};

TupleOracle tuple_oracle(const MatchResult& result, const EpisodePair& ep,
                         const IdAssignment& ids_a, const IdAssignment& ids_b) {
  TupleSet gt;
  for (const auto& [i, j] : ep.gt.matches)
    gt.emplace(*ep.gt_a.objects[static_cast<std::size_t>(i)].instance_id,
               *ep.gt_b.objects[static_cast<std::size_t>(j)].instance_id);
  for (int i : ep.gt.removed)
    gt.emplace(*ep.gt_a.objects[static_cast<std::size_t>(i)].instance_id, kNull);
  for (int j : ep.gt.added)
    gt.emplace(kNull, *ep.gt_b.objects[static_cast<std::size_t>(j)].instance_id);

  TupleSet pred;
  int immediate_fp = 0;
  for (const auto& [i, j] : result.matches) {
    const auto ta = ids_a.id_of_det[static_cast<std::size_t>(i)];
    const auto tb = ids_b.id_of_det[static_cast<std::size_t>(j)];
    if (!ta || !tb)
      ++immediate_fp;
    else
      pred.emplace(*ta, *tb);
  }
  for (int i : result.unmatched_a) {
    const auto ta = ids_a.id_of_det[static_cast<std::size_t>(i)];
    if (ta) pred.emplace(*ta, kNull);
  }
  for (int j : result.unmatched_b) {
    const auto tb = ids_b.id_of_det[static_cast<std::size_t>(j)];
    if (tb) pred.emplace(kNull, *tb);
  }

  TupleOracle out;
  for (const auto& t : pred)
    if (gt.count(t))
      ++out.tp;
    else
      ++out.fp;
  out.fp += immediate_fp;
  for (const auto& t : gt)
    if (!pred.count(t)) ++out.fn;
  return out;
}

std::vector<RankList> lists_at_positions(const std::vector<int>& positions, int gallery) {
  std::vector<RankList> lists;
  for (int p : positions) {
    RankList l;
    l.position = p;
    l.gallery_size = gallery;
    lists.push_back(l);
  }
  return lists;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("id assignment is exact on identical boxes") {
    const EpisodePair ep = make_episode(4, 2, 1);
    const IdAssignment ids = assign_gt_ids(ep.map_a, ep.gt_a);
    REQUIRE(ids.gt_of_det.size() == 6);
    for (int i = 0; i < 6; ++i) {
      CHECK(ids.gt_of_det[static_cast<std::size_t>(i)] == i);
      CHECK(ids.det_of_gt[static_cast<std::size_t>(i)] == i);
      REQUIRE(ids.id_of_det[static_cast<std::size_t>(i)].has_value());
      CHECK(*ids.id_of_det[static_cast<std::size_t>(i)] ==
            *ep.gt_a.objects[static_cast<std::size_t>(i)].instance_id);
    }
  }

  TEST_CASE("a detection overlapping nothing gets a null id") {
    EpisodePair ep = make_episode(2, 0, 0);
    ObjectInstance stray;
    Rng rng(4);
    stray = make_instance(50, 0, rng);
    stray.instance_id = std::nullopt;
    ep.map_a.objects.push_back(stray);
    const IdAssignment ids = assign_gt_ids(ep.map_a, ep.gt_a);
    CHECK(ids.gt_of_det[2] == -1);
    CHECK(!ids.id_of_det[2].has_value());
  }

  TEST_CASE("jittered assignment equals the exhaustive optimum") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 3 + static_cast<int>(rng.uniform_index(3));  // 3..5
      ObjectMap gt, det;
      gt.descriptor_dim = det.descriptor_dim = 8;
      std::vector<int> order(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
      rng.shuffle(order);
      for (int i = 0; i < n; ++i) gt.objects.push_back(make_instance(i, i, rng));
      for (int i = 0; i < n; ++i) {
        ObjectInstance d = gt.objects[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        for (int a = 0; a < 3; ++a) d.box.centroid[a] += rng.uniform(-0.2, 0.2);
        d.instance_id = std::nullopt;
        det.objects.push_back(d);
      }

      // Exhaustive search over one-to-one assignments for max total IoU,
      // pairs below the threshold left out.
      Eigen::MatrixXd iou(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          iou(i, j) = geometry::box_iou_3d(det.objects[static_cast<std::size_t>(i)].box,
                                           gt.objects[static_cast<std::size_t>(j)].box);
      std::vector<int> perm(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
      double best = -1.0;
      std::vector<int> best_gt;
      do {
        double total = 0.0;
        std::vector<int> assigned(static_cast<std::size_t>(n), -1);
        for (int i = 0; i < n; ++i) {
          const double v = iou(i, perm[static_cast<std::size_t>(i)]);
          if (v >= kDefaultIouThreshold) {
            total += v;
            assigned[static_cast<std::size_t>(i)] = perm[static_cast<std::size_t>(i)];
          }
        }
        if (total > best + 1e-12) {
          best = total;
          best_gt = assigned;
        }
      } while (std::next_permutation(perm.begin(), perm.end()));

      const IdAssignment ids = assign_gt_ids(det, gt);
      for (int i = 0; i < n; ++i)
        CHECK(ids.gt_of_det[static_cast<std::size_t>(i)] == best_gt[static_cast<std::size_t>(i)]);

      // One-to-one on non-null ids.
      std::set<std::int64_t> seen;
      for (const auto& id : ids.id_of_det)
        if (id) CHECK(seen.insert(*id).second);
    }
  }

  TEST_CASE("cmc counts top-k membership") {
    const auto lists = lists_at_positions({1, 2, 6}, 10);
    CHECK(*cmc(lists, 1) == doctest::Approx(100.0 / 3.0));
    CHECK(*cmc(lists, 5) == doctest::Approx(200.0 / 3.0));
    CHECK(*cmc(lists, 6) == doctest::Approx(100.0));
    double prev = 0.0;
    for (int k = 1; k <= 10; ++k) {
      const double v = *cmc(lists, k);
      CHECK(v >= prev);
      prev = v;
    }
    CHECK(*cmc(lists, 10) == doctest::Approx(100.0));
    CHECK(!cmc({}, 5).has_value());
  }

  TEST_CASE("map follows the single-positive convention") {
    CHECK(*reid_map(lists_at_positions({1, 1, 1}, 4)) == doctest::Approx(100.0));
    CHECK(*reid_map(lists_at_positions({1, 2}, 4)) == doctest::Approx(75.0));
    CHECK(!reid_map({}).has_value());

    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> positions;
      double expect = 0.0;
      const int n = 1 + static_cast<int>(rng.uniform_index(8));
      for (int q = 0; q < n; ++q) {
        const int p = 1 + static_cast<int>(rng.uniform_index(12));
        positions.push_back(p);
        expect += 1.0 / p;
      }
      expect = 100.0 * expect / n;
      const auto lists = lists_at_positions(positions, 12);
      CHECK(*reid_map(lists) == doctest::Approx(expect).epsilon(1e-12));
      CHECK(*reid_map(lists) >= 100.0 / 12.0);
      CHECK((*reid_map(lists) == doctest::Approx(100.0)) == (*cmc(lists, 1) == doctest::Approx(100.0)));
    }
  }

  TEST_CASE("rank positions count strictly better gallery scores") {
    const EpisodePair ep = make_episode(2, 0, 1);
    const IdAssignment ids_a = assign_gt_ids(ep.map_a, ep.gt_a);
    const IdAssignment ids_b = assign_gt_ids(ep.map_b, ep.gt_b);
    Eigen::MatrixXd scores(2, 3);
    scores << 0.9, 0.9, 0.2,   // query 0: tie with a wrong entry, no one strictly better
              0.1, 0.5, 0.5;   // query 1: its own column ties the best wrong score
    const auto lists = build_rank_lists(scores, ep, ids_a, ids_b);
    REQUIRE(lists.size() == 2);
    CHECK(lists[0].query == 0);
    CHECK(lists[0].target == 0);
    CHECK(lists[0].position == 1);
    CHECK(lists[0].gallery_size == 3);
    CHECK(lists[0].supercat == Supercategory::Unchanged);
    CHECK(lists[1].position == 1);  // only strictly better scores push the rank down
    CHECK(lists[1].supercat == Supercategory::Moved);

    Eigen::MatrixXd worse = scores;
    worse(1, 2) = 0.7;  // one strictly better gallery entry
    CHECK(build_rank_lists(worse, ep, ids_a, ids_b)[1].position == 2);
  }

  TEST_CASE("random scores rank the target uniformly") {
    EpisodePair ep = make_episode(1, 0, 9);
    const IdAssignment ids_a = assign_gt_ids(ep.map_a, ep.gt_a);
    const IdAssignment ids_b = assign_gt_ids(ep.map_b, ep.gt_b);
    Rng rng(123);
    std::vector<RankList> all;
    for (int trial = 0; trial < 10000; ++trial) {
      Eigen::MatrixXd scores(1, 10);
      for (int j = 0; j < 10; ++j) scores(0, j) = rng.uniform(0.0, 1.0);
      const auto lists = build_rank_lists(scores, ep, ids_a, ids_b);
      REQUIRE(lists.size() == 1);
      all.push_back(lists[0]);
    }
    CHECK(*cmc(all, 1) == doctest::Approx(10.0).epsilon(0.1));
  }

  TEST_CASE("dustbinning everything is right exactly for added objects") {
    const EpisodePair ep = make_episode(20, 10, 10);
    const IdAssignment ids_a = assign_gt_ids(ep.map_a, ep.gt_a);
    const IdAssignment ids_b = assign_gt_ids(ep.map_b, ep.gt_b);
    const AccuracyBreakdown acc =
        matching_accuracy(all_dustbin(ep), ep, ids_a, ids_b);
    CHECK(*acc.overall.percent() == doctest::Approx(100.0 / 3.0));
    CHECK(acc.overall.total == 30);
    CHECK(*acc.added.percent() == doctest::Approx(100.0));
    CHECK(*acc.unchanged.percent() == doctest::Approx(0.0));
    CHECK(*acc.moved.percent() == doctest::Approx(0.0));
    CHECK(!acc.fp.percent().has_value());  // no false-positive detections here
    CHECK(*acc.removed.percent() == doctest::Approx(100.0));
  }

  TEST_CASE("random permutation matching is right at chance level") {
    const EpisodePair ep = make_episode(20, 0, 0);
    const IdAssignment ids_a = assign_gt_ids(ep.map_a, ep.gt_a);
    const IdAssignment ids_b = assign_gt_ids(ep.map_b, ep.gt_b);
    Rng rng(55);
    double sum = 0.0;
    const int trials = 4000;
    for (int t = 0; t < trials; ++t) {
      std::vector<int> perm(20);
      for (int i = 0; i < 20; ++i) perm[static_cast<std::size_t>(i)] = i;
      rng.shuffle(perm);
      MatchResult r;
      for (int i = 0; i < 20; ++i) r.matches.emplace_back(i, perm[static_cast<std::size_t>(i)]);
      sum += *matching_accuracy(r, ep, ids_a, ids_b).overall.percent();
    }
    CHECK(sum / trials == doctest::Approx(5.0).epsilon(0.1));
  }

  TEST_CASE("accuracy slices partition the overall counts") {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
      EpisodePair ep = make_episode(4 + static_cast<int>(rng.uniform_index(4)),
                                    static_cast<int>(rng.uniform_index(3)),
                                    static_cast<int>(rng.uniform_index(3)),
                                    1000 + static_cast<std::uint64_t>(trial));
      // A couple of false-positive detections on each side.
      ObjectInstance fp_a = make_instance(40, 0, rng);
      fp_a.instance_id = std::nullopt;
      ep.map_a.objects.push_back(fp_a);
      ObjectInstance fp_b = make_instance(44, 0, rng);
      fp_b.instance_id = std::nullopt;
      ep.map_b.objects.push_back(fp_b);

      const IdAssignment ids_a = assign_gt_ids(ep.map_a, ep.gt_a);
      const IdAssignment ids_b = assign_gt_ids(ep.map_b, ep.gt_b);

      const int na = ep.map_a.size(), nb = ep.map_b.size();
      MatchResult r;
      std::vector<int> used_b;
      for (int j = 0; j < nb; ++j) used_b.push_back(j);
      rng.shuffle(used_b);
      std::vector<char> b_matched(static_cast<std::size_t>(nb), 0);
      for (int i = 0; i < na; ++i) {
        if (rng.bernoulli(0.6) && i < nb) {
          const int j = used_b[static_cast<std::size_t>(i)];
          r.matches.emplace_back(i, j);
          b_matched[static_cast<std::size_t>(j)] = 1;
        } else {
          r.unmatched_a.push_back(i);
        }
      }
      for (int j = 0; j < nb; ++j)
        if (!b_matched[static_cast<std::size_t>(j)]) r.unmatched_b.push_back(j);

      const AccuracyBreakdown acc = matching_accuracy(r, ep, ids_a, ids_b);
      CHECK(acc.overall.total == nb);
      CHECK(acc.overall.total == acc.unchanged.total + acc.moved.total + acc.added.total +
                                     acc.fp.total);
      CHECK(acc.overall.correct == acc.unchanged.correct + acc.moved.correct +
                                       acc.added.correct + acc.fp.correct);

      const TupleCounts t = tuple_metrics(r, ep, ids_a, ids_b);
      const TupleOracle o = tuple_oracle(r, ep, ids_a, ids_b);
      CHECK(t.tp == o.tp);
      CHECK(t.fp == o.fp);
      CHECK(t.fn == o.fn);
      const int n_gt = static_cast<int>(ep.gt.matches.size() + ep.gt.removed.size() +
                                        ep.gt.added.size());
      CHECK(t.tp + t.fn == n_gt);
      const int n_pred = static_cast<int>(r.matches.size()) +
                         static_cast<int>(std::count_if(
                             r.unmatched_a.begin(), r.unmatched_a.end(),
                             [&](int i) { return ids_a.id_of_det[static_cast<std::size_t>(i)].has_value(); })) +
                         static_cast<int>(std::count_if(
                             r.unmatched_b.begin(), r.unmatched_b.end(),
                             [&](int j) { return ids_b.id_of_det[static_cast<std::size_t>(j)].has_value(); }));
      CHECK(t.tp + t.fp == n_pred);
    }
  }

  TEST_CASE("the ground-truth oracle is perfect everywhere") {
    EpisodePair ep = make_episode(6, 3, 3);
    const IdAssignment ids_a = assign_gt_ids(ep.map_a, ep.gt_a);
    const IdAssignment ids_b = assign_gt_ids(ep.map_b, ep.gt_b);
    const OracleMatch oracle = oracle_gtmatch(ids_a, ids_b);
    CHECK(oracle.scores.rows() == ep.map_a.size());
    CHECK(oracle.scores.cols() == ep.map_b.size());

    const AccuracyBreakdown acc = matching_accuracy(oracle.result, ep, ids_a, ids_b);
    CHECK(*acc.overall.percent() == doctest::Approx(100.0));
    const TupleCounts t = tuple_metrics(oracle.result, ep, ids_a, ids_b);
    CHECK(t.precision() == doctest::Approx(100.0));
    CHECK(t.recall() == doctest::Approx(100.0));
    CHECK(t.accuracy() == doctest::Approx(100.0));

    const EpisodeMetrics m = evaluate_episode(oracle.scores, oracle.result, ep);
    CHECK(*m.rank1 == doctest::Approx(100.0));
    CHECK(*m.rank5 == doctest::Approx(100.0));
    CHECK(*m.reid_map == doctest::Approx(100.0));
    CHECK(*m.rank1_unchanged == doctest::Approx(100.0));
    CHECK(*m.rank1_moved == doctest::Approx(100.0));
    CHECK(*m.accuracy.overall.percent() == doctest::Approx(100.0));
  }

  TEST_CASE("zero predictions are flagged, not divided by zero") {
    TupleCounts t;
    t.fn = 7;
    t.zero_predictions = true;
    CHECK(t.precision() == 0.0);
    CHECK(t.recall() == 0.0);
    CHECK(t.accuracy() == 0.0);
  }

  TEST_CASE("bootstrap standard error") {
    CHECK(!bootstrap_se({5.0}).has_value());
    CHECK(*bootstrap_se({3.0, 3.0, 3.0, 3.0}) == doctest::Approx(0.0));
    const double se = *bootstrap_se({0.0, 100.0});
    CHECK(se == doctest::Approx(35.3553).epsilon(2.0 / 35.3553));
    CHECK(*bootstrap_se({0.0, 100.0}) == se);  // same seed, same answer
    CHECK(*bootstrap_se({0.0, 100.0}, 1000, 43) != se);
  }

  TEST_CASE("aggregation skips undefined episode values") {
    const std::vector<std::optional<double>> values{10.0, std::nullopt, 30.0};
    const AggregateMetric m = aggregate_metric(values);
    CHECK(m.n == 2);
    CHECK(*m.mean == doctest::Approx(20.0));
    CHECK(m.se.has_value());

    const AggregateMetric empty = aggregate_metric({std::nullopt, std::nullopt});
    CHECK(empty.n == 0);
    CHECK(!empty.mean.has_value());
  }

  TEST_CASE("detection precision and recall from an assignment") {
    IdAssignment ids;
    ids.gt_of_det = {0, -1, 2};
    ids.det_of_gt = {0, -1, 2, -1};
    ids.id_of_det = {std::int64_t{0}, std::nullopt, std::int64_t{2}};
    const DetectionPR pr = detection_pr(ids);
    CHECK(pr.tp == 2);
    CHECK(pr.fp == 1);
    CHECK(pr.fn == 2);
    CHECK(pr.precision() == doctest::Approx(200.0 / 3.0));
    CHECK(pr.recall() == doctest::Approx(50.0));
  }
}
