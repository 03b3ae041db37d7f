#include "reid3d/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "reid3d/errors.hpp"
#include "reid3d/rng.hpp"

namespace reid3d::pipeline {

namespace {

using episode_sim::EpisodePair;

struct MethodName {
  Method method;
  const char* name;
};

constexpr MethodName kNames[] = {
    {Method::HL2, "h-l2"},           {Method::HM, "h-m"},
    {Method::H1L, "h1l"},            {Method::H2L, "h2l"},
    {Method::H3L, "h3l"},            {Method::SinkhornFixed, "sinkhorn-fixed"},
    {Method::SMNet, "3dsmnet"},      {Method::GTMatch, "gtmatch"},
    {Method::GTBox, "gtbox"},
};

}  // namespace

const char* to_string(Method m) {
  for (const auto& entry : kNames)
    if (entry.method == m) return entry.name;
  throw std::invalid_argument("unknown method enum value");
}

Method method_from_string(const std::string& name) {
  for (const auto& entry : kNames)
    if (name == entry.name) return entry.method;
  throw std::invalid_argument("unknown method: " + name);
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {
      Method::HL2,   Method::HM,    Method::H1L,     Method::H2L,   Method::H3L,
      Method::SinkhornFixed, Method::SMNet, Method::GTMatch, Method::GTBox};
  return methods;
}

bool is_trainable(Method m) {
  switch (m) {
    case Method::H1L:
    case Method::H2L:
    case Method::H3L:
    case Method::SinkhornFixed:
    case Method::SMNet:
      return true;
    default:
      return false;
  }
}

Method artifact_method(Method m) { return m == Method::GTBox ? Method::SMNet : m; }

std::string checkpoint_filename(Method m) {
  return std::string(to_string(artifact_method(m))) + ".json";
}

learning::SupervisedEpisode build_supervision(const EpisodePair& episode,
                                              double iou_threshold) {
  const auto ids_a = evaluation::assign_gt_ids(episode.map_a, episode.gt_a, iou_threshold);
  const auto ids_b = evaluation::assign_gt_ids(episode.map_b, episode.gt_b, iou_threshold);
  learning::SupervisedEpisode sup;
  sup.FA = episode.map_a.descriptor_matrix();
  sup.FB = episode.map_b.descriptor_matrix();
  std::vector<bool> a_matched(episode.map_a.objects.size(), false);
  std::vector<bool> b_matched(episode.map_b.objects.size(), false);
  for (const auto& [pa, pb] : episode.gt.matches) {
    const int i = ids_a.det_of_gt[static_cast<std::size_t>(pa)];
    const int j = ids_b.det_of_gt[static_cast<std::size_t>(pb)];
    if (i < 0 || j < 0) continue;
    sup.matches.emplace_back(i, j);
    a_matched[static_cast<std::size_t>(i)] = true;
    b_matched[static_cast<std::size_t>(j)] = true;
  }
  for (std::size_t i = 0; i < a_matched.size(); ++i)
    if (!a_matched[i]) sup.unmatched_a.push_back(static_cast<int>(i));
  for (std::size_t j = 0; j < b_matched.size(); ++j)
    if (!b_matched[j]) sup.unmatched_b.push_back(static_cast<int>(j));
  return sup;
}

TrainedMethod train_method(Method m, const std::vector<EpisodePair>& train,
                           const std::vector<EpisodePair>& val, const TrainOptions& opt) {
  if (!is_trainable(m))
    throw std::invalid_argument(std::string(to_string(m)) + " has no trainable parameters");
  if (train.empty()) throw std::invalid_argument("empty training set");
  const int d = train.front().map_a.descriptor_dim;
  TrainedMethod out;

  if (m == Method::H1L || m == Method::H2L || m == Method::H3L) {
    const int n_layers = m == Method::H1L ? 1 : m == Method::H2L ? 2 : 3;
    std::vector<int> dims(static_cast<std::size_t>(n_layers) + 1, d);
    out.artifacts.projection = Mlp::make(dims);
    Rng init_rng(Rng::derive(opt.init_seed, 0x70726f6a));
    out.artifacts.projection.init_xavier(init_rng);
    std::vector<learning::TripletSample> triplets;
    Rng mine_rng(Rng::derive(opt.triplet.seed, 0x6d696e65));
    for (const auto& ep : train) {
      const auto sup = build_supervision(ep, opt.iou_threshold);
      if (sup.matches.empty()) continue;
      auto mined = learning::mine_triplets(sup.FA, sup.FB, sup.matches, mine_rng);
      triplets.insert(triplets.end(), std::make_move_iterator(mined.begin()),
                      std::make_move_iterator(mined.end()));
    }
    if (triplets.empty()) throw DataError("no triplets could be mined from the training set");
    out.curve = learning::train_projection(out.artifacts.projection, triplets, opt.triplet);
    return out;
  }

  const auto variant = m == Method::SinkhornFixed ? matcher::DustbinVariant::Fixed
                                                  : matcher::DustbinVariant::Adaptive;
  out.artifacts.params = matcher::MatcherParams::init(d, opt.d_out, opt.hidden1,
                                                      opt.hidden2, variant, opt.init_seed);
  out.artifacts.params.sinkhorn_iterations = opt.sinkhorn_iterations;
  out.artifacts.params.tau = opt.tau;
  out.artifacts.params.match_threshold = opt.match_threshold;
  std::vector<learning::SupervisedEpisode> sup_train, sup_val;
  for (const auto& ep : train) {
    auto sup = build_supervision(ep, opt.iou_threshold);
    // Degenerate episodes have no Sinkhorn gradient path.
    if (sup.FA.rows() == 0 || sup.FB.rows() == 0) continue;
    sup_train.push_back(std::move(sup));
  }
  for (const auto& ep : val) {
    auto sup = build_supervision(ep, opt.iou_threshold);
    if (sup.FA.rows() == 0 || sup.FB.rows() == 0) continue;
    sup_val.push_back(std::move(sup));
  }
  if (sup_train.empty()) throw DataError("every training episode is degenerate");
  out.curve = learning::train_matcher(out.artifacts.params, sup_train, sup_val, opt.matcher);
  return out;
}

void save_artifacts(Method m, const MethodArtifacts& artifacts, const std::string& path) {
  switch (artifact_method(m)) {
    case Method::H1L:
    case Method::H2L:
    case Method::H3L:
      matcher::save_projection(artifacts.projection, artifacts.projection.input_dim(), path);
      return;
    case Method::SinkhornFixed:
    case Method::SMNet:
      matcher::save_matcher_params(artifacts.params, path);
      return;
    default:
      throw std::invalid_argument(std::string(to_string(m)) + " has no artifacts to save");
  }
}

MethodArtifacts load_artifacts(Method m, const std::string& path) {
  MethodArtifacts artifacts;
  switch (artifact_method(m)) {
    case Method::H1L:
    case Method::H2L:
    case Method::H3L:
      artifacts.projection = matcher::load_projection(path);
      return artifacts;
    case Method::SinkhornFixed:
    case Method::SMNet:
      artifacts.params = matcher::load_matcher_params(path);
      return artifacts;
    default:
      throw std::invalid_argument(std::string(to_string(m)) + " has no artifacts to load");
  }
}

EpisodePair prepare_episode(Method m, const EpisodePair& episode,
                            const episode_sim::DetectionNoiseConfig& noise) {
  if (m != Method::GTBox) return episode;
  EpisodePair out = episode;
  auto [map_a, map_b] = episode_sim::gtbox_maps(episode, noise);
  out.map_a = std::move(map_a);
  out.map_b = std::move(map_b);
  return out;
}

EpisodeRun run_episode(Method m, const MethodArtifacts& artifacts, const EpisodePair& episode,
                       double iou_threshold) {
  const Eigen::MatrixXd FA = episode.map_a.descriptor_matrix();
  const Eigen::MatrixXd FB = episode.map_b.descriptor_matrix();
  const Eigen::Index m_a = FA.rows();
  const Eigen::Index m_b = FB.rows();
  EpisodeRun run;
  switch (m) {
    case Method::HL2:
    case Method::HM:
    case Method::H1L:
    case Method::H2L:
    case Method::H3L: {
      const auto kind = m == Method::HL2  ? matcher::BaselineKind::L2
                        : m == Method::HM ? matcher::BaselineKind::Mahalanobis
                                          : matcher::BaselineKind::Projected;
      const Mlp* projection =
          kind == matcher::BaselineKind::Projected ? &artifacts.projection : nullptr;
      auto base = matcher::baseline_match(FA, FB, kind, projection);
      run.scores = -base.cost;
      run.result = std::move(base.result);
      return run;
    }
    case Method::SinkhornFixed:
    case Method::SMNet:
    case Method::GTBox: {
      const auto fwd = matcher::forward_match(artifacts.params, FA, FB);
      run.result = matcher::extract_matches(fwd.P, artifacts.params.match_threshold);
      run.scores = fwd.P.topLeftCorner(m_a, m_b);
      if (m_a + m_b > 0) {
        if (artifacts.params.variant == matcher::DustbinVariant::Fixed)
          run.mean_dustbin = artifacts.params.alpha;
        else
          run.mean_dustbin = (fwd.zA.sum() + fwd.zB.sum()) / static_cast<double>(m_a + m_b);
      }
      return run;
    }
    case Method::GTMatch: {
      const auto ids_a = evaluation::assign_gt_ids(episode.map_a, episode.gt_a, iou_threshold);
      const auto ids_b = evaluation::assign_gt_ids(episode.map_b, episode.gt_b, iou_threshold);
      auto oracle = evaluation::oracle_gtmatch(ids_a, ids_b);
      run.scores = std::move(oracle.scores);
      run.result = std::move(oracle.result);
      return run;
    }
  }
  throw std::invalid_argument("unknown method enum value");
}

namespace {

using Getter = std::optional<double> (*)(const evaluation::EpisodeMetrics&);

evaluation::AggregateMetric collect(const std::vector<evaluation::EpisodeMetrics>& per_episode,
                                    Getter get, std::uint64_t seed) {
  std::vector<std::optional<double>> values;
  values.reserve(per_episode.size());
  for (const auto& em : per_episode) values.push_back(get(em));
  return evaluation::aggregate_metric(values, 1000, seed);
}

}  // namespace

MethodEvaluation evaluate_method(Method m, const MethodArtifacts& artifacts,
                                 const std::vector<EpisodePair>& episodes,
                                 const episode_sim::DetectionNoiseConfig& noise,
                                 double iou_threshold, std::uint64_t bootstrap_seed) {
  MethodEvaluation ev;
  ev.method = m;
  ev.n_episodes = static_cast<int>(episodes.size());
  for (const auto& ep : episodes) {
    const auto prepared = prepare_episode(m, ep, noise);
    const auto run = run_episode(m, artifacts, prepared, iou_threshold);
    ev.per_episode.push_back(
        evaluation::evaluate_episode(run.scores, run.result, prepared, iou_threshold));
    ev.dustbin_means.push_back(run.mean_dustbin);
  }

  std::vector<double> dust;
  for (const auto& v : ev.dustbin_means)
    if (v) dust.push_back(*v);
  if (!dust.empty()) {
    double sum = 0.0;
    for (double v : dust) sum += v;
    const double mean = sum / static_cast<double>(dust.size());
    double sq = 0.0;
    for (double v : dust) sq += (v - mean) * (v - mean);
    ev.dustbin_mean = mean;
    ev.dustbin_std = std::sqrt(sq / static_cast<double>(dust.size()));
  }

  const auto& pe = ev.per_episode;
  GroupAggregate overall{"overall", {}, {}, {}, {}, {}, {}, {}};
  overall.rank1 = collect(pe, [](const evaluation::EpisodeMetrics& e) { return e.rank1; },
                          bootstrap_seed);
  overall.rank5 = collect(pe, [](const evaluation::EpisodeMetrics& e) { return e.rank5; },
                          bootstrap_seed);
  overall.reid_map = collect(pe, [](const evaluation::EpisodeMetrics& e) { return e.reid_map; },
                             bootstrap_seed);
  overall.accuracy = collect(
      pe, [](const evaluation::EpisodeMetrics& e) { return e.accuracy.overall.percent(); },
      bootstrap_seed);
  overall.tuple_accuracy = collect(
      pe,
      [](const evaluation::EpisodeMetrics& e) {
        return std::optional<double>(e.tuples.accuracy());
      },
      bootstrap_seed);
  overall.tuple_precision = collect(
      pe,
      [](const evaluation::EpisodeMetrics& e) {
        return std::optional<double>(e.tuples.precision());
      },
      bootstrap_seed);
  overall.tuple_recall = collect(
      pe,
      [](const evaluation::EpisodeMetrics& e) { return std::optional<double>(e.tuples.recall()); },
      bootstrap_seed);

  GroupAggregate unchanged{"unchanged", {}, {}, {}, {}, {}, {}, {}};
  unchanged.rank1 = collect(
      pe, [](const evaluation::EpisodeMetrics& e) { return e.rank1_unchanged; }, bootstrap_seed);
  unchanged.rank5 = collect(
      pe, [](const evaluation::EpisodeMetrics& e) { return e.rank5_unchanged; }, bootstrap_seed);
  unchanged.reid_map = collect(
      pe, [](const evaluation::EpisodeMetrics& e) { return e.map_unchanged; }, bootstrap_seed);
  unchanged.accuracy = collect(
      pe, [](const evaluation::EpisodeMetrics& e) { return e.accuracy.unchanged.percent(); },
      bootstrap_seed);

  GroupAggregate moved{"moved", {}, {}, {}, {}, {}, {}, {}};
  moved.rank1 = collect(pe, [](const evaluation::EpisodeMetrics& e) { return e.rank1_moved; },
                        bootstrap_seed);
  moved.rank5 = collect(pe, [](const evaluation::EpisodeMetrics& e) { return e.rank5_moved; },
                        bootstrap_seed);
  moved.reid_map = collect(pe, [](const evaluation::EpisodeMetrics& e) { return e.map_moved; },
                           bootstrap_seed);
  moved.accuracy = collect(
      pe, [](const evaluation::EpisodeMetrics& e) { return e.accuracy.moved.percent(); },
      bootstrap_seed);

  GroupAggregate added{"added", {}, {}, {}, {}, {}, {}, {}};
  added.accuracy = collect(
      pe, [](const evaluation::EpisodeMetrics& e) { return e.accuracy.added.percent(); },
      bootstrap_seed);

  GroupAggregate removed{"removed", {}, {}, {}, {}, {}, {}, {}};
  removed.accuracy = collect(
      pe, [](const evaluation::EpisodeMetrics& e) { return e.accuracy.removed.percent(); },
      bootstrap_seed);

  GroupAggregate fp{"fp", {}, {}, {}, {}, {}, {}, {}};
  fp.accuracy = collect(
      pe, [](const evaluation::EpisodeMetrics& e) { return e.accuracy.fp.percent(); },
      bootstrap_seed);

  ev.groups = {std::move(overall), std::move(unchanged), std::move(moved), std::move(added),
               std::move(removed), std::move(fp)};
  return ev;
}

const GroupAggregate& MethodEvaluation::group(const std::string& name) const {
  for (const auto& g : groups)
    if (g.group == name) return g;
  throw std::invalid_argument("no metric group named " + name);
}

PairedDiff paired_accuracy_diff(const MethodEvaluation& x, const MethodEvaluation& y) {
  if (x.per_episode.size() != y.per_episode.size())
    throw std::invalid_argument("paired comparison needs identical episode lists");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.per_episode.size(); ++i) {
    const auto a = x.per_episode[i].accuracy.overall.percent();
    const auto b = y.per_episode[i].accuracy.overall.percent();
    if (a && b) diffs.push_back(*a - *b);
  }
  PairedDiff out;
  out.n = static_cast<int>(diffs.size());
  if (diffs.empty()) return out;
  double sum = 0.0;
  for (double d : diffs) sum += d;
  out.mean_diff = sum / static_cast<double>(diffs.size());
  out.se = evaluation::bootstrap_se(diffs, 1000, 42);
  return out;
}

}  // namespace reid3d::pipeline
