#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <vector>

#include "reid3d/episode_sim.hpp"
#include "reid3d/geometry.hpp"
#include "reid3d/learning.hpp"
#include "reid3d/matcher.hpp"
#include "reid3d/rng.hpp"

namespace {

using namespace reid3d;

Eigen::MatrixXd random_descriptors(int m, int d, Rng& rng) {
  Eigen::MatrixXd f(m, d);
  for (int i = 0; i < m; ++i)
    f.row(i) = episode_sim::random_unit_vector(d, rng).transpose();
  return f;
}

learning::SupervisedEpisode identity_supervision(const Eigen::MatrixXd& fa,
                                                 const Eigen::MatrixXd& fb) {
  learning::SupervisedEpisode ep;
  ep.FA = fa;
  ep.FB = fb;
  const int k = static_cast<int>(std::min(fa.rows(), fb.rows()));
  for (int i = 0; i < k; ++i) ep.matches.emplace_back(i, i);
  for (int i = k; i < fa.rows(); ++i) ep.unmatched_a.push_back(i);
  for (int j = k; j < fb.rows(); ++j) ep.unmatched_b.push_back(j);
  return ep;
}

void BM_ForwardMatch(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0)), d = 64;
  Rng rng(1);
  const auto params =
      matcher::MatcherParams::init(d, d, 64, 32, matcher::DustbinVariant::Adaptive, 7);
  const auto fa = random_descriptors(m, d, rng), fb = random_descriptors(m, d, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(matcher::forward_match(params, fa, fb).P);
}
BENCHMARK(BM_ForwardMatch)->Arg(10)->Arg(30)->Arg(60);

void BM_EpisodeGradient(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0)), d = 64;
  Rng rng(2);
  const auto params =
      matcher::MatcherParams::init(d, d, 64, 32, matcher::DustbinVariant::Adaptive, 7);
  const auto ep =
      identity_supervision(random_descriptors(m, d, rng), random_descriptors(m, d, rng));
  for (auto _ : state)
    benchmark::DoNotOptimize(learning::episode_gradient(params, ep).loss);
}
BENCHMARK(BM_EpisodeGradient)->Arg(10)->Arg(30);

void BM_Sinkhorn(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  Rng rng(3);
  Eigen::MatrixXd aug(m + 1, m + 1);
  for (int i = 0; i <= m; ++i)
    for (int j = 0; j <= m; ++j) aug(i, j) = rng.normal();
  for (auto _ : state)
    benchmark::DoNotOptimize(matcher::sinkhorn(aug, 100, 1.0).sum());
}
BENCHMARK(BM_Sinkhorn)->Arg(30)->Arg(100);

void BM_Hungarian(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(4);
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = rng.uniform(0.0, 10.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(matcher::hungarian(cost).total_cost);
}
BENCHMARK(BM_Hungarian)->Arg(10)->Arg(30)->Arg(100);

void BM_BoxIou3d(benchmark::State& state) {
  Rng rng(5);
  std::vector<BoundingBox3D> boxes;
  for (int i = 0; i < 256; ++i) {
    BoundingBox3D b;
    b.centroid = Eigen::Vector3d(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    b.extents = Eigen::Vector3d(rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.5, 2));
    b.yaw = rng.uniform(-3.14, 3.14);
    boxes.push_back(b);
  }
  std::size_t k = 0;
  for (auto _ : state) {
    const auto& a = boxes[k % boxes.size()];
    const auto& b = boxes[(k + 7) % boxes.size()];
    benchmark::DoNotOptimize(geometry::box_iou_3d(a, b));
    ++k;
  }
}
BENCHMARK(BM_BoxIou3d);

void BM_Nms(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(6);
  std::vector<Detection> dets(static_cast<std::size_t>(n));
  for (auto& det : dets) {
    det.box.centroid =
        Eigen::Vector3d(rng.uniform(-10, 10), rng.uniform(0, 2), rng.uniform(-10, 10));
    det.box.extents = Eigen::Vector3d(rng.uniform(0.5, 2), rng.uniform(0.5, 2),
                                      rng.uniform(0.5, 2));
    det.box.yaw = rng.uniform(-3.14, 3.14);
    det.confidence = rng.uniform(0.0, 1.0);
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(geometry::nms(dets, 0.05, 0.25).size());
}
BENCHMARK(BM_Nms)->Arg(100)->Arg(1000);

void BM_VoxelSubsample(benchmark::State& state) {
  Rng rng(7);
  PointCloud cloud;
  cloud.points.reserve(100000);
  for (int i = 0; i < 100000; ++i)
    cloud.points.emplace_back(rng.uniform(-10, 10), rng.uniform(0, 3),
                              rng.uniform(-10, 10));
  for (auto _ : state)
    benchmark::DoNotOptimize(geometry::voxel_subsample(cloud, 0.05).size());
}
BENCHMARK(BM_VoxelSubsample);

}  // namespace

BENCHMARK_MAIN();
