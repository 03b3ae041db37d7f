#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "reid3d/matcher.hpp"

namespace reid3d::learning {

// One training episode: descriptor rows for both maps plus the
// ground-truth partition. matches, unmatched_a and unmatched_b together
// cover every row index of FA and FB exactly once.
struct SupervisedEpisode {
  Eigen::MatrixXd FA, FB;
  std::vector<std::pair<int, int>> matches;
  std::vector<int> unmatched_a, unmatched_b;
};

// Throws DataError if indices are out of range, repeat, or fail to
// cover both maps.
void validate_supervision(const SupervisedEpisode& ep);

// Negative log likelihood of the ground-truth assignment: matched pairs
// read P(i, j), unmatched objects read their dustbin cell. Probabilities
// are clamped at 1e-30 before the log.
double nll_loss(const Eigen::MatrixXd& log_p, const SupervisedEpisode& ep);

// dL/dlogP for nll_loss: -1 on each ground-truth cell unless the clamp
// was active there.
Eigen::MatrixXd nll_loss_grad(const Eigen::MatrixXd& log_p, const SupervisedEpisode& ep);

// Reverse sweep through the full matcher forward pass (Sinkhorn unrolled
// iteration by iteration, softmax attention, MLPs, projection). fwd must
// come from matcher::forward_match on a non-degenerate episode.
matcher::MatcherGrads backward_match(const matcher::MatcherParams& params,
                                     const matcher::MatchForward& fwd,
                                     const Eigen::MatrixXd& dlog_p);

// Forward + backward for one episode.
struct EpisodeGradient {
  double loss = 0.0;
  matcher::MatcherGrads grads;
};
EpisodeGradient episode_gradient(const matcher::MatcherParams& params,
                                 const SupervisedEpisode& ep);

double episode_loss(const matcher::MatcherParams& params, const SupervisedEpisode& ep);

// Central finite differences over the packed parameter vector.
Eigen::VectorXd finite_difference_gradient(const matcher::MatcherParams& params,
                                           const SupervisedEpisode& ep, double h);

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double fd_at_worst = 0.0;
};
// Relative error |a - f| / max(|a|, |f|, 1e-4) per packed parameter.
GradientCheck gradient_check(const matcher::MatcherParams& params,
                             const SupervisedEpisode& ep, double h);

// Smallest |pre-activation| across the episode's ReLU layers. Finite
// differencing is only trustworthy when this is comfortably above the
// step size (hinge kinks).
double min_abs_preactivation(const matcher::MatchForward& fwd);

struct AdamConfig {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction over a flat parameter vector.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, const AdamConfig& cfg);
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);
  int steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

struct TrainConfig {
  double lr = 5e-3;
  int batch_size = 8;
  int epochs = 30;
  std::uint64_t seed = 0;
};

struct LossCurvePoint {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
};

// Shuffled mini-batches, mean gradient reduction, Adam. Updates params
// in place and returns one curve point per epoch (val_accuracy is NaN
// when val is empty). Deterministic for a fixed seed.
std::vector<LossCurvePoint> train_matcher(matcher::MatcherParams& params,
                                          const std::vector<SupervisedEpisode>& train,
                                          const std::vector<SupervisedEpisode>& val,
                                          const TrainConfig& cfg);

// Fraction (in percent) of B objects assigned per the episode's ground
// truth: matched to the right partner, or dustbinned when unmatchable.
double supervised_match_accuracy(const matcher::MatcherParams& params,
                                 const SupervisedEpisode& ep);

// epoch,mean_loss,val_accuracy CSV (val column empty when NaN).
void save_loss_curve(const std::vector<LossCurvePoint>& curve, const std::string& path);

struct TripletSample {
  Eigen::VectorXd anchor, positive, negative;
};

// max(||a-p|| - ||a-n|| + margin, 0) on projected descriptors.
double triplet_loss(const Eigen::VectorXd& a, const Eigen::VectorXd& p,
                    const Eigen::VectorXd& n, double margin);

// One (anchor, positive, random negative) sample per ground-truth match;
// the negative is drawn uniformly from the other objects of B. Matches
// with no possible negative (|B| < 2) are skipped.
std::vector<TripletSample> mine_triplets(const Eigen::MatrixXd& FA,
                                         const Eigen::MatrixXd& FB,
                                         const std::vector<std::pair<int, int>>& matches,
                                         Rng& rng);

struct TripletTrainConfig {
  double lr = 1.5e-2;
  int batch_size = 64;
  int epochs = 50;
  double margin = 1.0;
  std::uint64_t seed = 0;
};

// Trains the projection MLP with the triplet loss (mean reduction,
// Adam). Returns mean loss per epoch.
std::vector<LossCurvePoint> train_projection(Mlp& projection,
                                             const std::vector<TripletSample>& triplets,
                                             const TripletTrainConfig& cfg);

}  // namespace reid3d::learning
