#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "reid3d/mlp.hpp"
#include "reid3d/object_map.hpp"

namespace reid3d::matcher {

// Raw pairwise similarity scores, m_A x m_B.
using ScoreMatrix = Eigen::MatrixXd;

// Soft assignment (m_A+1) x (m_B+1); the last row/column are the
// dustbins. After Sinkhorn, non-dustbin rows and columns each sum to 1,
// the dustbin row to m_B and the dustbin column to m_A (total mass
// m_A + m_B, the augmented-marginal convention).
using AssignmentMatrix = Eigen::MatrixXd;

enum class DustbinVariant { Adaptive, Fixed };

// Learnable matcher: linear projection, bilinear scores, dustbin scoring
// (per-object attention MLPs or a single learned constant), Sinkhorn.
// Hyperparameters travel with the weights so a checkpoint is
// self-describing.
struct MatcherParams {
  int descriptor_dim = 0;
  int d_out = 256;
  int hidden1 = 256;  // attention/dustbin MLP hidden widths
  int hidden2 = 64;
  DustbinVariant variant = DustbinVariant::Adaptive;
  int sinkhorn_iterations = 100;
  double tau = 1.0;
  double match_threshold = 0.2;
  bool l2_normalize_input = false;

  Eigen::MatrixXd W;  // d_out x descriptor_dim
  Eigen::VectorXd b;  // d_out
  Mlp attention_mlp;  // 2*d_out -> hidden1 -> hidden2 -> 1
  Mlp dustbin_mlp;    // 2*d_out -> hidden1 -> hidden2 -> 1
  double alpha = 1.0; // fixed-variant dustbin score

  // Truncated-identity W plus U(-0.01, 0.01) noise, zero b,
  // Xavier-uniform MLPs, alpha = 1.
  static MatcherParams init(int descriptor_dim, int d_out, int hidden1, int hidden2,
                            DustbinVariant variant, std::uint64_t seed);

  std::size_t parameter_count() const;
  Eigen::VectorXd pack() const;
  void unpack(const Eigen::VectorXd& theta);
};

// Gradient container mirroring MatcherParams' learnable tensors.
struct MatcherGrads {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  Mlp attention_mlp;
  Mlp dustbin_mlp;
  double alpha = 0.0;

  static MatcherGrads zeros_like(const MatcherParams& p);
  void accumulate(const MatcherGrads& other, double scale);
  Eigen::VectorXd pack() const;  // same ordering as MatcherParams::pack
};

// h_i = W f_i + b for every row of F (optionally L2-normalizing rows
// first, per params). Returns m x d_out.
Eigen::MatrixXd project_descriptors(const MatcherParams& params, const Eigen::MatrixXd& F);

// S = H_A H_B^T.
ScoreMatrix score_matrix(const Eigen::MatrixXd& HA, const Eigen::MatrixXd& HB);

// Scene-adaptive dustbin scores for the objects in HA against HB:
// attention logits W_ij = mlp([h_i; h_j]) are softmaxed over j, the
// attended feature a_i = sum_j What_ij h_j is concatenated back onto h_i
// and scored by the dustbin MLP. Empty inputs give empty output.
struct DustbinTrace {
  Eigen::MatrixXd Xatt;      // (mA*mB) x 2*d_out attention inputs
  MlpCache att_cache;
  Eigen::MatrixXd logits;    // mA x mB
  Eigen::MatrixXd softmax;   // mA x mB, rows sum to 1
  Eigen::MatrixXd attended;  // mA x d_out
  Eigen::MatrixXd Xdust;     // mA x 2*d_out dustbin MLP inputs
  MlpCache dust_cache;
};
Eigen::VectorXd dustbin_scores(const MatcherParams& params, const Eigen::MatrixXd& HA,
                               const Eigen::MatrixXd& HB, DustbinTrace* trace = nullptr);

// Places S in the top-left block, zA as the extra column, zB as the
// extra row, and corner at (m_A, m_B).
Eigen::MatrixXd augment_with_dustbins(const ScoreMatrix& S, const Eigen::VectorXd& zA,
                                      const Eigen::VectorXd& zB, double corner);

// Log-domain Sinkhorn on an augmented score matrix with marginals
// (1,...,1, m_B) over rows and (1,...,1, m_A) over columns. Keeps the
// per-iteration potentials so training can differentiate through the
// unrolled loop. Throws NumericError if the input is non-finite.
struct SinkhornTrace {
  Eigen::MatrixXd Z;               // scores / tau
  Eigen::VectorXd log_a, log_b;    // log marginals
  std::vector<Eigen::VectorXd> u;  // u[t], t = 1..iterations
  std::vector<Eigen::VectorXd> v;  // v[t], t = 0..iterations (v[0] = 0)
  Eigen::MatrixXd log_p;
  Eigen::MatrixXd P;
};
SinkhornTrace sinkhorn_log(const Eigen::MatrixXd& augmented, int iterations, double tau);
AssignmentMatrix sinkhorn(const Eigen::MatrixXd& augmented, int iterations, double tau);

// Hard matches from a soft assignment: (i, j) is kept iff j is the
// argmax of row i and i the argmax of column j (dustbins included in
// both scans; ties resolve to the lowest index) and P(i, j) >=
// threshold. Everything else falls into the unmatched sets.
struct MatchResult {
  std::vector<std::pair<int, int>> matches;  // (index in A, index in B)
  std::vector<double> match_scores;          // parallel to matches
  std::vector<int> unmatched_a;
  std::vector<int> unmatched_b;
};
MatchResult extract_matches(const AssignmentMatrix& P, double threshold);

// Minimum-cost one-to-one assignment on a dense rectangular cost
// matrix; returns the min(n, m) pairs and their total cost. O(n^2 m)
// shortest augmenting paths. Ties between equal-cost assignments
// resolve deterministically.
struct HungarianResult {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  double total_cost = 0.0;
};
HungarianResult hungarian(const Eigen::MatrixXd& cost);

// (1-lambda) * pooled sample covariance of the stacked descriptor rows
// + lambda * mean-variance * I. Fewer than two rows, or data with zero
// variance, fall back to the identity so the result stays invertible.
Eigen::MatrixXd pooled_covariance(const Eigen::MatrixXd& FA, const Eigen::MatrixXd& FB,
                                  double lambda);

// Hungarian baselines over descriptor distances. Scores for ranking are
// the negated costs.
enum class BaselineKind { L2, Mahalanobis, Projected };
struct BaselineResult {
  Eigen::MatrixXd cost;  // m_A x m_B distances
  MatchResult result;
};
// projection is required for BaselineKind::Projected and ignored
// otherwise; shrinkage is the Mahalanobis covariance mix-in.
BaselineResult baseline_match(const Eigen::MatrixXd& FA, const Eigen::MatrixXd& FB,
                              BaselineKind kind, const Mlp* projection = nullptr,
                              double shrinkage = 0.1);

// End-to-end forward pass with every intermediate needed for the
// backward sweep. Degenerate sides (m_A == 0 or m_B == 0) produce the
// closed-form assignment without running Sinkhorn.
struct MatchForward {
  Eigen::MatrixXd FA, FB;  // inputs after optional normalization
  Eigen::MatrixXd HA, HB;
  ScoreMatrix S;
  DustbinTrace dust_a, dust_b;  // adaptive variant only
  Eigen::VectorXd zA, zB;
  Eigen::MatrixXd augmented;
  SinkhornTrace sinkhorn;
  bool degenerate = false;  // closed-form path, no gradients available
  Eigen::MatrixXd P;        // final assignment, always set
};
MatchForward forward_match(const MatcherParams& params, const Eigen::MatrixXd& FA,
                           const Eigen::MatrixXd& FB);

// Checkpoint and result documents (reid3d-params/1).
void save_matcher_params(const MatcherParams& params, const std::string& path);
MatcherParams load_matcher_params(const std::string& path);
void save_projection(const Mlp& projection, int descriptor_dim, const std::string& path);
Mlp load_projection(const std::string& path);
void save_match_result(const MatchResult& result, const std::string& path);

}  // namespace reid3d::matcher
