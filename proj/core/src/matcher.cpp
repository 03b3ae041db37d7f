#include "reid3d/matcher.hpp"

#include <algorithm>
#include <cmath>

#include "reid3d/errors.hpp"
#include "reid3d/rng.hpp"

namespace reid3d::matcher {

MatcherParams MatcherParams::init(int descriptor_dim, int d_out, int hidden1,
                                  int hidden2, DustbinVariant variant,
                                  std::uint64_t seed) {
  if (descriptor_dim <= 0 || d_out <= 0 || hidden1 <= 0 || hidden2 <= 0)
    throw std::invalid_argument("MatcherParams::init: dims must be positive");
  MatcherParams p;
  p.descriptor_dim = descriptor_dim;
  p.d_out = d_out;
  p.hidden1 = hidden1;
  p.hidden2 = hidden2;
  p.variant = variant;

  Rng rng(seed);
  p.W = Eigen::MatrixXd::Zero(d_out, descriptor_dim);
  for (int i = 0; i < std::min(d_out, descriptor_dim); ++i) p.W(i, i) = 1.0;
  for (Eigen::Index r = 0; r < p.W.rows(); ++r)
    for (Eigen::Index c = 0; c < p.W.cols(); ++c) p.W(r, c) += rng.uniform(-0.01, 0.01);
  p.b = Eigen::VectorXd::Zero(d_out);
  p.attention_mlp = Mlp::make({2 * d_out, hidden1, hidden2, 1});
  p.attention_mlp.init_xavier(rng);
  p.dustbin_mlp = Mlp::make({2 * d_out, hidden1, hidden2, 1});
  p.dustbin_mlp.init_xavier(rng);
  p.alpha = 1.0;
  return p;
}

std::size_t MatcherParams::parameter_count() const {
  return static_cast<std::size_t>(W.size()) + b.size() +
         attention_mlp.parameter_count() + dustbin_mlp.parameter_count() + 1;
}

Eigen::VectorXd MatcherParams::pack() const {
  Eigen::VectorXd theta(parameter_count());
  double* dst = theta.data();
  for (Eigen::Index r = 0; r < W.rows(); ++r)
    for (Eigen::Index c = 0; c < W.cols(); ++c) *dst++ = W(r, c);
  for (Eigen::Index i = 0; i < b.size(); ++i) *dst++ = b(i);
  attention_mlp.pack(dst);
  dst += attention_mlp.parameter_count();
  dustbin_mlp.pack(dst);
  dst += dustbin_mlp.parameter_count();
  *dst++ = alpha;
  return theta;
}

void MatcherParams::unpack(const Eigen::VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != parameter_count())
    throw std::invalid_argument("MatcherParams::unpack: size mismatch");
  const double* src = theta.data();
  for (Eigen::Index r = 0; r < W.rows(); ++r)
    for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = *src++;
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = *src++;
  attention_mlp.unpack(src);
  src += attention_mlp.parameter_count();
  dustbin_mlp.unpack(src);
  src += dustbin_mlp.parameter_count();
  alpha = *src++;
}

MatcherGrads MatcherGrads::zeros_like(const MatcherParams& p) {
  MatcherGrads g;
  g.W = Eigen::MatrixXd::Zero(p.W.rows(), p.W.cols());
  g.b = Eigen::VectorXd::Zero(p.b.size());
  g.attention_mlp = Mlp::zeros_like(p.attention_mlp);
  g.dustbin_mlp = Mlp::zeros_like(p.dustbin_mlp);
  g.alpha = 0.0;
  return g;
}

void MatcherGrads::accumulate(const MatcherGrads& other, double scale) {
  W += scale * other.W;
  b += scale * other.b;
  attention_mlp.accumulate(other.attention_mlp, scale);
  dustbin_mlp.accumulate(other.dustbin_mlp, scale);
  alpha += scale * other.alpha;
}

Eigen::VectorXd MatcherGrads::pack() const {
  const std::size_t n = static_cast<std::size_t>(W.size()) + b.size() +
                        attention_mlp.parameter_count() +
                        dustbin_mlp.parameter_count() + 1;
  Eigen::VectorXd theta(n);
  double* dst = theta.data();
  for (Eigen::Index r = 0; r < W.rows(); ++r)
    for (Eigen::Index c = 0; c < W.cols(); ++c) *dst++ = W(r, c);
  for (Eigen::Index i = 0; i < b.size(); ++i) *dst++ = b(i);
  attention_mlp.pack(dst);
  dst += attention_mlp.parameter_count();
  dustbin_mlp.pack(dst);
  dst += dustbin_mlp.parameter_count();
  *dst++ = alpha;
  return theta;
}

Eigen::MatrixXd project_descriptors(const MatcherParams& params,
                                    const Eigen::MatrixXd& F) {
  if (F.rows() == 0) return Eigen::MatrixXd(0, params.d_out);
  if (F.cols() != params.descriptor_dim)
    throw DataError("project_descriptors: descriptor dim " + std::to_string(F.cols()) +
                    " != matcher dim " + std::to_string(params.descriptor_dim));
  Eigen::MatrixXd X = F;
  if (params.l2_normalize_input) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double n = X.row(i).norm();
      if (n > 0) X.row(i) /= n;
    }
  }
  Eigen::MatrixXd H = X * params.W.transpose();
  H.rowwise() += params.b.transpose();
  return H;
}

ScoreMatrix score_matrix(const Eigen::MatrixXd& HA, const Eigen::MatrixXd& HB) {
  return HA * HB.transpose();
}

Eigen::VectorXd dustbin_scores(const MatcherParams& params, const Eigen::MatrixXd& HA,
                               const Eigen::MatrixXd& HB, DustbinTrace* trace) {
  const Eigen::Index mA = HA.rows(), mB = HB.rows(), d = params.d_out;
  if (mA == 0 || mB == 0) return Eigen::VectorXd::Zero(mA);

  Eigen::MatrixXd Xatt(mA * mB, 2 * d);
  for (Eigen::Index i = 0; i < mA; ++i)
    for (Eigen::Index j = 0; j < mB; ++j) {
      Xatt.row(i * mB + j).head(d) = HA.row(i);
      Xatt.row(i * mB + j).tail(d) = HB.row(j);
    }
  DustbinTrace local;
  DustbinTrace& t = trace ? *trace : local;
  t.Xatt = std::move(Xatt);
  const Eigen::MatrixXd logits_col = params.attention_mlp.forward(t.Xatt, &t.att_cache);
  t.logits = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                            Eigen::RowMajor>>(logits_col.data(), mA, mB);

  t.softmax.resize(mA, mB);
  for (Eigen::Index i = 0; i < mA; ++i) {
    const double mx = t.logits.row(i).maxCoeff();
    Eigen::ArrayXd e = (t.logits.row(i).array() - mx).exp();
    t.softmax.row(i) = (e / e.sum()).matrix();
  }
  t.attended = t.softmax * HB;

  t.Xdust.resize(mA, 2 * d);
  t.Xdust.leftCols(d) = HA;
  t.Xdust.rightCols(d) = t.attended;
  const Eigen::MatrixXd z = params.dustbin_mlp.forward(t.Xdust, &t.dust_cache);
  return z.col(0);
}

Eigen::MatrixXd augment_with_dustbins(const ScoreMatrix& S, const Eigen::VectorXd& zA,
                                      const Eigen::VectorXd& zB, double corner) {
  const Eigen::Index mA = S.rows(), mB = S.cols();
  if (zA.size() != mA || zB.size() != mB)
    throw std::invalid_argument("augment_with_dustbins: dustbin vector shape mismatch");
  Eigen::MatrixXd out(mA + 1, mB + 1);
  out.topLeftCorner(mA, mB) = S;
  out.col(mB).head(mA) = zA;
  out.row(mA).head(mB) = zB.transpose();
  out(mA, mB) = corner;
  return out;
}

namespace {

Eigen::VectorXd rowwise_lse(const Eigen::MatrixXd& M) {
  Eigen::VectorXd out(M.rows());
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    const double mx = M.row(i).maxCoeff();
    out[i] = mx + std::log((M.row(i).array() - mx).exp().sum());
  }
  return out;
}

Eigen::VectorXd colwise_lse(const Eigen::MatrixXd& M) {
  Eigen::VectorXd out(M.cols());
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    const double mx = M.col(j).maxCoeff();
    out[j] = mx + std::log((M.col(j).array() - mx).exp().sum());
  }
  return out;
}

}  // namespace

SinkhornTrace sinkhorn_log(const Eigen::MatrixXd& augmented, int iterations, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("sinkhorn_log: tau must be > 0");
  if (iterations < 1) throw std::invalid_argument("sinkhorn_log: iterations must be >= 1");
  if (!augmented.allFinite())
    throw NumericError("sinkhorn_log: non-finite augmented scores");
  const Eigen::Index mA = augmented.rows() - 1, mB = augmented.cols() - 1;
  if (mA < 1 || mB < 1)
    throw std::invalid_argument("sinkhorn_log: need at least one object per side");

  SinkhornTrace t;
  t.Z = augmented / tau;
  t.log_a = Eigen::VectorXd::Zero(mA + 1);
  t.log_a[mA] = std::log(static_cast<double>(mB));
  t.log_b = Eigen::VectorXd::Zero(mB + 1);
  t.log_b[mB] = std::log(static_cast<double>(mA));

  t.u.reserve(iterations + 1);
  t.v.reserve(iterations + 1);
  t.v.push_back(Eigen::VectorXd::Zero(mB + 1));  // v[0]
  Eigen::VectorXd u = Eigen::VectorXd::Zero(mA + 1);
  Eigen::VectorXd v = t.v[0];
  for (int it = 0; it < iterations; ++it) {
    u = t.log_a - rowwise_lse(t.Z.rowwise() + v.transpose());
    t.u.push_back(u);
    v = t.log_b - colwise_lse(t.Z.colwise() + u);
    t.v.push_back(v);
  }
  t.log_p = (t.Z.colwise() + u).rowwise() + v.transpose();
  t.P = t.log_p.array().exp();
  if (!t.P.allFinite()) throw NumericError("sinkhorn_log: non-finite assignment");
  return t;
}

AssignmentMatrix sinkhorn(const Eigen::MatrixXd& augmented, int iterations, double tau) {
  return sinkhorn_log(augmented, iterations, tau).P;
}

MatchResult extract_matches(const AssignmentMatrix& P, double threshold) {
  const Eigen::Index mA = P.rows() - 1, mB = P.cols() - 1;
  MatchResult r;
  if (mA < 0 || mB < 0) return r;

  std::vector<Eigen::Index> row_best(mA), col_best(mB);
  for (Eigen::Index i = 0; i < mA; ++i) P.row(i).maxCoeff(&row_best[i]);
  for (Eigen::Index j = 0; j < mB; ++j) P.col(j).maxCoeff(&col_best[j]);

  std::vector<bool> a_matched(mA, false), b_matched(mB, false);
  for (Eigen::Index i = 0; i < mA; ++i) {
    const Eigen::Index j = row_best[i];
    if (j < mB && col_best[j] == i && P(i, j) >= threshold) {
      r.matches.emplace_back(static_cast<int>(i), static_cast<int>(j));
      r.match_scores.push_back(P(i, j));
      a_matched[i] = b_matched[j] = true;
    }
  }
  for (Eigen::Index i = 0; i < mA; ++i)
    if (!a_matched[i]) r.unmatched_a.push_back(static_cast<int>(i));
  for (Eigen::Index j = 0; j < mB; ++j)
    if (!b_matched[j]) r.unmatched_b.push_back(static_cast<int>(j));
  return r;
}

Eigen::MatrixXd pooled_covariance(const Eigen::MatrixXd& FA, const Eigen::MatrixXd& FB,
                                  double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("pooled_covariance: lambda must be in [0, 1]");
  const Eigen::Index d = std::max(FA.cols(), FB.cols());
  const Eigen::Index n = FA.rows() + FB.rows();
  if (n < 2 || d == 0) return Eigen::MatrixXd::Identity(d, d);

  Eigen::MatrixXd X(n, d);
  X.topRows(FA.rows()) = FA;
  X.bottomRows(FB.rows()) = FB;
  const Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;
  Eigen::MatrixXd S = (X.transpose() * X) / static_cast<double>(n - 1);
  const double mean_var = S.trace() / static_cast<double>(d);
  if (!(mean_var > 0.0)) return Eigen::MatrixXd::Identity(d, d);
  return (1.0 - lambda) * S +
         lambda * mean_var * Eigen::MatrixXd::Identity(d, d);
}

BaselineResult baseline_match(const Eigen::MatrixXd& FA, const Eigen::MatrixXd& FB,
                              BaselineKind kind, const Mlp* projection,
                              double shrinkage) {
  const Eigen::Index mA = FA.rows(), mB = FB.rows();
  BaselineResult out;
  out.cost.resize(mA, mB);

  Eigen::MatrixXd GA = FA, GB = FB;
  if (kind == BaselineKind::Projected) {
    if (!projection)
      throw std::invalid_argument("baseline_match: Projected kind needs a projection");
    GA = projection->forward(FA);
    GB = projection->forward(FB);
  }

  if (kind == BaselineKind::Mahalanobis) {
    const Eigen::MatrixXd sigma = pooled_covariance(FA, FB, shrinkage);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw NumericError("baseline_match: covariance not positive definite");
    for (Eigen::Index i = 0; i < mA; ++i)
      for (Eigen::Index j = 0; j < mB; ++j) {
        const Eigen::VectorXd diff = (GA.row(i) - GB.row(j)).transpose();
        const double q = diff.dot(llt.solve(diff));
        out.cost(i, j) = std::sqrt(std::max(q, 0.0));
      }
  } else {
    for (Eigen::Index i = 0; i < mA; ++i)
      for (Eigen::Index j = 0; j < mB; ++j)
        out.cost(i, j) = (GA.row(i) - GB.row(j)).norm();
  }

  const HungarianResult h = hungarian(out.cost);
  std::vector<bool> a_used(mA, false), b_used(mB, false);
  for (const auto& [i, j] : h.pairs) {
    out.result.matches.emplace_back(i, j);
    out.result.match_scores.push_back(-out.cost(i, j));
    a_used[i] = b_used[j] = true;
  }
  for (Eigen::Index i = 0; i < mA; ++i)
    if (!a_used[i]) out.result.unmatched_a.push_back(static_cast<int>(i));
  for (Eigen::Index j = 0; j < mB; ++j)
    if (!b_used[j]) out.result.unmatched_b.push_back(static_cast<int>(j));
  return out;
}

MatchForward forward_match(const MatcherParams& params, const Eigen::MatrixXd& FA,
                           const Eigen::MatrixXd& FB) {
  MatchForward f;
  f.FA = FA;
  f.FB = FB;
  if (params.l2_normalize_input) {
    for (Eigen::Index i = 0; i < f.FA.rows(); ++i) {
      const double n = f.FA.row(i).norm();
      if (n > 0) f.FA.row(i) /= n;
    }
    for (Eigen::Index i = 0; i < f.FB.rows(); ++i) {
      const double n = f.FB.row(i).norm();
      if (n > 0) f.FB.row(i) /= n;
    }
  }
  const Eigen::Index mA = FA.rows(), mB = FB.rows();

  if (mA == 0 || mB == 0) {
    // Closed-form limit: with one side empty every object of the other
    // side is fully absorbed by the dustbin.
    f.degenerate = true;
    f.P = Eigen::MatrixXd::Zero(mA + 1, mB + 1);
    for (Eigen::Index i = 0; i < mA; ++i) f.P(i, mB) = 1.0;
    for (Eigen::Index j = 0; j < mB; ++j) f.P(mA, j) = 1.0;
    return f;
  }

  // project_descriptors re-checks dims; normalization already applied.
  MatcherParams no_norm = params;
  no_norm.l2_normalize_input = false;
  f.HA = project_descriptors(no_norm, f.FA);
  f.HB = project_descriptors(no_norm, f.FB);
  f.S = score_matrix(f.HA, f.HB);

  double corner = 0.0;
  if (params.variant == DustbinVariant::Adaptive) {
    f.zA = dustbin_scores(params, f.HA, f.HB, &f.dust_a);
    f.zB = dustbin_scores(params, f.HB, f.HA, &f.dust_b);
  } else {
    f.zA = Eigen::VectorXd::Constant(mA, params.alpha);
    f.zB = Eigen::VectorXd::Constant(mB, params.alpha);
    corner = params.alpha;
  }
  f.augmented = augment_with_dustbins(f.S, f.zA, f.zB, corner);
  f.sinkhorn = sinkhorn_log(f.augmented, params.sinkhorn_iterations, params.tau);
  f.P = f.sinkhorn.P;
  return f;
}

}  // namespace reid3d::matcher
