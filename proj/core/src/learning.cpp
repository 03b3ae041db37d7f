#include "reid3d/learning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "reid3d/errors.hpp"

namespace reid3d::learning {

namespace {
const double kLogClamp = std::log(1e-30);
}

void validate_supervision(const SupervisedEpisode& ep) {
  const int mA = static_cast<int>(ep.FA.rows()), mB = static_cast<int>(ep.FB.rows());
  std::vector<int> a_seen(mA, 0), b_seen(mB, 0);
  const auto touch = [](std::vector<int>& seen, int idx, const char* what) {
    if (idx < 0 || idx >= static_cast<int>(seen.size()))
      throw DataError(std::string("supervision: ") + what + " index " +
                      std::to_string(idx) + " out of range");
    if (++seen[idx] > 1)
      throw DataError(std::string("supervision: ") + what + " index " +
                      std::to_string(idx) + " referenced twice");
  };
  for (const auto& [i, j] : ep.matches) {
    touch(a_seen, i, "A");
    touch(b_seen, j, "B");
  }
  for (int i : ep.unmatched_a) touch(a_seen, i, "A");
  for (int j : ep.unmatched_b) touch(b_seen, j, "B");
  for (int i = 0; i < mA; ++i)
    if (!a_seen[i]) throw DataError("supervision: A index " + std::to_string(i) + " uncovered");
  for (int j = 0; j < mB; ++j)
    if (!b_seen[j]) throw DataError("supervision: B index " + std::to_string(j) + " uncovered");
}

double nll_loss(const Eigen::MatrixXd& log_p, const SupervisedEpisode& ep) {
  const Eigen::Index mA = log_p.rows() - 1, mB = log_p.cols() - 1;
  double loss = 0.0;
  for (const auto& [i, j] : ep.matches) loss -= std::max(log_p(i, j), kLogClamp);
  for (int i : ep.unmatched_a) loss -= std::max(log_p(i, mB), kLogClamp);
  for (int j : ep.unmatched_b) loss -= std::max(log_p(mA, j), kLogClamp);
  return loss;
}

Eigen::MatrixXd nll_loss_grad(const Eigen::MatrixXd& log_p, const SupervisedEpisode& ep) {
  const Eigen::Index mA = log_p.rows() - 1, mB = log_p.cols() - 1;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(mA + 1, mB + 1);
  const auto hit = [&](Eigen::Index i, Eigen::Index j) {
    if (log_p(i, j) > kLogClamp) g(i, j) -= 1.0;
  };
  for (const auto& [i, j] : ep.matches) hit(i, j);
  for (int i : ep.unmatched_a) hit(i, mB);
  for (int j : ep.unmatched_b) hit(mA, j);
  return g;
}

namespace {

// Reverse of the unrolled log-domain Sinkhorn loop. Returns dL/dS' given
// dL/dlogP, using the stored per-iteration potentials.
Eigen::MatrixXd sinkhorn_backward(const matcher::SinkhornTrace& t,
                                  const Eigen::MatrixXd& dlog_p, double tau) {
  const int T = static_cast<int>(t.u.size());
  Eigen::MatrixXd dZ = dlog_p;
  Eigen::VectorXd du = dlog_p.rowwise().sum();
  Eigen::VectorXd dv = dlog_p.colwise().sum().transpose();

  for (int it = T - 1; it >= 0; --it) {
    const Eigen::VectorXd& u_t = t.u[it];
    const Eigen::VectorXd& v_t = t.v[it + 1];
    const Eigen::VectorXd& v_prev = t.v[it];

    // v_t = log_b - LSE_i(Z + u_t): softmax weights over rows.
    const Eigen::MatrixXd Wv =
        ((t.Z.colwise() + u_t).rowwise() + (v_t - t.log_b).transpose())
            .array()
            .exp();
    dZ.noalias() -= Wv * dv.asDiagonal();
    du.noalias() -= Wv * dv;

    // u_t = log_a - LSE_j(Z + v_prev): softmax weights over columns.
    const Eigen::MatrixXd Wu =
        ((t.Z.rowwise() + v_prev.transpose()).colwise() + (u_t - t.log_a))
            .array()
            .exp();
    dZ.noalias() -= du.asDiagonal() * Wu;
    dv.noalias() = -(Wu.transpose() * du);
    du.setZero();
  }
  // v[0] is a constant; dv dies here.
  return dZ / tau;
}

}  // namespace

matcher::MatcherGrads backward_match(const matcher::MatcherParams& params,
                                     const matcher::MatchForward& fwd,
                                     const Eigen::MatrixXd& dlog_p) {
  if (fwd.degenerate)
    throw std::invalid_argument("backward_match: degenerate forward has no gradients");
  const Eigen::Index mA = fwd.HA.rows(), mB = fwd.HB.rows(), d = params.d_out;
  matcher::MatcherGrads g = matcher::MatcherGrads::zeros_like(params);

  const Eigen::MatrixXd dAug = sinkhorn_backward(fwd.sinkhorn, dlog_p, params.tau);
  const Eigen::MatrixXd dS = dAug.topLeftCorner(mA, mB);
  const Eigen::VectorXd dzA = dAug.col(mB).head(mA);
  const Eigen::VectorXd dzB = dAug.row(mA).head(mB).transpose();
  const double dcorner = dAug(mA, mB);

  Eigen::MatrixXd dHA = Eigen::MatrixXd::Zero(mA, d);
  Eigen::MatrixXd dHB = Eigen::MatrixXd::Zero(mB, d);

  if (params.variant == matcher::DustbinVariant::Fixed) {
    g.alpha = dzA.sum() + dzB.sum() + dcorner;
  } else {
    // One side of the adaptive dustbin head: dz flows through the
    // dustbin MLP, the attended feature, the softmax and the attention
    // MLP; dPrimary/dOther pick up every contribution.
    const auto dustbin_backward = [&](const matcher::DustbinTrace& trace,
                                      const Eigen::VectorXd& dz,
                                      const Eigen::MatrixXd& H_other,
                                      Eigen::MatrixXd& dPrimary,
                                      Eigen::MatrixXd& dOther) {
      const Eigen::Index m = dz.size(), mo = H_other.rows();
      const Eigen::MatrixXd dXdust =
          params.dustbin_mlp.backward(trace.dust_cache, dz, g.dustbin_mlp);
      dPrimary += dXdust.leftCols(d);
      const Eigen::MatrixXd da = dXdust.rightCols(d);

      // attended = softmax * H_other
      const Eigen::MatrixXd dsoft = da * H_other.transpose();
      dOther.noalias() += trace.softmax.transpose() * da;

      Eigen::MatrixXd dlogits(m, mo);
      for (Eigen::Index i = 0; i < m; ++i) {
        const double dot = dsoft.row(i).dot(trace.softmax.row(i));
        dlogits.row(i) =
            trace.softmax.row(i).cwiseProduct((dsoft.row(i).array() - dot).matrix());
      }
      Eigen::MatrixXd dlogits_col(m * mo, 1);
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < mo; ++j) dlogits_col(i * mo + j, 0) = dlogits(i, j);
      const Eigen::MatrixXd dXatt =
          params.attention_mlp.backward(trace.att_cache, dlogits_col, g.attention_mlp);
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < mo; ++j) {
          dPrimary.row(i) += dXatt.row(i * mo + j).head(d);
          dOther.row(j) += dXatt.row(i * mo + j).tail(d);
        }
    };
    dustbin_backward(fwd.dust_a, dzA, fwd.HB, dHA, dHB);
    dustbin_backward(fwd.dust_b, dzB, fwd.HA, dHB, dHA);
  }

  dHA.noalias() += dS * fwd.HB;
  dHB.noalias() += dS.transpose() * fwd.HA;

  g.W.noalias() += dHA.transpose() * fwd.FA;
  g.W.noalias() += dHB.transpose() * fwd.FB;
  g.b += dHA.colwise().sum().transpose();
  g.b += dHB.colwise().sum().transpose();
  return g;
}

EpisodeGradient episode_gradient(const matcher::MatcherParams& params,
                                 const SupervisedEpisode& ep) {
  validate_supervision(ep);
  const matcher::MatchForward fwd = matcher::forward_match(params, ep.FA, ep.FB);
  if (fwd.degenerate)
    throw DataError("episode_gradient: episodes must have objects on both sides");
  EpisodeGradient out;
  out.loss = nll_loss(fwd.sinkhorn.log_p, ep);
  out.grads = backward_match(params, fwd, nll_loss_grad(fwd.sinkhorn.log_p, ep));
  return out;
}

double episode_loss(const matcher::MatcherParams& params, const SupervisedEpisode& ep) {
  const matcher::MatchForward fwd = matcher::forward_match(params, ep.FA, ep.FB);
  if (fwd.degenerate)
    throw DataError("episode_loss: episodes must have objects on both sides");
  return nll_loss(fwd.sinkhorn.log_p, ep);
}

Eigen::VectorXd finite_difference_gradient(const matcher::MatcherParams& params,
                                           const SupervisedEpisode& ep, double h) {
  matcher::MatcherParams p = params;
  Eigen::VectorXd theta = p.pack();
  Eigen::VectorXd grad(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + h;
    p.unpack(theta);
    const double lp = episode_loss(p, ep);
    theta[k] = saved - h;
    p.unpack(theta);
    const double lm = episode_loss(p, ep);
    theta[k] = saved;
    grad[k] = (lp - lm) / (2.0 * h);
  }
  p.unpack(theta);
  return grad;
}

GradientCheck gradient_check(const matcher::MatcherParams& params,
                             const SupervisedEpisode& ep, double h) {
  const Eigen::VectorXd analytic = episode_gradient(params, ep).grads.pack();
  const Eigen::VectorXd fd = finite_difference_gradient(params, ep, h);
  GradientCheck out;
  for (Eigen::Index k = 0; k < analytic.size(); ++k) {
    const double denom = std::max({std::abs(analytic[k]), std::abs(fd[k]), 1e-4});
    const double rel = std::abs(analytic[k] - fd[k]) / denom;
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_index = static_cast<std::size_t>(k);
      out.analytic_at_worst = analytic[k];
      out.fd_at_worst = fd[k];
    }
  }
  return out;
}

double min_abs_preactivation(const matcher::MatchForward& fwd) {
  double mn = std::numeric_limits<double>::infinity();
  const auto scan = [&](const MlpCache& cache) {
    // last layer has no ReLU; only hidden pre-activations matter
    for (std::size_t i = 0; i + 1 < cache.pre.size(); ++i)
      if (cache.pre[i].size() > 0)
        mn = std::min(mn, cache.pre[i].cwiseAbs().minCoeff());
  };
  scan(fwd.dust_a.att_cache);
  scan(fwd.dust_a.dust_cache);
  scan(fwd.dust_b.att_cache);
  scan(fwd.dust_b.dust_cache);
  return mn;
}

AdamOptimizer::AdamOptimizer(std::size_t n, const AdamConfig& cfg)
    : cfg_(cfg),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

void AdamOptimizer::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  theta -= (cfg_.lr / bc1) * m_.cwiseQuotient(
               ((v_ / bc2).cwiseSqrt().array() + cfg_.eps).matrix());
}

std::vector<LossCurvePoint> train_matcher(matcher::MatcherParams& params,
                                          const std::vector<SupervisedEpisode>& train,
                                          const std::vector<SupervisedEpisode>& val,
                                          const TrainConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("train_matcher: no training episodes");
  for (const auto& ep : train) validate_supervision(ep);

  AdamConfig acfg;
  acfg.lr = cfg.lr;
  Eigen::VectorXd theta = params.pack();
  AdamOptimizer adam(theta.size(), acfg);

  std::vector<LossCurvePoint> curve;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng::derive(cfg.seed, 0x7261696eull + static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      matcher::MatcherGrads batch = matcher::MatcherGrads::zeros_like(params);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        EpisodeGradient eg = episode_gradient(params, train[order[k]]);
        loss_sum += eg.loss;
        batch.accumulate(eg.grads, inv);
      }
      adam.step(theta, batch.pack());
      params.unpack(theta);
    }
    LossCurvePoint pt;
    pt.epoch = epoch;
    pt.mean_loss = loss_sum / static_cast<double>(train.size());
    if (!val.empty()) {
      double acc = 0.0;
      int counted = 0;
      for (const auto& ep : val) {
        if (ep.FB.rows() == 0) continue;
        acc += supervised_match_accuracy(params, ep);
        ++counted;
      }
      if (counted > 0) pt.val_accuracy = acc / counted;
    }
    curve.push_back(pt);
  }
  return curve;
}

double supervised_match_accuracy(const matcher::MatcherParams& params,
                                 const SupervisedEpisode& ep) {
  const int mB = static_cast<int>(ep.FB.rows());
  if (mB == 0) return std::numeric_limits<double>::quiet_NaN();
  const matcher::MatchForward fwd = matcher::forward_match(params, ep.FA, ep.FB);
  const matcher::MatchResult res =
      matcher::extract_matches(fwd.P, params.match_threshold);

  std::vector<char> gt_unmatched_b(mB, 0);
  for (int j : ep.unmatched_b) gt_unmatched_b[j] = 1;
  std::vector<int> gt_partner_of_b(mB, -1);
  for (const auto& [i, j] : ep.matches) gt_partner_of_b[j] = i;

  int correct = 0;
  for (std::size_t k = 0; k < res.matches.size(); ++k) {
    const auto& [i, j] = res.matches[k];
    if (gt_partner_of_b[j] == i) ++correct;
  }
  for (int j : res.unmatched_b)
    if (gt_unmatched_b[j]) ++correct;
  return 100.0 * correct / mB;
}

void save_loss_curve(const std::vector<LossCurvePoint>& curve, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path);
  f << "epoch,mean_loss,val_accuracy\n";
  char buf[64];
  for (const auto& pt : curve) {
    std::snprintf(buf, sizeof buf, "%.17g", pt.mean_loss);
    f << pt.epoch << ',' << buf << ',';
    if (std::isfinite(pt.val_accuracy)) {
      std::snprintf(buf, sizeof buf, "%.17g", pt.val_accuracy);
      f << buf;
    }
    f << '\n';
  }
  if (!f) throw DataError("write failed: " + path);
}

double triplet_loss(const Eigen::VectorXd& a, const Eigen::VectorXd& p,
                    const Eigen::VectorXd& n, double margin) {
  return std::max((a - p).norm() - (a - n).norm() + margin, 0.0);
}

std::vector<TripletSample> mine_triplets(const Eigen::MatrixXd& FA,
                                         const Eigen::MatrixXd& FB,
                                         const std::vector<std::pair<int, int>>& matches,
                                         Rng& rng) {
  std::vector<TripletSample> out;
  const int mB = static_cast<int>(FB.rows());
  if (mB < 2) return out;
  for (const auto& [i, j] : matches) {
    if (i < 0 || i >= FA.rows() || j < 0 || j >= mB)
      throw DataError("mine_triplets: match index out of range");
    int neg = static_cast<int>(rng.uniform_index(mB - 1));
    if (neg >= j) ++neg;  // uniform over B \ {j}
    TripletSample t;
    t.anchor = FA.row(i).transpose();
    t.positive = FB.row(j).transpose();
    t.negative = FB.row(neg).transpose();
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

// Gradient of ||x|| wrt x, zero at the origin.
Eigen::VectorXd norm_grad(const Eigen::VectorXd& x) {
  const double n = x.norm();
  if (n < 1e-12) return Eigen::VectorXd::Zero(x.size());
  return x / n;
}

}  // namespace

std::vector<LossCurvePoint> train_projection(Mlp& projection,
                                             const std::vector<TripletSample>& triplets,
                                             const TripletTrainConfig& cfg) {
  if (triplets.empty())
    throw std::invalid_argument("train_projection: no triplet samples");
  const Eigen::Index d = triplets.front().anchor.size();

  Eigen::VectorXd theta(static_cast<Eigen::Index>(projection.parameter_count()));
  projection.pack(theta.data());
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  AdamOptimizer adam(theta.size(), acfg);

  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LossCurvePoint> curve;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng::derive(cfg.seed, 0x74726970ull + static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const Eigen::Index bs = static_cast<Eigen::Index>(end - start);

      // Rows [0, bs) anchors, [bs, 2bs) positives, [2bs, 3bs) negatives.
      Eigen::MatrixXd X(3 * bs, d);
      for (Eigen::Index k = 0; k < bs; ++k) {
        const TripletSample& t = triplets[order[start + k]];
        X.row(k) = t.anchor.transpose();
        X.row(bs + k) = t.positive.transpose();
        X.row(2 * bs + k) = t.negative.transpose();
      }
      MlpCache cache;
      const Eigen::MatrixXd G = projection.forward(X, &cache);
      Eigen::MatrixXd dG = Eigen::MatrixXd::Zero(G.rows(), G.cols());
      const double inv = 1.0 / static_cast<double>(bs);
      for (Eigen::Index k = 0; k < bs; ++k) {
        const Eigen::VectorXd ga = G.row(k).transpose();
        const Eigen::VectorXd gp = G.row(bs + k).transpose();
        const Eigen::VectorXd gn = G.row(2 * bs + k).transpose();
        const double l = (ga - gp).norm() - (ga - gn).norm() + cfg.margin;
        loss_sum += std::max(l, 0.0);
        if (l <= 0.0) continue;
        const Eigen::VectorXd dp = norm_grad(ga - gp);
        const Eigen::VectorXd dn = norm_grad(ga - gn);
        dG.row(k) += inv * (dp - dn).transpose();
        dG.row(bs + k) -= inv * dp.transpose();
        dG.row(2 * bs + k) += inv * dn.transpose();
      }
      Mlp grads = Mlp::zeros_like(projection);
      projection.backward(cache, dG, grads);
      Eigen::VectorXd gvec(theta.size());
      grads.pack(gvec.data());
      adam.step(theta, gvec);
      projection.unpack(theta.data());
    }
    LossCurvePoint pt;
    pt.epoch = epoch;
    pt.mean_loss = loss_sum / static_cast<double>(triplets.size());
    curve.push_back(pt);
  }
  return curve;
}

}  // namespace reid3d::learning
