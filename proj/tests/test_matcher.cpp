#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "reid3d/errors.hpp"
#include "reid3d/matcher.hpp"
#include "reid3d/rng.hpp"
#include "test_util.hpp"

using namespace reid3d;
using namespace reid3d::matcher;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double lo = -2.0, double hi = 2.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Mutual-argmax decode written straight from the definition.
MatchResult mutual_argmax_oracle(const Eigen::MatrixXd& P, double threshold) {
  const int m_a = static_cast<int>(P.rows()) - 1;
  const int m_b = static_cast<int>(P.cols()) - 1;
  MatchResult out;
  std::vector<bool> b_matched(static_cast<std::size_t>(m_b), false);
  for (int i = 0; i < m_a; ++i) {
    int best_j = 0;
    for (int j = 1; j <= m_b; ++j)
      if (P(i, j) > P(i, best_j)) best_j = j;
    bool matched = false;
    if (best_j < m_b && P(i, best_j) >= threshold) {
      int best_i = 0;
      for (int r = 1; r <= m_a; ++r)
        if (P(r, best_j) > P(best_i, best_j)) best_i = r;
      if (best_i == i) {
        out.matches.emplace_back(i, best_j);
        out.match_scores.push_back(P(i, best_j));
        b_matched[static_cast<std::size_t>(best_j)] = true;
        matched = true;
      }
    }
    if (!matched) out.unmatched_a.push_back(i);
  }
  for (int j = 0; j < m_b; ++j)
    if (!b_matched[static_cast<std::size_t>(j)]) out.unmatched_b.push_back(j);
  return out;
}

// Minimum-cost injection by exhaustive enumeration (rows into columns).
double exhaustive_assignment(const Eigen::MatrixXd& cost,
                             std::vector<std::pair<int, int>>* best_pairs = nullptr) {
  const int n_r = static_cast<int>(cost.rows());
  const int n_c = static_cast<int>(cost.cols());
  const bool transpose = n_r > n_c;
  const int k = std::min(n_r, n_c);
  const int big = std::max(n_r, n_c);
  std::vector<int> perm(static_cast<std::size_t>(big));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_perm;
  do {
    double total = 0.0;
    for (int r = 0; r < k; ++r)
      total += transpose ? cost(perm[static_cast<std::size_t>(r)], r)
                         : cost(r, perm[static_cast<std::size_t>(r)]);
    if (total < best - 1e-15) {
      best = total;
      best_perm.assign(perm.begin(), perm.begin() + k);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (best_pairs) {
    best_pairs->clear();
    for (int r = 0; r < k; ++r)
      best_pairs->emplace_back(transpose ? best_perm[static_cast<std::size_t>(r)] : r,
                               transpose ? r : best_perm[static_cast<std::size_t>(r)]);
    std::sort(best_pairs->begin(), best_pairs->end());
  }
  return best;
}

}  // namespace

TEST_SUITE("matcher") {
  TEST_CASE("projection matches a hand-computed product") {
    MatcherParams p = MatcherParams::init(3, 2, 4, 4, DustbinVariant::Fixed, 1);
    p.W << 1, 0, 2, 0, -1, 1;
    p.b << 0.5, -0.5;
    Eigen::MatrixXd F(2, 3);
    F << 1, 2, 3, 0, 1, 0;
    const Eigen::MatrixXd H = project_descriptors(p, F);
    REQUIRE(H.rows() == 2);
    REQUIRE(H.cols() == 2);
    CHECK(H(0, 0) == doctest::Approx(7.5));
    CHECK(H(0, 1) == doctest::Approx(0.5));
    CHECK(H(1, 0) == doctest::Approx(0.5));
    CHECK(H(1, 1) == doctest::Approx(-1.5));
  }

  TEST_CASE("score matrix is the bilinear product") {
    Eigen::MatrixXd HA(2, 2), HB(2, 2);
    HA << 1, 2, 0, 1;
    HB << 3, 1, -1, 2;
    const ScoreMatrix S = score_matrix(HA, HB);
    CHECK(S(0, 0) == doctest::Approx(5.0));
    CHECK(S(0, 1) == doctest::Approx(3.0));
    CHECK(S(1, 0) == doctest::Approx(1.0));
    CHECK(S(1, 1) == doctest::Approx(2.0));
  }

  TEST_CASE("augmented layout places dustbins and corner") {
    Eigen::MatrixXd S(2, 3);
    S << 1, 2, 3, 4, 5, 6;
    Eigen::VectorXd zA(2), zB(3);
    zA << 7, 8;
    zB << 9, 10, 11;
    const Eigen::MatrixXd aug = augment_with_dustbins(S, zA, zB, 0.25);
    REQUIRE(aug.rows() == 3);
    REQUIRE(aug.cols() == 4);
    CHECK(aug.topLeftCorner(2, 3) == S);
    CHECK(aug(0, 3) == 7.0);
    CHECK(aug(1, 3) == 8.0);
    CHECK(aug(2, 0) == 9.0);
    CHECK(aug(2, 2) == 11.0);
    CHECK(aug(2, 3) == 0.25);
  }

  TEST_CASE("fixed dustbin equals adaptive with constant scores up to the corner") {
    Rng rng(41);
    const Eigen::MatrixXd S = random_matrix(rng, 3, 4);
    const double alpha = 0.6;
    const Eigen::MatrixXd fixed = augment_with_dustbins(
        S, Eigen::VectorXd::Constant(3, alpha), Eigen::VectorXd::Constant(4, alpha), alpha);
    const Eigen::MatrixXd adaptive = augment_with_dustbins(
        S, Eigen::VectorXd::Constant(3, alpha), Eigen::VectorXd::Constant(4, alpha), 0.0);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 5; ++j)
        if (!(i == 3 && j == 4)) CHECK(fixed(i, j) == adaptive(i, j));
    CHECK(fixed(3, 4) == alpha);
    CHECK(adaptive(3, 4) == 0.0);
  }

  TEST_CASE("sinkhorn satisfies the augmented marginals") {
    Rng rng(42);
    const Eigen::MatrixXd S = random_matrix(rng, 3, 3);
    Eigen::MatrixXd aug = augment_with_dustbins(S, Eigen::VectorXd::Constant(3, 0.5),
                                                Eigen::VectorXd::Constant(3, 0.5), 0.0);
    const AssignmentMatrix P = sinkhorn(aug, 100, 1.0);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(P.row(i).sum() - 1.0) < 1e-6);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(P.col(j).sum() - 1.0) < 1e-6);
    CHECK(std::abs(P.row(3).sum() - 3.0) < 1e-6);
    CHECK(std::abs(P.col(3).sum() - 3.0) < 1e-6);
    CHECK(P.minCoeff() >= 0.0);
  }

  TEST_CASE("sinkhorn matches the 2x2 closed form") {
    // For a single object pair the augmented problem is 2x2 doubly
    // stochastic: P has the form [[p, 1-p], [1-p, p]] and the cross
    // ratio p^2/(1-p)^2 equals exp((s00 + s11 - s01 - s10) / tau).
    Rng rng(43);
    for (int t = 0; t < 20; ++t) {
      Eigen::MatrixXd aug = random_matrix(rng, 2, 2, -1.0, 1.0);
      const double tau = rng.uniform(0.8, 1.5);
      const double root =
          std::exp((aug(0, 0) + aug(1, 1) - aug(0, 1) - aug(1, 0)) / (2.0 * tau));
      const double p = root / (1.0 + root);
      const AssignmentMatrix P = sinkhorn(aug, 300, tau);
      CHECK(std::abs(P(0, 0) - p) < 1e-9);
      CHECK(std::abs(P(1, 1) - p) < 1e-9);
      CHECK(std::abs(P(0, 1) - (1.0 - p)) < 1e-9);
    }
  }

  TEST_CASE("sinkhorn is shift invariant") {
    Rng rng(44);
    const Eigen::MatrixXd aug = random_matrix(rng, 6, 7);
    const AssignmentMatrix P0 = sinkhorn(aug, 100, 1.0);
    const AssignmentMatrix P1 =
        sinkhorn((aug.array() + 3.7).matrix(), 100, 1.0);
    CHECK((P0 - P1).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("sinkhorn rejects non-finite input") {
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(2, 2);
    aug(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(sinkhorn(aug, 10, 1.0), NumericError);
  }

  TEST_CASE("match extraction equals the mutual-argmax oracle") {
    Rng rng(45);
    for (int t = 0; t < 200; ++t) {
      const int m_a = static_cast<int>(rng.uniform_int(1, 5));
      const int m_b = static_cast<int>(rng.uniform_int(1, 6));
      const Eigen::MatrixXd P = random_matrix(rng, m_a + 1, m_b + 1, 0.0, 1.0);
      const MatchResult got = extract_matches(P, 0.2);
      const MatchResult want = mutual_argmax_oracle(P, 0.2);
      CHECK(got.matches == want.matches);
      CHECK(got.unmatched_a == want.unmatched_a);
      CHECK(got.unmatched_b == want.unmatched_b);
    }
  }

  TEST_CASE("below-threshold mutual pairs stay unmatched") {
    Eigen::MatrixXd P(2, 2);
    P << 0.15, 0.05, 0.05, 0.9;  // (0,0) is mutual but under 0.2
    const MatchResult r = extract_matches(P, 0.2);
    CHECK(r.matches.empty());
    CHECK(r.unmatched_a == std::vector<int>{0});
    CHECK(r.unmatched_b == std::vector<int>{0});
    const MatchResult kept = extract_matches(P, 0.1);
    REQUIRE(kept.matches.size() == 1);
    CHECK(kept.matches[0] == std::pair<int, int>(0, 0));
  }

  TEST_CASE("hungarian equals exhaustive enumeration") {
    Rng rng(46);
    for (int t = 0; t < 150; ++t) {
      const int n_r = static_cast<int>(rng.uniform_int(1, 5));
      const int n_c = static_cast<int>(rng.uniform_int(1, 5));
      const Eigen::MatrixXd cost = random_matrix(rng, n_r, n_c, 0.0, 10.0);
      const HungarianResult got = hungarian(cost);
      const double want = exhaustive_assignment(cost);
      CHECK(got.total_cost == doctest::Approx(want).epsilon(1e-10));
      CHECK(got.pairs.size() == static_cast<std::size_t>(std::min(n_r, n_c)));
    }
  }

  TEST_CASE("hungarian tie resolution is deterministic") {
    Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(3, 3);
    const HungarianResult a = hungarian(cost);
    const HungarianResult b = hungarian(cost);
    CHECK(a.pairs == b.pairs);
    CHECK(a.total_cost == doctest::Approx(3.0));
  }

  TEST_CASE("pooled covariance recovers an isotropic sample") {
    Rng rng(47);
    const double sigma = 0.7;
    Eigen::MatrixXd FA(1500, 4), FB(1500, 4);
    for (int i = 0; i < FA.size(); ++i) FA.data()[i] = sigma * rng.normal();
    for (int i = 0; i < FB.size(); ++i) FB.data()[i] = sigma * rng.normal() + 0.3;
    const Eigen::MatrixXd cov = pooled_covariance(FA, FB, 0.0);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const double want = i == j ? sigma * sigma : 0.0;
        CHECK(std::abs(cov(i, j) - want) < 0.05);
      }
  }

  TEST_CASE("pooled covariance falls back to identity when degenerate") {
    Eigen::MatrixXd one_row(1, 3);
    one_row << 1, 2, 3;
    const Eigen::MatrixXd cov = pooled_covariance(one_row, Eigen::MatrixXd(0, 3), 0.1);
    CHECK(cov == Eigen::MatrixXd::Identity(3, 3));
  }

  TEST_CASE("L2 baseline equals the exhaustive assignment oracle") {
    Rng rng(48);
    for (int t = 0; t < 50; ++t) {
      const Eigen::MatrixXd FA = random_matrix(rng, 5, 3);
      const Eigen::MatrixXd FB = random_matrix(rng, 5, 3);
      const BaselineResult got = baseline_match(FA, FB, BaselineKind::L2);
      std::vector<std::pair<int, int>> want_pairs;
      exhaustive_assignment(got.cost, &want_pairs);
      std::vector<std::pair<int, int>> got_pairs = got.result.matches;
      std::sort(got_pairs.begin(), got_pairs.end());
      CHECK(got_pairs == want_pairs);
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
          CHECK(got.cost(i, j) ==
                doctest::Approx((FA.row(i) - FB.row(j)).norm()).epsilon(1e-12));
    }
  }

  TEST_CASE("full-shrinkage Mahalanobis ranks like L2") {
    Rng rng(49);
    const Eigen::MatrixXd FA = random_matrix(rng, 4, 3);
    const Eigen::MatrixXd FB = random_matrix(rng, 6, 3);
    const BaselineResult l2 = baseline_match(FA, FB, BaselineKind::L2);
    const BaselineResult maha =
        baseline_match(FA, FB, BaselineKind::Mahalanobis, nullptr, 1.0);
    std::vector<std::pair<int, int>> a = l2.result.matches, b = maha.result.matches;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }

  TEST_CASE("identity projection reproduces the L2 baseline") {
    Rng rng(50);
    const Eigen::MatrixXd FA = random_matrix(rng, 4, 3);
    const Eigen::MatrixXd FB = random_matrix(rng, 4, 3);
    Mlp identity = Mlp::make({3, 3});
    identity.layers[0].W = Eigen::MatrixXd::Identity(3, 3);
    identity.layers[0].b.setZero();
    const BaselineResult l2 = baseline_match(FA, FB, BaselineKind::L2);
    const BaselineResult proj =
        baseline_match(FA, FB, BaselineKind::Projected, &identity);
    CHECK((l2.cost - proj.cost).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(l2.result.matches == proj.result.matches);
  }

  TEST_CASE("forward match keeps marginals and fills every slot") {
    Rng rng(51);
    MatcherParams p = MatcherParams::init(6, 4, 8, 4, DustbinVariant::Adaptive, 7);
    const Eigen::MatrixXd FA = random_matrix(rng, 4, 6);
    const Eigen::MatrixXd FB = random_matrix(rng, 5, 6);
    const MatchForward fwd = forward_match(p, FA, FB);
    REQUIRE(fwd.P.rows() == 5);
    REQUIRE(fwd.P.cols() == 6);
    CHECK(!fwd.degenerate);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(fwd.P.row(i).sum() - 1.0) < 1e-6);
    for (int j = 0; j < 5; ++j) CHECK(std::abs(fwd.P.col(j).sum() - 1.0) < 1e-6);
    CHECK(fwd.augmented(4, 5) == 0.0);  // adaptive corner
    const MatchResult r = extract_matches(fwd.P, 0.2);
    std::vector<bool> seen_a(4, false);
    for (const auto& [i, j] : r.matches) seen_a[static_cast<std::size_t>(i)] = true;
    for (int i : r.unmatched_a) seen_a[static_cast<std::size_t>(i)] = true;
    CHECK(std::all_of(seen_a.begin(), seen_a.end(), [](bool x) { return x; }));
  }

  TEST_CASE("fixed variant fills dustbins with alpha") {
    Rng rng(52);
    MatcherParams p = MatcherParams::init(5, 3, 8, 4, DustbinVariant::Fixed, 9);
    p.alpha = 0.37;
    const Eigen::MatrixXd FA = random_matrix(rng, 3, 5);
    const Eigen::MatrixXd FB = random_matrix(rng, 2, 5);
    const MatchForward fwd = forward_match(p, FA, FB);
    for (int i = 0; i < 3; ++i) CHECK(fwd.augmented(i, 2) == 0.37);
    for (int j = 0; j < 2; ++j) CHECK(fwd.augmented(3, j) == 0.37);
    CHECK(fwd.augmented(3, 2) == 0.37);
  }

  TEST_CASE("degenerate sides take the closed-form path") {
    MatcherParams p = MatcherParams::init(4, 3, 8, 4, DustbinVariant::Adaptive, 11);
    Rng rng(53);
    const Eigen::MatrixXd FA = random_matrix(rng, 3, 4);
    const Eigen::MatrixXd none(0, 4);
    const MatchForward a_only = forward_match(p, FA, none);
    CHECK(a_only.degenerate);
    REQUIRE(a_only.P.rows() == 4);
    REQUIRE(a_only.P.cols() == 1);
    const MatchResult ra = extract_matches(a_only.P, 0.2);
    CHECK(ra.matches.empty());
    CHECK(ra.unmatched_a.size() == 3);
    const MatchForward empty = forward_match(p, none, none);
    CHECK(empty.degenerate);
    const MatchResult re = extract_matches(empty.P, 0.2);
    CHECK(re.matches.empty());
    CHECK(re.unmatched_a.empty());
    CHECK(re.unmatched_b.empty());
  }

  TEST_CASE("dustbin scores depend on the scene") {
    Rng rng(54);
    MatcherParams p = MatcherParams::init(5, 4, 8, 4, DustbinVariant::Adaptive, 13);
    const Eigen::MatrixXd HA = random_matrix(rng, 3, 4);
    const Eigen::MatrixXd HB1 = random_matrix(rng, 4, 4);
    const Eigen::MatrixXd HB2 = random_matrix(rng, 4, 4);
    const Eigen::VectorXd z1 = dustbin_scores(p, HA, HB1);
    const Eigen::VectorXd z2 = dustbin_scores(p, HA, HB2);
    REQUIRE(z1.size() == 3);
    CHECK((z1 - z2).cwiseAbs().maxCoeff() > 0.0);
    CHECK(dustbin_scores(p, Eigen::MatrixXd(0, 4), HB1).size() == 0);
  }

  TEST_CASE("checkpoint round-trip preserves everything") {
    const std::string dir = reid3d::test::tmp_dir("matcher_io");
    MatcherParams p = MatcherParams::init(5, 4, 8, 4, DustbinVariant::Adaptive, 17);
    p.tau = 0.8;
    p.match_threshold = 0.3;
    p.alpha = 1.25;
    save_matcher_params(p, dir + "/ckpt.json");
    const MatcherParams q = load_matcher_params(dir + "/ckpt.json");
    CHECK(q.descriptor_dim == 5);
    CHECK(q.d_out == 4);
    CHECK(q.variant == DustbinVariant::Adaptive);
    CHECK(q.tau == 0.8);
    CHECK(q.match_threshold == 0.3);
    CHECK(q.alpha == 1.25);
    CHECK(p.pack() == q.pack());

    Mlp proj = Mlp::make({5, 5});
    Rng rng(55);
    proj.init_xavier(rng);
    save_projection(proj, 5, dir + "/proj.json");
    const Mlp loaded = load_projection(dir + "/proj.json");
    std::vector<double> a(proj.parameter_count()), b(loaded.parameter_count());
    REQUIRE(a.size() == b.size());
    proj.pack(a.data());
    loaded.pack(b.data());
    CHECK(a == b);
  }
}
