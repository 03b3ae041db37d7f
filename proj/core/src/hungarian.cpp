#include <algorithm>
#include <limits>
#include <vector>

#include "reid3d/errors.hpp"
#include "reid3d/matcher.hpp"

namespace reid3d::matcher {

namespace {

// Shortest-augmenting-path assignment for n <= m (every row matched).
// Potentials u, v; p[j] is the row matched to column j (0 = free).
// Classic O(n^2 m) formulation on 1-based indices.
std::vector<int> solve_rows_le_cols(const Eigen::MatrixXd& a, int n, int m) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  return p;
}

}  // namespace

HungarianResult hungarian(const Eigen::MatrixXd& cost) {
  HungarianResult out;
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (n == 0 || m == 0) return out;
  if (!cost.allFinite()) throw NumericError("hungarian: non-finite cost matrix");

  if (n <= m) {
    const std::vector<int> p = solve_rows_le_cols(cost, n, m);
    for (int j = 1; j <= m; ++j)
      if (p[j] != 0) out.pairs.emplace_back(p[j] - 1, j - 1);
  } else {
    const std::vector<int> p = solve_rows_le_cols(cost.transpose(), m, n);
    for (int j = 1; j <= n; ++j)
      if (p[j] != 0) out.pairs.emplace_back(j - 1, p[j] - 1);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (const auto& [i, j] : out.pairs) out.total_cost += cost(i, j);
  return out;
}

}  // namespace reid3d::matcher
