#pragma once

// External clustering scores: ACC via optimal one-to-one label mapping, ARI and NMI.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "gceals/error.hpp"
#include "gceals/linalg.hpp"

namespace gceals {

// Minimum-cost perfect assignment on a square cost matrix (shortest
// augmenting path, O(n³)). result[row] = assigned column.
// 
// Among optimal assignments the lexicographically smallest one is returned:
// rows are fixed greedily to the smallest column that still admits an
// optimal completion.
inline std::vector<std::size_t> hungarian(const DenseMatrix& cost) {
  if (cost.rows() != cost.cols())
    throw ShapeError("hungarian: cost matrix must be square, got " + std::to_string(cost.rows()) + "x" +
                     std::to_string(cost.cols()));
  if (!cost.all_finite()) throw std::invalid_argument("hungarian: costs must be finite");
  const std::size_t n = cost.rows();
  if (n == 0) return {};

  auto solve = [](const std::vector<std::vector<double>>& a) {
    // 1-based potentials formulation.
    const std::size_t sz = a.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(sz + 1, 0.0), v(sz + 1, 0.0);
    std::vector<std::size_t> p(sz + 1, 0), way(sz + 1, 0);
    for (std::size_t i = 1; i <= sz; ++i) {
      p[0] = i;
      std::size_t j0 = 0;
      std::vector<double> minv(sz + 1, inf);
      std::vector<bool> used(sz + 1, false);
      do {
        used[j0] = true;
        const std::size_t i0 = p[j0];
        double delta = inf;
        std::size_t j1 = 0;
        for (std::size_t j = 1; j <= sz; ++j) {
          if (used[j]) continue;
          const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
        for (std::size_t j = 0; j <= sz; ++j) {
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
        const std::size_t j1 = way[j0];
        p[j0] = p[j1];
        j0 = j1;
      } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(sz);
    double total = 0.0;
    for (std::size_t j = 1; j <= sz; ++j) row_to_col[p[j] - 1] = j - 1;
    for (std::size_t i = 0; i < sz; ++i) total += a[i][row_to_col[i]];
    return std::pair{total, row_to_col};
  };

  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      a[i][j] = cost(i, j);
      scale = std::max(scale, std::abs(a[i][j]));
    }
  const double optimum = solve(a).first;
  const double slack = 1e-9 * scale * static_cast<double>(n);

  // Fix rows one at a time to the smallest column that keeps the optimum.
  std::vector<std::size_t> result(n);
  std::vector<std::size_t> free_rows(n), free_cols(n);
  std::iota(free_rows.begin(), free_rows.end(), std::size_t{0});
  std::iota(free_cols.begin(), free_cols.end(), std::size_t{0});
  double fixed_cost = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t row = free_rows.front();
    for (std::size_t ci = 0; ci < free_cols.size(); ++ci) {
      const std::size_t col = free_cols[ci];
      double rest = 0.0;
      if (free_rows.size() > 1) {
        std::vector<std::vector<double>> sub(free_rows.size() - 1, std::vector<double>(free_cols.size() - 1));
        for (std::size_t i = 1; i < free_rows.size(); ++i) {
          std::size_t jj = 0;
          for (std::size_t j = 0; j < free_cols.size(); ++j) {
            if (j == ci) continue;
            sub[i - 1][jj++] = a[free_rows[i]][free_cols[j]];
          }
        }
        rest = solve(sub).first;
      }
      if (fixed_cost + a[row][col] + rest <= optimum + slack) {
        result[row] = col;
        fixed_cost += a[row][col];
        free_cols.erase(free_cols.begin() + static_cast<long>(ci));
        break;
      }
    }
    free_rows.erase(free_rows.begin());
  }
  return result;
}

namespace detail {
inline void validate_labels(std::span<const int> y_true, std::span<const int> y_pred, const char* op) {
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument(std::string(op) + ": label vectors differ in length");
  for (std::size_t i = 0; i < y_true.size(); ++i)
    if (y_true[i] < 0 || y_pred[i] < 0) throw std::invalid_argument(std::string(op) + ": labels must be non-negative");
}
}  // namespace detail

struct ContingencyTable {
  std::vector<std::vector<std::size_t>> counts;  // [true class][predicted cluster]
  std::vector<std::size_t> true_totals;
  std::vector<std::size_t> pred_totals;
  std::size_t total = 0;
};

inline ContingencyTable contingency(std::span<const int> y_true, std::span<const int> y_pred) {
  detail::validate_labels(y_true, y_pred, "contingency");
  ContingencyTable t;
  const std::size_t ct = y_true.empty() ? 0 : static_cast<std::size_t>(*std::max_element(y_true.begin(), y_true.end())) + 1;
  const std::size_t cp = y_pred.empty() ? 0 : static_cast<std::size_t>(*std::max_element(y_pred.begin(), y_pred.end())) + 1;
  t.counts.assign(ct, std::vector<std::size_t>(cp, 0));
  t.true_totals.assign(ct, 0);
  t.pred_totals.assign(cp, 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ++t.counts[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
    ++t.true_totals[static_cast<std::size_t>(y_true[i])];
    ++t.pred_totals[static_cast<std::size_t>(y_pred[i])];
  }
  t.total = y_true.size();
  return t;
}

// Best-mapping accuracy in [0, 1]. The cost matrix is the negated
// co-occurrence table zero-padded to square.
inline double clustering_accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.empty()) throw std::invalid_argument("clustering_accuracy: empty input");
  auto t = contingency(y_true, y_pred);
  const std::size_t ct = t.true_totals.size();
  const std::size_t cp = t.pred_totals.size();
  const std::size_t n = std::max(ct, cp);
  DenseMatrix cost(n, n, 0.0);
  for (std::size_t p = 0; p < cp; ++p)
    for (std::size_t c = 0; c < ct; ++c) cost(p, c) = -static_cast<double>(t.counts[c][p]);
  auto mapping = hungarian(cost);
  std::size_t correct = 0;
  for (std::size_t p = 0; p < cp; ++p)
    if (mapping[p] < ct) correct += t.counts[mapping[p]][p];
  return static_cast<double>(correct) / static_cast<double>(y_true.size());
}

// Adjusted Rand index from the contingency table.
inline double adjusted_rand_index(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() < 2) throw std::invalid_argument("adjusted_rand_index: need at least 2 samples");
  auto t = contingency(y_true, y_pred);
  auto comb2 = [](std::size_t v) { return 0.5 * static_cast<double>(v) * (static_cast<double>(v) - 1.0); };
  double sum_ij = 0.0;
  for (const auto& row : t.counts)
    for (auto c : row) sum_ij += comb2(c);
  double sum_a = 0.0, sum_b = 0.0;
  for (auto a : t.true_totals) sum_a += comb2(a);
  for (auto b : t.pred_totals) sum_b += comb2(b);
  const double total = comb2(t.total);
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  if (denom == 0.0) return 1.0;  // both partitions trivial and identical in structure
  return (sum_ij - expected) / denom;
}

// I(true; pred) / sqrt(H(true) H(pred)), natural logs.
inline double normalized_mutual_information(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.empty()) throw std::invalid_argument("normalized_mutual_information: empty input");
  auto t = contingency(y_true, y_pred);
  const double n = static_cast<double>(t.total);
  auto entropy = [n](const std::vector<std::size_t>& totals) {
    double h = 0.0;
    for (auto c : totals)
      if (c > 0) {
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
      }
    return h;
  };
  const double ht = entropy(t.true_totals);
  const double hp = entropy(t.pred_totals);
  double mi = 0.0;
  for (std::size_t a = 0; a < t.counts.size(); ++a)
    for (std::size_t b = 0; b < t.counts[a].size(); ++b) {
      const auto c = t.counts[a][b];
      if (c == 0) continue;
      const double pab = static_cast<double>(c) / n;
      mi += pab * std::log(pab * n * n / (static_cast<double>(t.true_totals[a]) * static_cast<double>(t.pred_totals[b])));
    }
  if (ht == 0.0 || hp == 0.0) {
    // Only possible identity here: both partitions are a single block.
    return (ht == 0.0 && hp == 0.0) ? 1.0 : 0.0;
  }
  return std::clamp(mi / std::sqrt(ht * hp), 0.0, 1.0);
}

struct MetricScores {
  double acc = 0.0;
  double ari = 0.0;
  double nmi = 0.0;
};

inline MetricScores evaluate(std::span<const int> y_true, std::span<const int> y_pred) {
  return {clustering_accuracy(y_true, y_pred), adjusted_rand_index(y_true, y_pred),
          normalized_mutual_information(y_true, y_pred)};
}

}  // namespace gceals
