#pragma once

// Independent reference computations used by the tests. None of these call
// into the library routine they are checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "gceals/linalg.hpp"

namespace oracle {

// Minimum total cost over all n! permutations; the first optimum found in
// lexicographic order is returned.
inline std::pair<double, std::vector<std::size_t>> brute_force_assignment(const gceals::DenseMatrix& c) {
  std::vector<std::size_t> perm(c.rows());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_perm;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) total += c(i, perm[i]);
    if (total < best) {
      best = total;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best, best_perm};
}

// ACC by enumerating every injective cluster -> class mapping (clusters
// mapped past the class range count as wrong).
inline double brute_force_accuracy(std::span<const int> t, std::span<const int> p) {
  const int kt = *std::max_element(t.begin(), t.end()) + 1;
  const int kp = *std::max_element(p.begin(), p.end()) + 1;
  std::vector<int> perm(static_cast<std::size_t>(std::max(kt, kp)));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (perm[static_cast<std::size_t>(p[i])] == t[i]) ++hits;
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(t.size());
}

// ARI from explicit enumeration of all sample pairs.
inline double brute_force_ari(std::span<const int> t, std::span<const int> p) {
  double both = 0.0, same_t = 0.0, same_p = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j) {
      const bool a = t[i] == t[j];
      const bool b = p[i] == p[j];
      both += (a && b) ? 1.0 : 0.0;
      same_t += a ? 1.0 : 0.0;
      same_p += b ? 1.0 : 0.0;
      pairs += 1.0;
    }
  const double expected = same_t * same_p / pairs;
  const double max_index = 0.5 * (same_t + same_p);
  if (max_index == expected) return 1.0;
  return (both - expected) / (max_index - expected);
}

// NMI as (H(t) + H(p) − H(t, p)) / sqrt(H(t) H(p)).
inline double entropy_nmi(std::span<const int> t, std::span<const int> p) {
  std::map<int, double> ct, cp;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < t.size(); ++i) {
    ct[t[i]] += 1;
    cp[p[i]] += 1;
    joint[{t[i], p[i]}] += 1;
  }
  const double n = static_cast<double>(t.size());
  auto h = [n](const auto& counts) {
    double s = 0.0;
    for (const auto& [k, c] : counts) s -= c / n * std::log(c / n);
    return s;
  };
  const double ht = h(ct), hp = h(cp), hj = h(joint);
  if (ht == 0.0 && hp == 0.0) return 1.0;
  if (ht == 0.0 || hp == 0.0) return 0.0;
  return (ht + hp - hj) / std::sqrt(ht * hp);
}

// Smallest K-means objective over every labelling of the rows into k
// non-empty groups (k^n enumeration), each group at its mean.
inline double brute_force_kmeans_inertia(const gceals::DenseMatrix& x, std::size_t k) {
  const std::size_t n = x.rows();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= k;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> label(n);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i) {
      label[i] = c % k;
      c /= k;
    }
    std::vector<std::vector<double>> sum(k, std::vector<double>(x.cols(), 0.0));
    std::vector<double> cnt(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      cnt[label[i]] += 1;
      for (std::size_t a = 0; a < x.cols(); ++a) sum[label[i]][a] += x(i, a);
    }
    if (std::find(cnt.begin(), cnt.end(), 0.0) != cnt.end()) continue;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < x.cols(); ++a) {
        const double d = x(i, a) - sum[label[i]][a] / cnt[label[i]];
        inertia += d * d;
      }
    best = std::min(best, inertia);
  }
  return best;
}

// Central differences of `loss` with respect to every entry of `param`.
inline std::vector<double> central_differences(std::span<double> param, const std::function<double()>& loss,
                                               double h = 1e-5) {
  std::vector<double> g(param.size());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + h;
    const double up = loss();
    param[i] = saved - h;
    const double down = loss();
    param[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_i |a_i − b_i| / max(|a_i| + |b_i|, floor); the floor keeps entries
// whose true gradient is ~0 from dominating through round-off.
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(std::abs(a[i]) + std::abs(b[i]), floor);
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace oracle
