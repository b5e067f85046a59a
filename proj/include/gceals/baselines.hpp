#pragma once

// Traditional clustering: Lloyd K-means with k-means++ seeding and
// full-covariance Gaussian mixture EM.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <vector>

#include "gceals/error.hpp"
#include "gceals/linalg.hpp"

namespace gceals {

struct KMeansOptions {
  std::size_t restarts = 10;
  std::size_t max_iter = 300;
  double tol = 1e-4;  // max centroid movement (Euclidean) that counts as converged
  bool refine = true;  // Hartigan transfers after Lloyd converges
};

struct KMeansResult {
  DenseMatrix centroids;
  std::vector<int> labels;
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::vector<double> inertia_trace;  // after each assignment step of the winning restart
};

namespace detail {

inline std::pair<int, double> nearest_centroid(std::span<const double> p, const DenseMatrix& c) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < c.rows(); ++j) {
    const double d = squared_distance(p, c.row(j));
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return {best, best_d};
}

inline DenseMatrix kmeanspp_seed(const DenseMatrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows();
  DenseMatrix c(k, x.cols());
  std::size_t first = rng.below(n);
  std::copy(x.row(first).begin(), x.row(first).end(), c.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i), c.row(0));
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        u -= d2[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), c.row(j).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(x.row(i), c.row(j)));
  }
  return c;
}

inline DenseMatrix cluster_means(const DenseMatrix& x, std::span<const int> labels, std::size_t k) {
  DenseMatrix c(k, x.cols());
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto j = static_cast<std::size_t>(labels[i]);
    auto row = x.row(i);
    auto dst = c.row(j);
    for (std::size_t a = 0; a < x.cols(); ++a) dst[a] += row[a];
    ++count[j];
  }
  for (std::size_t j = 0; j < k; ++j)
    if (count[j] > 0)
      for (double& v : c.row(j)) v /= static_cast<double>(count[j]);
  return c;
}

// Single-point transfers: move x from a to b when
// n_b/(n_b+1)·|x−μ_b|² < n_a/(n_a−1)·|x−μ_a|², which lowers inertia by the
// difference. Every such fixed point is also a Lloyd fixed point.
inline void hartigan_refine(const DenseMatrix& x, std::vector<int>& labels, std::size_t k, std::size_t max_passes) {
  const std::size_t n = x.rows(), d = x.cols();
  DenseMatrix c = cluster_means(x, labels, k);
  std::vector<std::size_t> count(k, 0);
  for (int l : labels) ++count[static_cast<std::size_t>(l)];
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(labels[i]);
      if (count[a] < 2) continue;
      auto row = x.row(i);
      const double na = static_cast<double>(count[a]);
      const double remove = na / (na - 1.0) * squared_distance(row, c.row(a));
      std::size_t best = a;
      double best_add = remove;
      for (std::size_t b = 0; b < k; ++b) {
        if (b == a) continue;
        const double nb = static_cast<double>(count[b]);
        const double add = nb / (nb + 1.0) * squared_distance(row, c.row(b));
        if (add < best_add) {
          best_add = add;
          best = b;
        }
      }
      // relative margin keeps round-off from cycling
      if (best == a || best_add >= remove * (1.0 - 1e-12)) continue;
      const double nb = static_cast<double>(count[best]);
      for (std::size_t t = 0; t < d; ++t) {
        c(a, t) = (c(a, t) * na - row[t]) / (na - 1.0);
        c(best, t) = (c(best, t) * nb + row[t]) / (nb + 1.0);
      }
      --count[a];
      ++count[best];
      labels[i] = static_cast<int>(best);
      moved = true;
    }
    if (!moved) break;
  }
}

inline KMeansResult lloyd(const DenseMatrix& x, DenseMatrix centroids, const KMeansOptions& opt) {
  const std::size_t n = x.rows();
  const std::size_t k = centroids.rows();
  const std::size_t d = x.cols();
  KMeansResult res;
  res.labels.assign(n, 0);
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto [j, dd] = nearest_centroid(x.row(i), centroids);
      res.labels[i] = j;
      dist[i] = dd;
      inertia += dd;
    }
    res.inertia_trace.push_back(inertia);
    DenseMatrix next(k, d);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = x.row(i);
      auto dst = next.row(static_cast<std::size_t>(res.labels[i]));
      for (std::size_t a = 0; a < d; ++a) dst[a] += row[a];
      ++count[static_cast<std::size_t>(res.labels[i])];
    }
    // Empty clusters take the point farthest from its current centroid.
    std::vector<bool> taken(n, false);
    for (std::size_t j = 0; j < k; ++j) {
      if (count[j] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && count[static_cast<std::size_t>(res.labels[i])] > 1 && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      taken[far] = true;
      auto old = static_cast<std::size_t>(res.labels[far]);
      auto row = x.row(far);
      for (std::size_t a = 0; a < d; ++a) next(old, a) -= row[a];
      --count[old];
      res.labels[far] = static_cast<int>(j);
      std::copy(row.begin(), row.end(), next.row(j).begin());
      count[j] = 1;
      dist[far] = 0.0;
    }
    double shift = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      auto dst = next.row(j);
      for (double& v : dst) v /= static_cast<double>(count[j]);
      shift = std::max(shift, std::sqrt(squared_distance(dst, centroids.row(j))));
    }
    centroids = std::move(next);
    res.iterations = it + 1;
    if (shift <= opt.tol) break;
  }
  for (std::size_t i = 0; i < n; ++i) res.labels[i] = nearest_centroid(x.row(i), centroids).first;
  if (opt.refine) hartigan_refine(x, res.labels, k, opt.max_iter);
  centroids = cluster_means(x, res.labels, k);
  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) res.inertia += squared_distance(x.row(i), centroids.row(static_cast<std::size_t>(res.labels[i])));
  if (opt.refine) res.inertia_trace.push_back(res.inertia);
  res.centroids = std::move(centroids);
  return res;
}

}  // namespace detail

// Best-of-restarts Lloyd K-means. Restart r uses the r-th split of `rng`;
// ties on inertia keep the lowest restart index.
inline KMeansResult kmeans(const DenseMatrix& x, std::size_t k, Rng& rng, const KMeansOptions& opt = {}) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be >= 1");
  if (k > x.rows())
    throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds sample count " + std::to_string(x.rows()));
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(1, opt.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng local = rng.split();
    auto res = detail::lloyd(x, detail::kmeanspp_seed(x, k, local), opt);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

inline KMeansResult kmeans(const DenseMatrix& x, std::size_t k, Rng& rng, std::size_t restarts, std::size_t max_iter,
                           double tol) {
  return kmeans(x, k, rng, KMeansOptions{restarts, max_iter, tol});
}

struct GmmOptions {
  std::size_t max_iter = 100;
  double tol = 1e-3;  // stop when the mean per-sample log-likelihood gains less than this
  double ridge = 1e-6;
};

struct GmmResult {
  DenseMatrix means;
  std::vector<DenseMatrix> covariances;
  std::vector<double> mixing_weights;
  DenseMatrix responsibilities;
  std::vector<int> labels;
  std::vector<double> log_likelihood_trace;  // total log-likelihood after each E-step
  std::size_t iterations = 0;
};

namespace detail {

using EigenMat = Eigen::MatrixXd;

struct GmmComponentCache {
  Eigen::LLT<EigenMat> chol;
  double log_norm = 0.0;  // -0.5 (m log 2π + log|Σ|)
};

inline GmmComponentCache factor_covariance(const DenseMatrix& cov, std::size_t j) {
  const auto m = static_cast<Eigen::Index>(cov.rows());
  EigenMat s(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) s(a, b) = cov(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  GmmComponentCache cache;
  cache.chol.compute(s);
  if (cache.chol.info() != Eigen::Success)
    throw NumericError("gmm_fit: covariance of component " + std::to_string(j) + " is not positive definite");
  double log_det = 0.0;
  const auto& l = cache.chol.matrixLLT();
  for (Eigen::Index a = 0; a < m; ++a) {
    const double diag = l(a, a);
    if (!(diag > 0.0) || !std::isfinite(diag))
      throw NumericError("gmm_fit: covariance of component " + std::to_string(j) + " is singular");
    log_det += 2.0 * std::log(diag);
  }
  cache.log_norm = -0.5 * (static_cast<double>(m) * std::log(2.0 * 3.14159265358979323846) + log_det);
  return cache;
}

// E-step: responsibilities and total log-likelihood via log-sum-exp.
inline double gmm_e_step(const DenseMatrix& x, GmmResult& g) {
  const std::size_t n = x.rows();
  const std::size_t k = g.means.rows();
  const auto m = static_cast<Eigen::Index>(x.cols());
  std::vector<GmmComponentCache> caches;
  for (std::size_t j = 0; j < k; ++j) caches.push_back(factor_covariance(g.covariances[j], j));
  g.responsibilities = DenseMatrix(n, k);
  double total = 0.0;
  Eigen::VectorXd diff(m);
  std::vector<double> logp(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      for (Eigen::Index a = 0; a < m; ++a)
        diff(a) = x(i, static_cast<std::size_t>(a)) - g.means(j, static_cast<std::size_t>(a));
      Eigen::VectorXd sol = caches[j].chol.matrixL().solve(diff);
      logp[j] = std::log(g.mixing_weights[j]) + caches[j].log_norm - 0.5 * sol.squaredNorm();
    }
    const double mx = *std::max_element(logp.begin(), logp.end());
    double s = 0.0;
    for (double v : logp) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    total += lse;
    for (std::size_t j = 0; j < k; ++j) g.responsibilities(i, j) = std::exp(logp[j] - lse);
  }
  return total;
}

inline void gmm_m_step(const DenseMatrix& x, GmmResult& g, double ridge) {
  const std::size_t n = x.rows();
  const std::size_t k = g.responsibilities.cols();
  const std::size_t m = x.cols();
  g.means = DenseMatrix(k, m);
  g.covariances.assign(k, DenseMatrix(m, m));
  g.mixing_weights.assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double nk = 0.0;
    for (std::size_t i = 0; i < n; ++i) nk += g.responsibilities(i, j);
    nk = std::max(nk, 10.0 * std::numeric_limits<double>::epsilon());
    g.mixing_weights[j] = nk / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = g.responsibilities(i, j);
      for (std::size_t a = 0; a < m; ++a) g.means(j, a) += r * x(i, a);
    }
    for (std::size_t a = 0; a < m; ++a) g.means(j, a) /= nk;
    auto& cov = g.covariances[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double r = g.responsibilities(i, j);
      for (std::size_t a = 0; a < m; ++a) {
        const double da = x(i, a) - g.means(j, a);
        for (std::size_t b = a; b < m; ++b) cov(a, b) += r * da * (x(i, b) - g.means(j, b));
      }
    }
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = a; b < m; ++b) {
        cov(a, b) /= nk;
        cov(b, a) = cov(a, b);
      }
      cov(a, a) += ridge;
    }
  }
}

}  // namespace detail

// EM for a full-covariance mixture, initialized from K-means hard labels.
inline GmmResult gmm_fit(const DenseMatrix& x, std::size_t k, Rng& rng, const GmmOptions& opt = {}) {
  if (k == 0) throw std::invalid_argument("gmm_fit: k must be >= 1");
  if (k > x.rows())
    throw std::invalid_argument("gmm_fit: k=" + std::to_string(k) + " exceeds sample count " + std::to_string(x.rows()));
  auto km = kmeans(x, k, rng);
  GmmResult g;
  g.responsibilities = DenseMatrix(x.rows(), k);
  for (std::size_t i = 0; i < x.rows(); ++i) g.responsibilities(i, static_cast<std::size_t>(km.labels[i])) = 1.0;
  detail::gmm_m_step(x, g, opt.ridge);
  const double n = static_cast<double>(x.rows());
  double prev = detail::gmm_e_step(x, g);
  g.log_likelihood_trace.push_back(prev);
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    detail::gmm_m_step(x, g, opt.ridge);
    const double ll = detail::gmm_e_step(x, g);
    if (!std::isfinite(ll)) throw NumericError("gmm_fit: non-finite log-likelihood");
    g.log_likelihood_trace.push_back(ll);
    g.iterations = it + 1;
    if ((ll - prev) / n < opt.tol) break;
    prev = ll;
  }
  g.labels = row_argmax(g.responsibilities);
  return g;
}

inline GmmResult gmm_fit(const DenseMatrix& x, std::size_t k, Rng& rng, std::size_t max_iter, double tol) {
  GmmOptions opt;
  opt.max_iter = max_iter;
  opt.tol = tol;
  return gmm_fit(x, k, rng, opt);
}

}  // namespace gceals
