#pragma once

// Gaussian cluster head (Mahalanobis kernel, likelihood, cluster weights,
// posterior), the MLP softmax head, the clustering losses, and the
// t-distribution / target-distribution pair used by the DEC-style modes.

#include <cmath>
#include <span>
#include <vector>

#include "gceals/error.hpp"
#include "gceals/linalg.hpp"
#include "gceals/neuralnet.hpp"

namespace gceals {

inline constexpr double kKernelFloor = 1e-300;
inline constexpr double kLogFloor = 1e-12;

// Per-cluster diagonal Gaussians on the embedding. Variances are stored as
// logs; `weights` is the cluster prior, updated in closed form rather than by
// gradient.
struct ClusterHead {
  DenseMatrix means;          // K x m
  DenseMatrix log_variances;  // K x m
  std::vector<double> weights;

  std::size_t clusters() const { return means.rows(); }
  std::size_t dim() const { return means.cols(); }

  static ClusterHead from_centroids(const DenseMatrix& centroids) {
    ClusterHead h;
    h.means = centroids;
    h.log_variances = DenseMatrix(centroids.rows(), centroids.cols(), 0.0);
    h.weights.assign(centroids.rows(), 1.0 / static_cast<double>(centroids.rows()));
    return h;
  }

  // det Σ_j = exp(Σ_a log σ²_ja)
  double covariance_determinant(std::size_t j) const {
    double s = 0.0;
    for (double v : log_variances.row(j)) s += v;
    return std::exp(s);
  }

  std::vector<std::span<double>> parameters() { return {means.values(), log_variances.values()}; }
};

inline double mahalanobis(std::span<const double> z, std::span<const double> mean, std::span<const double> variances) {
  if (z.size() != mean.size() || z.size() != variances.size()) throw ShapeError("mahalanobis: length mismatch");
  double q = 0.0;
  for (std::size_t a = 0; a < z.size(); ++a) {
    if (!(variances[a] > 0.0)) throw std::invalid_argument("mahalanobis: variances must be positive");
    const double d = z[a] - mean[a];
    q += d * d / variances[a];
  }
  return std::sqrt(q);
}

// d_ij for every sample/cluster pair.
inline DenseMatrix mahalanobis_distances(const DenseMatrix& z, const ClusterHead& head) {
  if (z.cols() != head.dim()) throw ShapeError("mahalanobis_distances: embedding width mismatch");
  const std::size_t k = head.clusters();
  DenseMatrix inv_var(k, head.dim());
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t a = 0; a < head.dim(); ++a) inv_var(j, a) = std::exp(-head.log_variances(j, a));
  DenseMatrix d(z.rows(), k);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto zi = z.row(i);
    for (std::size_t j = 0; j < k; ++j) {
      auto mu = head.means.row(j);
      auto iv = inv_var.row(j);
      double q = 0.0;
      for (std::size_t a = 0; a < zi.size(); ++a) {
        const double diff = zi[a] - mu[a];
        q += diff * diff * iv[a];
      }
      d(i, j) = std::sqrt(q);
    }
  }
  return d;
}

// s = exp(-d), floored at 1e-300 so no row can become all-zero.
inline DenseMatrix kernel_from_distances(const DenseMatrix& d) {
  DenseMatrix s(d.rows(), d.cols());
  auto in = d.values();
  auto out = s.values();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::max(std::exp(-in[i]), kKernelFloor);
  return s;
}

inline DenseMatrix soft_assign(const DenseMatrix& z, const ClusterHead& head) {
  return kernel_from_distances(mahalanobis_distances(z, head));
}

struct LikelihoodAndWeights {
  DenseMatrix likelihood;       // p'
  std::vector<double> weights;  // ω, column means of p'
};

inline LikelihoodAndWeights likelihood_and_weights(const DenseMatrix& s) {
  LikelihoodAndWeights out;
  out.likelihood = row_normalize(s);
  out.weights = column_means(out.likelihood);
  return out;
}

// Bayes posterior: ω_j p'_ij renormalized per row.
inline DenseMatrix posterior(const DenseMatrix& likelihood, std::span<const double> weights) {
  if (weights.size() != likelihood.cols()) throw ShapeError("posterior: weight vector length mismatch");
  DenseMatrix p(likelihood.rows(), likelihood.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto src = likelihood.row(i);
    auto dst = p.row(i);
    double sum = 0.0;
    for (std::size_t j = 0; j < dst.size(); ++j) {
      dst[j] = weights[j] * src[j];
      sum += dst[j];
    }
    if (!(sum > 0.0)) throw DegenerateRowError("posterior: all-zero row after weighting", i);
    for (double& v : dst) v /= sum;
  }
  return p;
}

inline DenseMatrix head_logits(const DenseMatrix& z, const MlpHead& mlp) { return forward(mlp.net, z).output(); }

inline DenseMatrix head_softmax(const DenseMatrix& z, const MlpHead& mlp) { return row_softmax(head_logits(z, mlp)); }

// −(1/N) Σ_i Σ_j p_ij log q_ij, q floored at 1e-12.
inline double clustering_loss(const DenseMatrix& p, const DenseMatrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw ShapeError("clustering_loss: shape mismatch");
  if (p.rows() == 0) return 0.0;
  double s = 0.0;
  auto pv = p.values();
  auto qv = q.values();
  for (std::size_t i = 0; i < pv.size(); ++i)
    if (pv[i] != 0.0) s -= pv[i] * std::log(std::max(qv[i], kLogFloor));
  return s / static_cast<double>(p.rows());
}

inline double joint_loss(double recon, double cluster, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("joint_loss: gamma must be non-negative");
  return recon + gamma * cluster;
}

// Class-balanced sample indices: each batch takes quota = min(n_min, floor(cap/K))
// samples without replacement from every pseudo-cluster. `count` batches are
// drawn independently.
inline std::vector<std::vector<std::size_t>> balanced_batches(std::span<const int> pseudo_labels, std::size_t k,
                                                              std::size_t batch_cap, Rng& rng, std::size_t count = 1) {
  if (k == 0) throw std::invalid_argument("balanced_batches: k must be >= 1");
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < pseudo_labels.size(); ++i) {
    const int c = pseudo_labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= k) throw std::invalid_argument("balanced_batches: label out of range");
    members[static_cast<std::size_t>(c)].push_back(i);
  }
  std::size_t n_min = pseudo_labels.size();
  for (std::size_t c = 0; c < k; ++c) {
    if (members[c].empty())
      throw std::invalid_argument("balanced_batches: pseudo-cluster " + std::to_string(c) + " is empty");
    n_min = std::min(n_min, members[c].size());
  }
  const std::size_t quota = std::min(n_min, batch_cap / k);
  if (quota == 0) throw std::invalid_argument("balanced_batches: batch cap smaller than cluster count");
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < count; ++b) {
    std::vector<std::size_t> batch;
    batch.reserve(quota * k);
    for (auto& m : members) {
      // Partial Fisher-Yates: first `quota` entries become a uniform sample.
      for (std::size_t i = 0; i < quota; ++i) std::swap(m[i], m[i + rng.below(m.size() - i)]);
      batch.insert(batch.end(), m.begin(), m.begin() + static_cast<long>(quota));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

// True when any cluster weight has fallen to factor/K or below.
inline bool early_stop_check(std::span<const double> weights, std::size_t k, double factor) {
  const double threshold = factor / static_cast<double>(k);
  for (double w : weights)
    if (w <= threshold) return true;
  return false;
}

// Student-t (one degree of freedom) soft assignment to centroids.
inline DenseMatrix tdist_q(const DenseMatrix& z, const DenseMatrix& centroids) {
  if (z.cols() != centroids.cols()) throw ShapeError("tdist_q: embedding width mismatch");
  DenseMatrix q(z.rows(), centroids.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < centroids.rows(); ++j) {
      q(i, j) = 1.0 / (1.0 + squared_distance(z.row(i), centroids.row(j)));
      sum += q(i, j);
    }
    for (double& v : q.row(i)) v /= sum;
  }
  return q;
}

// Sharpened target p_ij ∝ q_ij² / f_j with soft frequencies f_j = Σ_i q_ij.
inline DenseMatrix dec_target(const DenseMatrix& q) {
  auto freq = column_means(q);
  for (std::size_t j = 0; j < freq.size(); ++j)
    if (!(freq[j] > 0.0)) throw NumericError("dec_target: cluster " + std::to_string(j) + " has zero soft frequency");
  DenseMatrix p(q.rows(), q.cols());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < q.cols(); ++j) {
      p(i, j) = q(i, j) * q(i, j) / freq[j];
      sum += p(i, j);
    }
    if (!(sum > 0.0)) throw DegenerateRowError("dec_target: all-zero row", i);
    for (double& v : p.row(i)) v /= sum;
  }
  return p;
}

// Σ_i Σ_j p log(p/q) with 0 log 0 = 0 and q floored at 1e-12.
inline double kl_divergence(const DenseMatrix& p, const DenseMatrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw ShapeError("kl_divergence: shape mismatch");
  double s = 0.0;
  auto pv = p.values();
  auto qv = q.values();
  for (std::size_t i = 0; i < pv.size(); ++i)
    if (pv[i] > 0.0) s += pv[i] * std::log(pv[i] / std::max(qv[i], kLogFloor));
  return s;
}

// Everything the Gaussian head produces for one batch of embeddings.
struct Assignments {
  DenseMatrix distances;
  DenseMatrix kernel;
  DenseMatrix likelihood;
  DenseMatrix posterior;
  DenseMatrix head_softmax;
};

inline Assignments compute_assignments(const DenseMatrix& z, const ClusterHead& head, const MlpHead& mlp) {
  Assignments a;
  a.distances = mahalanobis_distances(z, head);
  a.kernel = kernel_from_distances(a.distances);
  a.likelihood = row_normalize(a.kernel);
  a.posterior = posterior(a.likelihood, head.weights);
  a.head_softmax = head_softmax(z, mlp);
  return a;
}

}  // namespace gceals
