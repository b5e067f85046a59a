#pragma once

// Joint fine-tuning of the autoencoder with the Gaussian cluster head and MLP
// head, and the t-distribution (DEC / IDEC) variants that share the same
// scaffolding.

#include <cmath>
#include <string>
#include <vector>

#include "gceals/baselines.hpp"
#include "gceals/cluster_head.hpp"
#include "gceals/error.hpp"
#include "gceals/linalg.hpp"
#include "gceals/neuralnet.hpp"

namespace gceals {

enum class TrainMode { gceals, dec, idec };

inline const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::gceals: return "gceals";
    case TrainMode::dec: return "dec";
    case TrainMode::idec: return "idec";
  }
  return "?";
}

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "gceals") return TrainMode::gceals;
  if (s == "dec") return TrainMode::dec;
  if (s == "idec") return TrainMode::idec;
  throw std::invalid_argument("unknown training mode '" + s + "'");
}

struct GcealsConfig {
  double gamma = 0.1;
  std::size_t pretrain_epochs = 1000;
  std::size_t finetune_epochs = 1000;
  std::size_t batch_cap = 256;
  std::size_t embedding_dim = 10;
  double early_stop_factor = 0.5;
  TrainMode mode = TrainMode::gceals;
  double learning_rate = 1e-3;
  std::vector<std::size_t> hidden = {500, 500, 2000};
  std::size_t mlp_hidden = 256;
  // Fine-tuning continues the pretraining Adam moments for the autoencoder
  // instead of restarting them; a fresh optimizer's first sign-like steps
  // shake every pretrained weight by ~lr and scramble the embedding the head
  // was seeded on.
  bool warm_start_optimizer = true;

  void validate() const {
    if (!(gamma >= 0.0)) throw std::invalid_argument("GcealsConfig: gamma must be >= 0");
    if (!(early_stop_factor > 0.0 && early_stop_factor < 1.0))
      throw std::invalid_argument("GcealsConfig: early_stop_factor must lie in (0, 1)");
    if (pretrain_epochs == 0) throw std::invalid_argument("GcealsConfig: pretrain_epochs must be >= 1");
    if (batch_cap == 0) throw std::invalid_argument("GcealsConfig: batch_cap must be >= 1");
    if (embedding_dim == 0) throw std::invalid_argument("GcealsConfig: embedding_dim must be >= 1");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("GcealsConfig: learning_rate must be >= 0");
  }
};

enum class StopReason { completed, weight_collapse };

inline const char* to_string(StopReason r) { return r == StopReason::completed ? "completed" : "weight-collapse"; }

struct TrainReport {
  TrainMode mode = TrainMode::gceals;
  std::vector<double> pretrain_loss;
  // One entry per fine-tuning epoch actually run.
  std::vector<double> recon_loss;
  std::vector<double> cluster_loss;
  std::vector<double> total_loss;
  std::vector<std::vector<double>> weights;         // ω after the epoch's closed-form update
  std::vector<std::vector<double>> centroid_shift;  // ||μ_j(t+1) − μ_j(t)||₂
  std::vector<std::vector<double>> covariance_det;  // det Σ_j

  std::vector<int> labels;
  DenseMatrix posterior;  // soft assignments the labels are taken from
  DenseMatrix embedding;
  std::vector<int> pseudo_labels;
  std::size_t stop_epoch = 0;
  StopReason stop_reason = StopReason::completed;
  std::uint64_t optimizer_steps = 0;

  std::size_t epochs_run() const { return recon_loss.size(); }
};

struct GcealsModel {
  Autoencoder autoencoder;
  ClusterHead head;
  MlpHead mlp;  // empty network in the t-distribution modes

  // Trainable tensors in a fixed order: θ, Φ, μ, log Σ, MLP.
  std::vector<std::span<double>> parameters() {
    auto out = autoencoder.parameters();
    auto h = head.parameters();
    out.insert(out.end(), h.begin(), h.end());
    if (!mlp.net.layers.empty()) {
      auto m = mlp.parameters();
      out.insert(out.end(), m.begin(), m.end());
    }
    return out;
  }
};

struct TrainResult {
  GcealsModel model;
  TrainReport report;
};

struct JointLossEvaluation {
  double recon = 0.0;
  double cluster = 0.0;
  double total = 0.0;
  std::vector<std::vector<double>> gradients;  // aligned with GcealsModel::parameters()

  std::vector<std::span<const double>> gradient_spans() const {
    return {gradients.begin(), gradients.end()};
  }
};

namespace detail {

inline void append_network_gradients(std::vector<std::vector<double>>& out, const NetworkGradients& g) {
  for (std::size_t i = 0; i < g.weight.size(); ++i) {
    out.emplace_back(g.weight[i].values().begin(), g.weight[i].values().end());
    out.push_back(g.bias[i]);
  }
}

}  // namespace detail

// Joint loss recon + γ·cluster on one batch and its gradient with respect to
// every trainable tensor. Cluster weights ω are held fixed.
// `enc` holds the encoder activations of the batch; values[0] is the batch itself.
inline JointLossEvaluation joint_loss_and_gradients(const GcealsModel& model, const Activations& enc, double gamma) {
  const auto& head = model.head;
  const DenseMatrix& xb = enc.values.front();
  const std::size_t b = xb.rows();
  const std::size_t k = head.clusters();
  const std::size_t m = head.dim();
  const double inv_b = 1.0 / static_cast<double>(b);

  const DenseMatrix& z = enc.output();
  auto dec = forward(model.autoencoder.decoder, z);

  JointLossEvaluation out;
  out.recon = reconstruction_loss(xb, dec.output());
  auto g_dec = backward(model.autoencoder.decoder, dec, reconstruction_gradient(xb, dec.output()), true);

  // Gaussian head: p_ij ∝ ω_j exp(-d_ij).
  DenseMatrix d = mahalanobis_distances(z, head);
  DenseMatrix s = kernel_from_distances(d);
  DenseMatrix p = posterior(row_normalize(s), head.weights);

  auto mlp_acts = forward(model.mlp.net, z);
  DenseMatrix q = row_softmax(mlp_acts.output());
  out.cluster = clustering_loss(p, q);
  out.total = joint_loss(out.recon, out.cluster, gamma);

  // dL/dlogits of the MLP softmax and dL/dp of the posterior.
  DenseMatrix g_logits(b, k);
  DenseMatrix g_dist(b, k);
  for (std::size_t i = 0; i < b; ++i) {
    double c_sum = 0.0;
    std::vector<double> c(k), gp(k);
    for (std::size_t j = 0; j < k; ++j) {
      const bool floored = q(i, j) < kLogFloor;
      c[j] = floored ? 0.0 : -gamma * inv_b * p(i, j);
      c_sum += c[j];
      gp[j] = -gamma * inv_b * std::log(std::max(q(i, j), kLogFloor));
    }
    double mean_gp = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      g_logits(i, j) = c[j] - q(i, j) * c_sum;
      mean_gp += p(i, j) * gp[j];
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double g_logs = p(i, j) * (gp[j] - mean_gp);
      const bool floored = std::exp(-d(i, j)) < kKernelFloor;
      g_dist(i, j) = floored ? 0.0 : -g_logs;
    }
  }
  auto g_mlp = backward(model.mlp.net, mlp_acts, g_logits, true);

  DenseMatrix g_z = g_dec.input;
  {
    auto a = g_z.values();
    auto bm = g_mlp.input.values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += bm[i];
  }
  std::vector<double> g_means(k * m, 0.0), g_logvar(k * m, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double dij = d(i, j);
      const double g = g_dist(i, j);
      if (dij <= 0.0 || g == 0.0) continue;
      for (std::size_t a = 0; a < m; ++a) {
        const double diff = z(i, a) - head.means(j, a);
        const double inv_var = std::exp(-head.log_variances(j, a));
        const double dd = diff * inv_var / dij;
        g_z(i, a) += g * dd;
        g_means[j * m + a] -= g * dd;
        g_logvar[j * m + a] -= g * 0.5 * diff * diff * inv_var / dij;
      }
    }
  }
  auto g_enc = backward(model.autoencoder.encoder, enc, g_z, false);

  detail::append_network_gradients(out.gradients, g_enc);
  g_dec.input = DenseMatrix();
  detail::append_network_gradients(out.gradients, g_dec);
  out.gradients.push_back(std::move(g_means));
  out.gradients.push_back(std::move(g_logvar));
  detail::append_network_gradients(out.gradients, g_mlp);
  return out;
}

inline JointLossEvaluation joint_loss_and_gradients(const GcealsModel& model, const DenseMatrix& xb, double gamma) {
  return joint_loss_and_gradients(model, forward(model.autoencoder.encoder, xb), gamma);
}

// Loss of a t-distribution mode on one batch with its target rows fixed.
// Trainable tensors: θ, Φ, centroids (ClusterHead::means). The log-variance
// tensor is present in the parameter list but always receives zero gradient.
inline JointLossEvaluation tdist_loss_and_gradients(const GcealsModel& model, const Activations& enc,
                                                    const DenseMatrix& target, TrainMode mode, double gamma) {
  const auto& centroids = model.head.means;
  const DenseMatrix& xb = enc.values.front();
  const std::size_t b = xb.rows();
  const std::size_t k = centroids.rows();
  const std::size_t m = centroids.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  const double w_cluster = mode == TrainMode::dec ? 1.0 : gamma;
  const double w_recon = mode == TrainMode::dec ? 0.0 : 1.0;

  const DenseMatrix& z = enc.output();
  auto dec = forward(model.autoencoder.decoder, z);

  JointLossEvaluation out;
  out.recon = reconstruction_loss(xb, dec.output());
  DenseMatrix q = tdist_q(z, centroids);
  out.cluster = kl_divergence(target, q) * inv_b;
  out.total = w_recon * out.recon + w_cluster * out.cluster;

  DenseMatrix g_rec = reconstruction_gradient(xb, dec.output());
  for (double& v : g_rec.values()) v *= w_recon;
  auto g_dec = backward(model.autoencoder.decoder, dec, g_rec, true);

  DenseMatrix g_z = g_dec.input;
  std::vector<double> g_means(k * m, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double u = 1.0 / (1.0 + squared_distance(z.row(i), centroids.row(j)));
      // dL/dD_ij = (p_ij − q_ij) u_ij for L = KL/B with D the squared distance.
      const double g = w_cluster * inv_b * (target(i, j) - q(i, j)) * u;
      for (std::size_t a = 0; a < m; ++a) {
        const double diff2 = 2.0 * (z(i, a) - centroids(j, a));
        g_z(i, a) += g * diff2;
        g_means[j * m + a] -= g * diff2;
      }
    }
  }
  auto g_enc = backward(model.autoencoder.encoder, enc, g_z, false);
  detail::append_network_gradients(out.gradients, g_enc);
  g_dec.input = DenseMatrix();
  detail::append_network_gradients(out.gradients, g_dec);
  out.gradients.push_back(std::move(g_means));
  out.gradients.emplace_back(k * m, 0.0);
  return out;
}

inline JointLossEvaluation tdist_loss_and_gradients(const GcealsModel& model, const DenseMatrix& xb,
                                                    const DenseMatrix& target, TrainMode mode, double gamma) {
  return tdist_loss_and_gradients(model, forward(model.autoencoder.encoder, xb), target, mode, gamma);
}

namespace detail {

// Rows of every layer's activations; the encoder output for a batch equals
// the gathered rows of the full-data pass under the same weights.
inline Activations gather_activations(const Activations& full, std::span<const std::size_t> rows) {
  Activations out;
  out.values.reserve(full.values.size());
  for (const auto& v : full.values) out.values.push_back(gather_rows(v, rows));
  return out;
}

inline bool all_finite(const JointLossEvaluation& e) {
  if (!std::isfinite(e.total)) return false;
  for (const auto& g : e.gradients)
    for (double v : g)
      if (!std::isfinite(v)) return false;
  return true;
}

inline std::vector<double> row_shifts(const DenseMatrix& before, const DenseMatrix& after) {
  std::vector<double> out(before.rows());
  for (std::size_t j = 0; j < before.rows(); ++j) out[j] = std::sqrt(squared_distance(before.row(j), after.row(j)));
  return out;
}

struct FinetuneStart {
  Autoencoder autoencoder;
  std::vector<double> pretrain_loss;
  DenseMatrix embedding;
  KMeansResult kmeans;
  AdamState optimizer;
};

inline FinetuneStart pretrain_and_seed(const DenseMatrix& x, std::size_t k, const GcealsConfig& config, Rng& rng) {
  PretrainOptions opt;
  opt.epochs = config.pretrain_epochs;
  opt.batch_size = config.batch_cap;
  opt.learning_rate = config.learning_rate;
  opt.hidden = config.hidden;
  Rng pretrain_rng = rng.split();
  auto pre = pretrain_autoencoder(x, config.embedding_dim, opt, pretrain_rng);
  FinetuneStart st;
  st.autoencoder = std::move(pre.autoencoder);
  st.pretrain_loss = std::move(pre.loss_trace);
  st.optimizer = std::move(pre.optimizer);
  st.embedding = st.autoencoder.encode(x);
  Rng kmeans_rng = rng.split();
  st.kmeans = kmeans(st.embedding, k, kmeans_rng);
  std::vector<std::size_t> counts(k, 0);
  for (int l : st.kmeans.labels) ++counts[static_cast<std::size_t>(l)];
  for (std::size_t j = 0; j < k; ++j)
    if (counts[j] == 0) throw NumericError("k-means produced an empty pseudo-cluster " + std::to_string(j));
  return st;
}

// Adam over the fine-tuning parameters: the autoencoder tensors (which come
// first) keep their own moments and step count, the heads start fresh.
struct FinetuneOptimizer {
  std::vector<std::span<double>> ae_params, head_params;
  AdamState ae, head;

  FinetuneOptimizer(GcealsModel& model, AdamState pretrained, const GcealsConfig& config) {
    auto params = model.parameters();
    const std::size_t n_ae = model.autoencoder.parameters().size();
    ae_params.assign(params.begin(), params.begin() + static_cast<long>(n_ae));
    head_params.assign(params.begin() + static_cast<long>(n_ae), params.end());
    if (config.warm_start_optimizer && pretrained.first_moment.size() == n_ae) {
      ae = std::move(pretrained);
      ae.learning_rate = config.learning_rate;
    } else {
      ae = AdamState(ae_params, config.learning_rate);
    }
    head = AdamState(head_params, config.learning_rate);
  }

  void step(const JointLossEvaluation& eval) {
    const auto g = eval.gradient_spans();
    const std::size_t n_ae = ae_params.size();
    adam_step(ae, ae_params, std::span(g).first(n_ae));
    adam_step(head, head_params, std::span(g).subspan(n_ae));
  }
};

}  // namespace detail

// Pretrain, seed the Gaussian head from K-means on the embedding, then run
// one balanced-batch Adam step per epoch followed by a full-data update of
// the cluster weights. Stops early once a weight collapses.
inline TrainResult train_gceals(const DenseMatrix& x, std::size_t k, const GcealsConfig& config, Rng& rng) {
  config.validate();
  if (k < 2) throw std::invalid_argument("train_gceals: k must be >= 2");
  if (k > x.rows()) throw std::invalid_argument("train_gceals: k exceeds sample count");

  auto start = detail::pretrain_and_seed(x, k, config, rng);
  TrainResult res;
  auto& model = res.model;
  auto& rep = res.report;
  rep.mode = TrainMode::gceals;
  rep.pretrain_loss = std::move(start.pretrain_loss);
  rep.pseudo_labels = start.kmeans.labels;
  model.autoencoder = std::move(start.autoencoder);
  model.head = ClusterHead::from_centroids(start.kmeans.centroids);
  Rng head_rng = rng.split();
  model.mlp = init_mlp_head(config.embedding_dim, k, head_rng, config.mlp_hidden);

  detail::FinetuneOptimizer adam(model, std::move(start.optimizer), config);
  Rng batch_rng = rng.split();
  Activations enc_full = forward(model.autoencoder.encoder, x);
  LikelihoodAndWeights lw = likelihood_and_weights(soft_assign(enc_full.output(), model.head));

  for (std::size_t epoch = 1; epoch <= config.finetune_epochs; ++epoch) {
    auto batch = balanced_batches(rep.pseudo_labels, k, config.batch_cap, batch_rng).front();
    auto eval = joint_loss_and_gradients(model, detail::gather_activations(enc_full, batch), config.gamma);
    if (!detail::all_finite(eval)) throw DivergenceError("fine-tuning", epoch);
    const DenseMatrix means_before = model.head.means;
    adam.step(eval);

    enc_full = forward(model.autoencoder.encoder, x);
    lw = likelihood_and_weights(soft_assign(enc_full.output(), model.head));
    model.head.weights = lw.weights;

    rep.recon_loss.push_back(eval.recon);
    rep.cluster_loss.push_back(eval.cluster);
    rep.total_loss.push_back(eval.total);
    rep.weights.push_back(model.head.weights);
    rep.centroid_shift.push_back(detail::row_shifts(means_before, model.head.means));
    std::vector<double> dets(k);
    for (std::size_t j = 0; j < k; ++j) dets[j] = model.head.covariance_determinant(j);
    rep.covariance_det.push_back(std::move(dets));
    rep.stop_epoch = epoch;
    if (early_stop_check(model.head.weights, k, config.early_stop_factor)) {
      rep.stop_reason = StopReason::weight_collapse;
      break;
    }
  }
  rep.posterior = posterior(lw.likelihood, model.head.weights);
  rep.labels = row_argmax(rep.posterior);
  rep.embedding = std::move(enc_full.values.back());
  rep.optimizer_steps = adam.head.step;
  return res;
}

// DEC (target KL only) or IDEC (reconstruction + γ·KL) on trainable
// centroids. The target is recomputed from the full data at every epoch.
inline TrainResult train_dec_variant(const DenseMatrix& x, std::size_t k, const GcealsConfig& config, Rng& rng) {
  config.validate();
  if (config.mode == TrainMode::gceals) throw std::invalid_argument("train_dec_variant: mode must be dec or idec");
  if (k < 2) throw std::invalid_argument("train_dec_variant: k must be >= 2");
  if (k > x.rows()) throw std::invalid_argument("train_dec_variant: k exceeds sample count");

  auto start = detail::pretrain_and_seed(x, k, config, rng);
  TrainResult res;
  auto& model = res.model;
  auto& rep = res.report;
  rep.mode = config.mode;
  rep.pretrain_loss = std::move(start.pretrain_loss);
  rep.pseudo_labels = start.kmeans.labels;
  model.autoencoder = std::move(start.autoencoder);
  model.head = ClusterHead::from_centroids(start.kmeans.centroids);

  detail::FinetuneOptimizer adam(model, std::move(start.optimizer), config);
  Rng batch_rng = rng.split();
  Activations enc_full = forward(model.autoencoder.encoder, x);
  DenseMatrix q_full = tdist_q(enc_full.output(), model.head.means);

  for (std::size_t epoch = 1; epoch <= config.finetune_epochs; ++epoch) {
    const DenseMatrix target_full = dec_target(q_full);
    auto batch = balanced_batches(rep.pseudo_labels, k, config.batch_cap, batch_rng).front();
    auto target = gather_rows(target_full, batch);
    auto eval = tdist_loss_and_gradients(model, detail::gather_activations(enc_full, batch), target, config.mode,
                                         config.gamma);
    if (!detail::all_finite(eval)) throw DivergenceError("fine-tuning", epoch);
    const DenseMatrix means_before = model.head.means;
    adam.step(eval);

    enc_full = forward(model.autoencoder.encoder, x);
    q_full = tdist_q(enc_full.output(), model.head.means);
    model.head.weights = column_means(q_full);

    rep.recon_loss.push_back(eval.recon);
    rep.cluster_loss.push_back(eval.cluster);
    rep.total_loss.push_back(eval.total);
    rep.weights.push_back(model.head.weights);
    rep.centroid_shift.push_back(detail::row_shifts(means_before, model.head.means));
    rep.covariance_det.emplace_back(k, 1.0);
    rep.stop_epoch = epoch;
  }
  rep.posterior = q_full;
  rep.labels = row_argmax(q_full);
  rep.embedding = std::move(enc_full.values.back());
  rep.optimizer_steps = adam.head.step;
  return res;
}

inline TrainResult train(const DenseMatrix& x, std::size_t k, const GcealsConfig& config, Rng& rng) {
  return config.mode == TrainMode::gceals ? train_gceals(x, k, config, rng) : train_dec_variant(x, k, config, rng);
}

}  // namespace gceals
