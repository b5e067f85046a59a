#pragma once

// Fully connected networks with explicit forward/backward passes, the Adam
// optimizer, and autoencoder pretraining on the reconstruction objective.

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gceals/error.hpp"
#include "gceals/linalg.hpp"

namespace gceals {

enum class Activation { relu, linear };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "linear"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "linear") return Activation::linear;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

// Layer widths plus one activation per weight layer. For autoencoders,
// `bottleneck` is the index into `sizes` of the embedding layer.
struct LayerPlan {
  std::vector<std::size_t> sizes;
  std::vector<Activation> activations;
  std::size_t bottleneck = 0;

  static LayerPlan autoencoder(std::size_t input_dim, std::size_t embedding_dim,
                               const std::vector<std::size_t>& hidden = {500, 500, 2000}) {
    LayerPlan p;
    p.sizes.push_back(input_dim);
    for (auto h : hidden) p.sizes.push_back(h);
    p.bottleneck = p.sizes.size();
    p.sizes.push_back(embedding_dim);
    for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) p.sizes.push_back(*it);
    p.sizes.push_back(input_dim);
    for (std::size_t i = 0; i + 1 < p.sizes.size(); ++i) {
      const bool linear = (i + 1 == p.bottleneck) || (i + 2 == p.sizes.size());
      p.activations.push_back(linear ? Activation::linear : Activation::relu);
    }
    p.validate();
    return p;
  }

  static LayerPlan mlp(std::size_t input_dim, std::size_t hidden, std::size_t output_dim) {
    LayerPlan p;
    p.sizes = {input_dim, hidden, output_dim};
    p.activations = {Activation::relu, Activation::linear};
    p.bottleneck = 0;
    p.validate();
    return p;
  }

  std::size_t input_width() const { return sizes.front(); }
  std::size_t output_width() const { return sizes.back(); }
  std::size_t embedding_width() const { return sizes.at(bottleneck); }

  LayerPlan encoder() const { return slice(0, bottleneck); }
  LayerPlan decoder() const { return slice(bottleneck, sizes.size() - 1); }

  void validate() const {
    if (sizes.size() < 2) throw std::invalid_argument("LayerPlan: need at least two widths");
    if (activations.size() + 1 != sizes.size())
      throw std::invalid_argument("LayerPlan: one activation per weight layer required");
    for (auto s : sizes)
      if (s == 0) throw std::invalid_argument("LayerPlan: zero layer width");
    if (bottleneck >= sizes.size()) throw std::invalid_argument("LayerPlan: bottleneck out of range");
  }

  friend bool operator==(const LayerPlan&, const LayerPlan&) = default;

 private:
  LayerPlan slice(std::size_t from, std::size_t to) const {
    LayerPlan p;
    p.sizes.assign(sizes.begin() + static_cast<long>(from), sizes.begin() + static_cast<long>(to) + 1);
    p.activations.assign(activations.begin() + static_cast<long>(from), activations.begin() + static_cast<long>(to));
    return p;
  }
};

struct DenseLayer {
  DenseMatrix weight;  // fan_in x fan_out, y = x W + b
  std::vector<double> bias;
  Activation activation = Activation::linear;
};

struct Network {
  std::vector<DenseLayer> layers;

  std::size_t input_width() const { return layers.front().weight.rows(); }
  std::size_t output_width() const { return layers.back().weight.cols(); }

  std::vector<std::span<double>> parameters() {
    std::vector<std::span<double>> out;
    for (auto& l : layers) {
      out.push_back(l.weight.values());
      out.push_back(l.bias);
    }
    return out;
  }

  LayerPlan plan() const {
    LayerPlan p;
    p.sizes.push_back(input_width());
    for (const auto& l : layers) {
      p.sizes.push_back(l.weight.cols());
      p.activations.push_back(l.activation);
    }
    return p;
  }
};

// Glorot-uniform weights, zero biases.
inline Network init_network(const LayerPlan& plan, Rng& rng) {
  plan.validate();
  Network net;
  for (std::size_t i = 0; i + 1 < plan.sizes.size(); ++i) {
    const std::size_t fan_in = plan.sizes[i];
    const std::size_t fan_out = plan.sizes[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer;
    layer.weight = DenseMatrix(fan_in, fan_out);
    for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
    layer.bias.assign(fan_out, 0.0);
    layer.activation = plan.activations[i];
    net.layers.push_back(std::move(layer));
  }
  return net;
}

// values[0] is the input; values[i + 1] is the post-activation output of layer i.
struct Activations {
  std::vector<DenseMatrix> values;
  const DenseMatrix& output() const { return values.back(); }
};

inline Activations forward(const Network& net, const DenseMatrix& x) {
  if (net.layers.empty()) throw ShapeError("forward: empty network");
  if (x.cols() != net.input_width())
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                     std::to_string(net.input_width()));
  Activations acts;
  acts.values.reserve(net.layers.size() + 1);
  acts.values.push_back(x);
  for (const auto& layer : net.layers) {
    DenseMatrix y = matmul(acts.values.back(), layer.weight);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto row = y.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        const double v = row[c] + layer.bias[c];
        row[c] = layer.activation == Activation::relu ? (v > 0.0 ? v : 0.0) : v;
      }
    }
    acts.values.push_back(std::move(y));
  }
  return acts;
}

struct NetworkGradients {
  std::vector<DenseMatrix> weight;
  std::vector<std::vector<double>> bias;
  DenseMatrix input;  // dL/dx, empty unless requested

  std::vector<std::span<const double>> spans() const {
    std::vector<std::span<const double>> out;
    for (std::size_t i = 0; i < weight.size(); ++i) {
      out.push_back(weight[i].values());
      out.push_back(bias[i]);
    }
    return out;
  }
};

// Reverse-mode pass. `output_gradient` is dL/d(output of the last layer).
inline NetworkGradients backward(const Network& net, const Activations& acts, const DenseMatrix& output_gradient,
                                 bool want_input_gradient = true) {
  const std::size_t depth = net.layers.size();
  if (acts.values.size() != depth + 1) throw ShapeError("backward: activations do not match network depth");
  if (output_gradient.rows() != acts.output().rows() || output_gradient.cols() != acts.output().cols())
    throw ShapeError("backward: output gradient shape mismatch");
  NetworkGradients grads;
  grads.weight.resize(depth);
  grads.bias.resize(depth);
  DenseMatrix g = output_gradient;
  for (std::size_t li = depth; li-- > 0;) {
    const auto& layer = net.layers[li];
    const auto& out = acts.values[li + 1];
    if (layer.activation == Activation::relu) {
      auto gv = g.values();
      auto ov = out.values();
      for (std::size_t i = 0; i < gv.size(); ++i)
        if (!(ov[i] > 0.0)) gv[i] = 0.0;
    }
    grads.weight[li] = matmul_tn(acts.values[li], g);
    auto& db = grads.bias[li];
    db.assign(g.cols(), 0.0);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto row = g.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
    }
    if (li > 0 || want_input_gradient) g = matmul_nt(g, layer.weight);
  }
  if (want_input_gradient) grads.input = std::move(g);
  return grads;
}

// (1/N) Σ_i ||x_i − x̂_i||²
inline double reconstruction_loss(const DenseMatrix& x, const DenseMatrix& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) throw ShapeError("reconstruction_loss: shape mismatch");
  if (x.rows() == 0) return 0.0;
  double s = 0.0;
  auto a = x.values();
  auto b = x_hat.values();
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(x.rows());
}

// dL/dx̂ of reconstruction_loss.
inline DenseMatrix reconstruction_gradient(const DenseMatrix& x, const DenseMatrix& x_hat) {
  DenseMatrix g(x.rows(), x.cols());
  const double scale = 2.0 / static_cast<double>(x.rows());
  auto a = x.values();
  auto b = x_hat.values();
  auto o = g.values();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = scale * (b[i] - a[i]);
  return g;
}

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  AdamState() = default;
  AdamState(std::span<const std::span<double>> params, double lr) : learning_rate(lr) {
    for (const auto& p : params) {
      first_moment.emplace_back(p.size(), 0.0);
      second_moment.emplace_back(p.size(), 0.0);
    }
  }
};

// One bias-corrected Adam update applied in place. The corrections are folded
// into the step size and epsilon: m̂/(√v̂+ε) = (√c2/c1)·m/(√v+ε√c2), which
// leaves one division and one square root per element.
inline void adam_step(AdamState& state, std::span<const std::span<double>> params,
                      std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw ShapeError("adam_step: parameter/gradient/state tensor counts differ");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double step = state.learning_rate * std::sqrt(c2) / c1;
  const double eps = state.epsilon * std::sqrt(c2);
  const double b1 = state.beta1, b2 = state.beta2;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size() || params[k].size() != state.first_moment[k].size())
      throw ShapeError("adam_step: tensor size mismatch");
    double* __restrict p = params[k].data();
    const double* __restrict g = grads[k].data();
    double* __restrict m = state.first_moment[k].data();
    double* __restrict v = state.second_moment[k].data();
    const std::size_t n = params[k].size();
    for (std::size_t i = 0; i < n; ++i) {
      const double mi = b1 * m[i] + (1.0 - b1) * g[i];
      const double vi = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      m[i] = mi;
      v[i] = vi;
      p[i] -= step * mi / (std::sqrt(vi) + eps);
    }
  }
}

struct Autoencoder {
  LayerPlan plan;
  Network encoder;
  Network decoder;

  std::vector<std::span<double>> parameters() {
    auto out = encoder.parameters();
    auto dec = decoder.parameters();
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
  }

  DenseMatrix encode(const DenseMatrix& x) const { return forward(encoder, x).output(); }
  DenseMatrix reconstruct(const DenseMatrix& x) const { return forward(decoder, encode(x)).output(); }
};

inline Autoencoder init_autoencoder(const LayerPlan& plan, Rng& rng) {
  plan.validate();
  if (plan.bottleneck == 0 || plan.bottleneck + 1 >= plan.sizes.size())
    throw std::invalid_argument("autoencoder plan needs an interior bottleneck");
  Autoencoder ae;
  ae.plan = plan;
  ae.encoder = init_network(plan.encoder(), rng);
  ae.decoder = init_network(plan.decoder(), rng);
  return ae;
}

// Two-layer head m -> hidden (ReLU) -> K (linear logits).
struct MlpHead {
  Network net;
  std::size_t clusters() const { return net.output_width(); }
  std::vector<std::span<double>> parameters() { return net.parameters(); }
};

inline MlpHead init_mlp_head(std::size_t embedding_dim, std::size_t clusters, Rng& rng, std::size_t hidden = 256) {
  return MlpHead{init_network(LayerPlan::mlp(embedding_dim, hidden, clusters), rng)};
}

struct PretrainResult {
  Autoencoder autoencoder;
  std::vector<double> loss_trace;  // per-epoch mean reconstruction loss
  std::uint64_t optimizer_steps = 0;
  AdamState optimizer;  // moments at the end of pretraining
};

struct PretrainOptions {
  std::size_t epochs = 1000;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::vector<std::size_t> hidden = {500, 500, 2000};
};

// Gradient of the reconstruction loss for one batch, through decoder and encoder.
inline double reconstruction_step(Autoencoder& ae, const DenseMatrix& xb, AdamState& adam) {
  auto enc = forward(ae.encoder, xb);
  auto dec = forward(ae.decoder, enc.output());
  const double loss = reconstruction_loss(xb, dec.output());
  auto g_dec = backward(ae.decoder, dec, reconstruction_gradient(xb, dec.output()), true);
  auto g_enc = backward(ae.encoder, enc, g_dec.input, false);
  auto grads = g_enc.spans();
  auto dg = g_dec.spans();
  grads.insert(grads.end(), dg.begin(), dg.end());
  auto params = ae.parameters();
  adam_step(adam, params, grads);
  return loss;
}

// Shuffled mini-batch Adam on the reconstruction loss; the last partial batch is kept.
inline PretrainResult pretrain_autoencoder(const DenseMatrix& x, std::size_t embedding_dim, const PretrainOptions& opt,
                                           Rng& rng) {
  if (opt.epochs == 0) throw std::invalid_argument("pretrain_autoencoder: epochs must be >= 1");
  if (opt.batch_size == 0) throw std::invalid_argument("pretrain_autoencoder: batch size must be >= 1");
  if (x.rows() == 0) throw std::invalid_argument("pretrain_autoencoder: empty input");
  PretrainResult res;
  res.autoencoder = init_autoencoder(LayerPlan::autoencoder(x.cols(), embedding_dim, opt.hidden), rng);
  auto params = res.autoencoder.parameters();
  AdamState adam(params, opt.learning_rate);
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opt.batch_size);
      auto xb = gather_rows(x, std::span<const std::size_t>(order).subspan(start, stop - start));
      total += reconstruction_step(res.autoencoder, xb, adam) * static_cast<double>(stop - start);
    }
    const double loss = total / static_cast<double>(x.rows());
    if (!std::isfinite(loss)) throw DivergenceError("pretraining", epoch);
    res.loss_trace.push_back(loss);
  }
  res.optimizer_steps = adam.step;
  res.optimizer = std::move(adam);
  return res;
}

inline PretrainResult pretrain_autoencoder(const DenseMatrix& x, std::size_t embedding_dim, std::size_t epochs,
                                           std::size_t batch_size, Rng& rng) {
  PretrainOptions opt;
  opt.epochs = epochs;
  opt.batch_size = batch_size;
  return pretrain_autoencoder(x, embedding_dim, opt, rng);
}

}  // namespace gceals
