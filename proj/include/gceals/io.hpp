#pragma once

// File formats: matrix/label CSV, JSON documents for stats, metrics, cluster
// results and training reports, the per-epoch trace CSV, and the binary model
// checkpoint.

#include "json.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "gceals/baselines.hpp"
#include "gceals/dataset.hpp"
#include "gceals/error.hpp"
#include "gceals/linalg.hpp"
#include "gceals/metrics.hpp"
#include "gceals/training.hpp"

namespace gceals {

using json = nlohmann::ordered_json;

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string format_fixed(double v, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Header row followed by one row per sample; values round-trip exactly.
inline std::string matrix_to_csv(const DenseMatrix& x, const std::vector<std::string>& header = {}) {
  std::ostringstream os;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    if (c) os << ',';
    os << (header.empty() ? "f" + std::to_string(c) : header[c]);
  }
  os << '\n';
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (c) os << ',';
      os << format_double(x(r, c));
    }
    os << '\n';
  }
  return os.str();
}

// Reads a purely numeric CSV with a header row.
inline DenseMatrix matrix_from_csv(std::istream& in) {
  auto ds = parse_csv(in, "matrix");
  DenseMatrix x(ds.n, ds.columns.size());
  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    if (ds.columns[c].kind != ColumnKind::numeric)
      throw IngestionError("matrix csv: column '" + ds.columns[c].name + "' is not numeric");
    for (std::size_t r = 0; r < ds.n; ++r) x(r, c) = ds.columns[c].numbers[r];
  }
  return x;
}

// Embedding columns z0..z{m-1} followed by the hard label.
inline std::string embedding_to_csv(const DenseMatrix& z, std::span<const int> labels) {
  std::ostringstream os;
  for (std::size_t c = 0; c < z.cols(); ++c) os << 'z' << c << ',';
  os << "label\n";
  for (std::size_t r = 0; r < z.rows(); ++r) {
    for (std::size_t c = 0; c < z.cols(); ++c) os << format_double(z(r, c)) << ',';
    os << labels[r] << '\n';
  }
  return os.str();
}

inline json matrix_to_json(const DenseMatrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

inline DenseMatrix matrix_from_json(const json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j.at(0).size() : 0;
  DenseMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) throw ShapeError("matrix json: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

inline json stats_to_json(const DatasetStats& s) {
  return json{{"name", s.name},
              {"n", s.n},
              {"feature_dimension", s.feature_dimension},
              {"classes", s.classes},
              {"fs_ratio", s.fs_ratio},
              {"c_score", s.c_score}};
}

// `{"acc", "ari", "nmi"}` rounded to 6 decimals, as fixed text.
inline std::string metrics_to_json_text(const MetricScores& m) {
  return "{\"acc\": " + format_fixed(m.acc, 6) + ", \"ari\": " + format_fixed(m.ari, 6) +
         ", \"nmi\": " + format_fixed(m.nmi, 6) + "}\n";
}

inline MetricScores metrics_from_json(const json& j) {
  return {j.at("acc").get<double>(), j.at("ari").get<double>(), j.at("nmi").get<double>()};
}

inline json kmeans_to_json(const KMeansResult& r) {
  return json{{"centroids", matrix_to_json(r.centroids)},
              {"labels", r.labels},
              {"inertia", r.inertia},
              {"iterations", r.iterations}};
}

inline json gmm_to_json(const GmmResult& g) {
  json covs = json::array();
  for (const auto& c : g.covariances) covs.push_back(matrix_to_json(c));
  return json{{"means", matrix_to_json(g.means)},
              {"covariances", covs},
              {"mixing_weights", g.mixing_weights},
              {"labels", g.labels},
              {"log_likelihood", g.log_likelihood_trace}};
}

inline json train_report_to_json(const TrainReport& r) {
  return json{{"mode", to_string(r.mode)},
              {"stop_epoch", r.stop_epoch},
              {"stop_reason", to_string(r.stop_reason)},
              {"optimizer_steps", r.optimizer_steps},
              {"pretrain_loss", r.pretrain_loss},
              {"recon_loss", r.recon_loss},
              {"cluster_loss", r.cluster_loss},
              {"total_loss", r.total_loss},
              {"weights", r.weights},
              {"centroid_shift", r.centroid_shift},
              {"covariance_det", r.covariance_det},
              {"pseudo_labels", r.pseudo_labels},
              {"labels", r.labels},
              {"posterior", matrix_to_json(r.posterior)}};
}

inline TrainReport train_report_from_json(const json& j) {
  TrainReport r;
  r.mode = train_mode_from_string(j.at("mode").get<std::string>());
  r.stop_epoch = j.at("stop_epoch").get<std::size_t>();
  r.stop_reason = j.at("stop_reason").get<std::string>() == "completed" ? StopReason::completed : StopReason::weight_collapse;
  r.optimizer_steps = j.at("optimizer_steps").get<std::uint64_t>();
  j.at("pretrain_loss").get_to(r.pretrain_loss);
  j.at("recon_loss").get_to(r.recon_loss);
  j.at("cluster_loss").get_to(r.cluster_loss);
  j.at("total_loss").get_to(r.total_loss);
  j.at("weights").get_to(r.weights);
  j.at("centroid_shift").get_to(r.centroid_shift);
  j.at("covariance_det").get_to(r.covariance_det);
  j.at("pseudo_labels").get_to(r.pseudo_labels);
  j.at("labels").get_to(r.labels);
  r.posterior = matrix_from_json(j.at("posterior"));
  return r;
}

// epoch, recon_loss, cluster_loss, min_weight, max_centroid_shift, min_cov_det
inline std::string trace_to_csv(const TrainReport& r) {
  std::ostringstream os;
  os << "epoch,recon_loss,cluster_loss,min_weight,max_centroid_shift,min_cov_det\n";
  for (std::size_t t = 0; t < r.epochs_run(); ++t) {
    const auto& w = r.weights[t];
    const auto& s = r.centroid_shift[t];
    const auto& d = r.covariance_det[t];
    os << (t + 1) << ',' << format_double(r.recon_loss[t]) << ',' << format_double(r.cluster_loss[t]) << ','
       << format_double(*std::min_element(w.begin(), w.end())) << ','
       << format_double(*std::max_element(s.begin(), s.end())) << ','
       << format_double(*std::min_element(d.begin(), d.end())) << '\n';
  }
  return os.str();
}

// Checkpoint layout: 8-byte magic "GCEALSCK", u32 format version, u64 length
// of a JSON metadata block, the JSON text, then every tensor listed in the
// metadata as raw little-endian float64 in listed order.
inline constexpr char kCheckpointMagic[8] = {'G', 'C', 'E', 'A', 'L', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainMode mode = TrainMode::gceals;
  GcealsModel model;
  std::uint64_t optimizer_step = 0;
};

namespace detail {

inline json network_meta(const Network& net) {
  json layers = json::array();
  for (const auto& l : net.layers)
    layers.push_back({{"fan_in", l.weight.rows()}, {"fan_out", l.weight.cols()}, {"activation", to_string(l.activation)}});
  return layers;
}

inline Network network_from_meta(const json& layers) {
  Network net;
  for (const auto& lj : layers) {
    DenseLayer l;
    l.weight = DenseMatrix(lj.at("fan_in").get<std::size_t>(), lj.at("fan_out").get<std::size_t>());
    l.bias.assign(l.weight.cols(), 0.0);
    l.activation = activation_from_string(lj.at("activation").get<std::string>());
    net.layers.push_back(std::move(l));
  }
  return net;
}

// Same order as GcealsModel::parameters().
template <class Fn>
void for_each_tensor(const GcealsModel& model, Fn&& fn) {
  auto net = [&](const Network& n) {
    for (const auto& l : n.layers) {
      fn(l.weight.values());
      fn(std::span<const double>(l.bias));
    }
  };
  net(model.autoencoder.encoder);
  net(model.autoencoder.decoder);
  fn(model.head.means.values());
  fn(model.head.log_variances.values());
  net(model.mlp.net);
}

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian doubles");
  json meta{{"format", "gceals-checkpoint"},
            {"version", kCheckpointVersion},
            {"mode", to_string(ck.mode)},
            {"optimizer_step", ck.optimizer_step},
            {"plan",
             {{"sizes", ck.model.autoencoder.plan.sizes},
              {"activations", [&] {
                 std::vector<std::string> a;
                 for (auto act : ck.model.autoencoder.plan.activations) a.push_back(to_string(act));
                 return a;
               }()},
              {"bottleneck", ck.model.autoencoder.plan.bottleneck}}},
            {"encoder", detail::network_meta(ck.model.autoencoder.encoder)},
            {"decoder", detail::network_meta(ck.model.autoencoder.decoder)},
            {"clusters", ck.model.head.clusters()},
            {"embedding_dim", ck.model.head.dim()},
            {"cluster_weights", ck.model.head.weights},
            {"mlp", detail::network_meta(ck.model.mlp.net)}};
  const std::string text = meta.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_pod(out, kCheckpointVersion);
  detail::write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::for_each_tensor(ck.model, [&](std::span<const double> tensor) {
    out.write(reinterpret_cast<const char*>(tensor.data()), static_cast<std::streamsize>(tensor.size_bytes()));
  });
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto len = detail::read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint: truncated metadata");
  const json meta = json::parse(text);

  Checkpoint ck;
  ck.mode = train_mode_from_string(meta.at("mode").get<std::string>());
  ck.optimizer_step = meta.at("optimizer_step").get<std::uint64_t>();
  auto& plan = ck.model.autoencoder.plan;
  meta.at("plan").at("sizes").get_to(plan.sizes);
  for (const auto& a : meta.at("plan").at("activations")) plan.activations.push_back(activation_from_string(a.get<std::string>()));
  plan.bottleneck = meta.at("plan").at("bottleneck").get<std::size_t>();
  plan.validate();
  ck.model.autoencoder.encoder = detail::network_from_meta(meta.at("encoder"));
  ck.model.autoencoder.decoder = detail::network_from_meta(meta.at("decoder"));
  const auto k = meta.at("clusters").get<std::size_t>();
  const auto m = meta.at("embedding_dim").get<std::size_t>();
  ck.model.head.means = DenseMatrix(k, m);
  ck.model.head.log_variances = DenseMatrix(k, m);
  meta.at("cluster_weights").get_to(ck.model.head.weights);
  ck.model.mlp.net = detail::network_from_meta(meta.at("mlp"));
  for (auto tensor : ck.model.parameters()) {
    in.read(reinterpret_cast<char*>(tensor.data()), static_cast<std::streamsize>(tensor.size_bytes()));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
  }
  return ck;
}

}  // namespace gceals
