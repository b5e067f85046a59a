#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "gceals/io.hpp"

using namespace gceals;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gceals_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

GcealsModel small_model(Rng& rng) {
  GcealsModel m;
  m.autoencoder = init_autoencoder(LayerPlan::autoencoder(5, 2, {4}), rng);
  m.head = ClusterHead::from_centroids(randn(rng, 3, 2));
  for (double& v : m.head.log_variances.values()) v = rng.uniform(-1, 1);
  m.head.weights = {0.2, 0.3, 0.5};
  m.mlp = init_mlp_head(2, 3, rng, 6);
  return m;
}

}  // namespace

TEST(Format, ShortestRoundTrip) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_fixed(0.1234567, 6), "0.123457");
}

TEST(MatrixCsv, RoundTripExact) {
  Rng rng(2);
  auto x = randn(rng, 7, 4);
  const auto text = matrix_to_csv(x);
  EXPECT_EQ(text.substr(0, text.find('\n')), "f0,f1,f2,f3");
  std::istringstream in(text);
  EXPECT_EQ(matrix_from_csv(in), x);
}

TEST(MatrixCsv, EmbeddingExportReadsBack) {
  DenseMatrix z{{0.25, -1.0}, {3.5, 2.0}};
  std::vector<int> labels{1, 0};
  const auto text = embedding_to_csv(z, labels);
  EXPECT_EQ(text, "z0,z1,label\n0.25,-1,1\n3.5,2,0\n");
  std::istringstream in(text);
  auto ds = parse_csv(in, "emb", std::string("label"));
  EXPECT_EQ(ds.columns.size(), 2u);
  EXPECT_EQ(ds.columns[1].numbers, (std::vector<double>{-1.0, 2.0}));
  // ids are by first appearance, so the raw names carry the label values
  EXPECT_EQ(ds.label_names, (std::vector<std::string>{"1", "0"}));
}

TEST(MetricsJson, SixDecimalsAndRoundTrip) {
  MetricScores m{0.9123456789, -0.0000004, 1.0};
  const auto text = metrics_to_json_text(m);
  EXPECT_EQ(text, "{\"acc\": 0.912346, \"ari\": -0.000000, \"nmi\": 1.000000}\n");
  auto back = metrics_from_json(json::parse(text));
  EXPECT_NEAR(back.acc, m.acc, 5e-7);
  EXPECT_NEAR(back.nmi, 1.0, 0.0);
}

TEST(StatsJson, Keys) {
  DatasetStats s{"kc2", 522, 21, 2, 100.0 * 21 / 522, 0.5};
  auto j = stats_to_json(s);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"name", "n", "feature_dimension", "classes", "fs_ratio", "c_score"}));
  EXPECT_NEAR(j["fs_ratio"].get<double>(), 4.023, 5e-4);
}

TEST(BaselineJson, NestedArrays) {
  KMeansResult r;
  r.centroids = DenseMatrix{{1, 2}, {3, 4}};
  r.labels = {0, 1, 1};
  auto j = kmeans_to_json(r);
  EXPECT_EQ(j["centroids"].dump(), "[[1.0,2.0],[3.0,4.0]]");
  EXPECT_EQ(j["labels"].dump(), "[0,1,1]");
  EXPECT_EQ(matrix_from_json(j["centroids"]), r.centroids);
}

TEST(TrainReportJson, RoundTrip) {
  TrainReport r;
  r.mode = TrainMode::gceals;
  r.pretrain_loss = {3.0, 2.0};
  r.recon_loss = {1.5, 1.25};
  r.cluster_loss = {0.7, 0.6};
  r.total_loss = {1.57, 1.31};
  r.weights = {{0.5, 0.5}, {0.8, 0.2}};
  r.centroid_shift = {{0.1, 0.2}, {0.05, 0.01}};
  r.covariance_det = {{1.0, 1.1}, {0.9, 1.2}};
  r.pseudo_labels = {0, 1, 1};
  r.labels = {0, 0, 1};
  r.posterior = DenseMatrix{{0.9, 0.1}, {0.6, 0.4}, {0.3, 0.7}};
  r.stop_epoch = 2;
  r.stop_reason = StopReason::weight_collapse;
  r.optimizer_steps = 2;
  auto j = train_report_to_json(r);
  auto back = train_report_from_json(json::parse(j.dump()));
  EXPECT_EQ(back.recon_loss, r.recon_loss);
  EXPECT_EQ(back.weights, r.weights);
  EXPECT_EQ(back.posterior, r.posterior);
  EXPECT_EQ(back.stop_reason, StopReason::weight_collapse);
  EXPECT_EQ(back.labels, r.labels);
  EXPECT_EQ(j["stop_reason"], "weight-collapse");
}

TEST(TraceCsv, SchemaAndReducers) {
  TrainReport r;
  r.recon_loss = {1.5, 1.25};
  r.cluster_loss = {0.75, 0.5};
  r.weights = {{0.5, 0.5}, {0.875, 0.125}};
  r.centroid_shift = {{0.25, 0.5}, {0.0625, 0.125}};
  r.covariance_det = {{1.0, 2.0}, {0.5, 4.0}};
  EXPECT_EQ(trace_to_csv(r),
            "epoch,recon_loss,cluster_loss,min_weight,max_centroid_shift,min_cov_det\n"
            "1,1.5,0.75,0.5,0.5,1\n"
            "2,1.25,0.5,0.125,0.125,0.5\n");
  std::istringstream in(trace_to_csv(r));
  auto m = matrix_from_csv(in);
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m(1, 3), 0.125);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(3);
  Checkpoint ck{TrainMode::gceals, small_model(rng), 42};
  const auto dir = scratch("ck");
  save_checkpoint(dir / "sub" / "model.bin", ck);
  auto back = load_checkpoint(dir / "sub" / "model.bin");
  EXPECT_EQ(back.mode, TrainMode::gceals);
  EXPECT_EQ(back.optimizer_step, 42u);
  EXPECT_EQ(back.model.autoencoder.plan, ck.model.autoencoder.plan);
  EXPECT_EQ(back.model.head.weights, ck.model.head.weights);
  auto a = ck.model.parameters();
  auto b = back.model.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(std::equal(a[i].begin(), a[i].end(), b[i].begin(), b[i].end()));
  // The restored model computes the same embedding.
  auto x = randn(rng, 4, 5);
  EXPECT_EQ(back.model.autoencoder.encode(x), ck.model.autoencoder.encode(x));
  fs::remove_all(dir);
}

TEST(Checkpoint, TDistModelWithoutMlp) {
  Rng rng(4);
  auto model = small_model(rng);
  model.mlp = MlpHead{};
  Checkpoint ck{TrainMode::idec, model, 7};
  const auto dir = scratch("ck2");
  save_checkpoint(dir / "m.bin", ck);
  auto back = load_checkpoint(dir / "m.bin");
  EXPECT_EQ(back.mode, TrainMode::idec);
  EXPECT_TRUE(back.model.mlp.net.layers.empty());
  EXPECT_EQ(back.model.head.means, ck.model.head.means);
  fs::remove_all(dir);
}

TEST(Checkpoint, CorruptFilesRejected) {
  const auto dir = scratch("ck3");
  write_text(dir / "bad.bin", "NOTACHECKPOINT");
  EXPECT_THROW(load_checkpoint(dir / "bad.bin"), std::runtime_error);
  Rng rng(5);
  save_checkpoint(dir / "ok.bin", Checkpoint{TrainMode::gceals, small_model(rng), 1});
  auto bytes = read_text(dir / "ok.bin");
  write_text(dir / "short.bin", bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW(load_checkpoint(dir / "short.bin"), std::runtime_error);
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), std::runtime_error);
  fs::remove_all(dir);
}
