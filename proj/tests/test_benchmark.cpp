#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "gceals/commands.hpp"

using namespace gceals;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gceals_bm_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Two or three Gaussian blobs written as a labelled CSV.
std::string write_blobs(const fs::path& dir, const std::string& name, std::size_t k, std::size_t per, double sep,
                        std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream os;
  os << "a,b,c,class\n";
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < per; ++i)
      os << sep * static_cast<double>(c) + rng.normal() << ',' << rng.normal() << ','
         << (c % 2 ? sep : 0.0) + rng.normal() << ",k" << c << '\n';
  const auto path = dir / (name + ".csv");
  write_text(path, os.str());
  return path.string();
}

RunConfig tiny_config(const fs::path& dir) {
  RunConfig c;
  c.datasets = {write_blobs(dir, "one", 2, 30, 6.0, 1), write_blobs(dir, "two", 3, 20, 6.0, 2),
                write_blobs(dir, "three", 2, 25, 4.0, 3)};
  c.methods = {Method::kmeans_x, Method::gmm_x};
  c.dims = {2, 3};
  c.seeds = {0};
  c.out = (dir / "out").string();
  return c;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Synthetic report with pinned scores, for checking aggregation alone.
BenchmarkReport synthetic_report(const RunConfig& cfg, const std::vector<std::vector<double>>& acc_by_dataset_method) {
  BenchmarkReport rep;
  rep.methods = cfg.methods;
  for (std::size_t d = 0; d < acc_by_dataset_method.size(); ++d) rep.dataset_names.push_back("d" + std::to_string(d));
  RunConfig c = cfg;
  c.datasets = rep.dataset_names;
  rep.jobs = enumerate_jobs(c);
  for (const auto& j : rep.jobs) {
    JobResult r;
    r.ok = true;
    std::size_t mi = 0;
    while (rep.methods[mi] != j.method) ++mi;
    const double a = acc_by_dataset_method[j.dataset][mi];
    r.scores = {a, a / 2, a / 3};
    r.stop_reason = "completed";
    rep.results.push_back(r);
  }
  return rep;
}

}  // namespace

TEST(Ranks, DescendingWithAveragedTies) {
  std::vector<double> v{0.9, 0.5, 0.9, 0.1};
  EXPECT_EQ(descending_ranks(v), (std::vector<double>{1.5, 3.0, 1.5, 4.0}));
  std::vector<double> all{2.0, 2.0, 2.0};
  EXPECT_EQ(descending_ranks(all), (std::vector<double>{2.0, 2.0, 2.0}));
}

TEST(Ranks, DominatingMethodAveragesRankOne) {
  RunConfig cfg;
  cfg.methods = {Method::gceals, Method::kmeans_x};
  cfg.dims = {5};
  auto rep = synthetic_report(cfg, {{0.9, 0.5}, {0.8, 0.7}, {0.95, 0.1}});
  aggregate(rep, cfg);
  ASSERT_EQ(rep.ranking.size(), 2u);
  EXPECT_EQ(rep.ranking[0].acc_rank_mean, 1.0);
  EXPECT_EQ(rep.ranking[0].acc_rank_std, 0.0);
  EXPECT_EQ(rep.ranking[1].acc_rank_mean, 2.0);
  EXPECT_EQ(rep.ranking[1].ari_rank_mean, 2.0);
}

TEST(Ranks, MeanAndPopulationStd) {
  RunConfig cfg;
  cfg.methods = {Method::gceals, Method::kmeans_x, Method::gmm_x};
  cfg.dims = {5};
  // method ranks per dataset: (1,2,3), (3,1,2), (2,2,... tie) -> third dataset ties first two
  auto rep = synthetic_report(cfg, {{0.9, 0.5, 0.1}, {0.1, 0.9, 0.5}, {0.5, 0.5, 0.2}});
  aggregate(rep, cfg);
  // gceals ranks 1, 3, 1.5 -> mean 11/6
  const double mean = (1.0 + 3.0 + 1.5) / 3.0;
  const double var = ((1 - mean) * (1 - mean) + (3 - mean) * (3 - mean) + (1.5 - mean) * (1.5 - mean)) / 3.0;
  EXPECT_NEAR(rep.ranking[0].acc_rank_mean, mean, 1e-12);
  EXPECT_NEAR(rep.ranking[0].acc_rank_std, std::sqrt(var), 1e-12);
  double total = 0.0;
  for (const auto& r : rep.ranking) total += r.acc_rank_mean;
  EXPECT_NEAR(total, 6.0, 1e-12);  // ranks over 3 methods always sum to 6
}

TEST(Ranks, BestDimByMeanAccSmallestOnTies) {
  RunConfig cfg;
  cfg.methods = {Method::gceals, Method::kmeans_x};
  cfg.dims = {10, 5, 20};
  cfg.seeds = {0, 1};
  BenchmarkReport rep;
  rep.methods = cfg.methods;
  rep.dataset_names = {"d0"};
  RunConfig c = cfg;
  c.datasets = rep.dataset_names;
  rep.jobs = enumerate_jobs(c);
  for (const auto& j : rep.jobs) {
    JobResult r;
    r.ok = true;
    // dims 5 and 20 tie at mean 0.8, dim 10 is lower
    double a = j.dim == 10 ? 0.6 : (j.seed == 0 ? 0.7 : 0.9);
    if (j.method == Method::kmeans_x) a = 0.5;
    r.scores = {a, 0.0, 0.0};
    rep.results.push_back(r);
  }
  aggregate(rep, cfg);
  EXPECT_EQ(rep.best[0][0].dim, 5u);
  EXPECT_NEAR(rep.best[0][0].scores.acc, 0.8, 1e-12);
  EXPECT_EQ(rep.best[0][1].dim, 5u);
}

TEST(Ranks, FailedRunExcludesDataset) {
  RunConfig cfg;
  cfg.methods = {Method::gceals, Method::kmeans_x};
  cfg.dims = {5};
  auto rep = synthetic_report(cfg, {{0.9, 0.5}, {0.1, 0.7}});
  rep.results[2].ok = false;  // dataset 1, gceals
  rep.results[2].error = "boom";
  aggregate(rep, cfg);
  EXPECT_EQ(rep.excluded_datasets, (std::vector<std::string>{"d1"}));
  EXPECT_EQ(rep.ranking[0].acc_rank_mean, 1.0);
  EXPECT_TRUE(rep.acc_ranks[1].empty());
  const auto runs = runs_table_csv(rep);
  EXPECT_NE(runs.find("NA"), std::string::npos);
}

TEST(Seeds, JobSeedIsStableAndIgnoresMethod) {
  EXPECT_EQ(job_seed(0, "wdbc", 5), job_seed(0, "wdbc", 5));
  EXPECT_NE(job_seed(0, "wdbc", 5), job_seed(0, "wdbc", 10));
  EXPECT_NE(job_seed(0, "wdbc", 5), job_seed(1, "wdbc", 5));
  EXPECT_NE(job_seed(0, "wdbc", 5), job_seed(0, "kc2", 5));
  EXPECT_EQ(stable_hash(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(stable_hash("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Config, JsonRoundTripAndOverlay) {
  RunConfig c;
  c.datasets = {"x.csv"};
  c.methods = {Method::idec, Method::gmm_z};
  c.dims = {3, 7};
  c.gamma = 0.25;
  c.seeds = {4, 5};
  c.hidden = {16, 8};
  c.label_column = "target";
  RunConfig back;
  apply_config_json(back, json::parse(run_config_to_json(c).dump()));
  EXPECT_EQ(run_config_to_json(back), run_config_to_json(c));

  RunConfig d;
  apply_config_json(d, json::parse(R"({"method": "dec", "seed": 9, "gamma": 0.5})"));
  EXPECT_EQ(d.methods, (std::vector<Method>{Method::dec}));
  EXPECT_EQ(d.seeds, (std::vector<std::uint64_t>{9}));
  EXPECT_EQ(d.gamma, 0.5);
  EXPECT_EQ(d.dims, (std::vector<std::size_t>{5, 10, 15, 20}));

  EXPECT_THROW(method_from_string("spectral"), std::invalid_argument);
  for (auto m : {Method::gceals, Method::dec, Method::idec, Method::kmeans_x, Method::gmm_x, Method::kmeans_z,
                 Method::gmm_z})
    EXPECT_EQ(method_from_string(to_string(m)), m);
}

TEST(Config, ValidationErrors) {
  RunConfig c;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.datasets = {"x.csv"};
  c.validate();
  c.gamma = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.gamma = 0.1;
  c.dims = {0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.dims = {2};
  c.jobs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Benchmark, ReportCoversEveryCell) {
  const auto dir = scratch("cells");
  auto cfg = tiny_config(dir);
  std::ostringstream log;
  auto rep = run_benchmark(cfg, log);
  write_benchmark_outputs(rep, cfg.out);
  // 3 datasets x 2 methods x 2 dims x 1 seed
  auto rows = lines(read_text(fs::path(cfg.out) / "report.csv"));
  EXPECT_EQ(rows.size(), 1u + 12u);
  EXPECT_TRUE(rep.excluded_datasets.empty());
  for (const auto& r : rep.results) EXPECT_TRUE(r.ok) << r.error;
  for (const auto& j : rep.jobs) {
    auto p = job_directory(cfg.out, rep.dataset_names[j.dataset], j.method, j.dim, j.seed) / "metrics.json";
    ASSERT_TRUE(fs::exists(p)) << p;
    auto m = metrics_from_json(json::parse(read_text(p)));
    EXPECT_GE(m.acc, 0.0);
    EXPECT_LE(m.acc, 1.0);
  }
  fs::remove_all(dir);
}

TEST(Benchmark, EmittedFilesReadBack) {
  const auto dir = scratch("readback");
  auto cfg = tiny_config(dir);
  cfg.datasets.pop_back();
  cfg.methods = {Method::kmeans_x, Method::gceals, Method::kmeans_z};
  cfg.dims = {2};
  cfg.hidden = {8};
  cfg.pretrain_epochs = 5;
  cfg.finetune_epochs = 5;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_benchmark(cfg, out, err), 0) << err.str();
  const fs::path o = cfg.out;
  for (const char* f : {"report.csv", "summary.csv", "ranking.csv", "timings.csv"}) {
    std::ifstream in(o / f);
    auto ds = parse_csv(in, f);
    EXPECT_GT(ds.n, 0u) << f;
  }
  auto j = json::parse(read_text(o / "report.json"));
  EXPECT_EQ(j["runs"].size(), 2u * 3u);
  EXPECT_EQ(j["ranking"].size(), 3u);
  // Runtimes live only in timings.csv.
  EXPECT_EQ(read_text(o / "report.csv").find("runtime"), std::string::npos);
  EXPECT_EQ(read_text(o / "report.json").find("runtime"), std::string::npos);
  // Network jobs leave a trace, an embedding and a loadable checkpoint.
  auto g = job_directory(cfg.out, "one", Method::gceals, 2, 0);
  std::ifstream trace(g / "trace.csv");
  EXPECT_EQ(matrix_from_csv(trace).rows(), json::parse(read_text(g / "report.json"))["recon_loss"].size());
  std::ifstream emb(g / "embedding.csv");
  EXPECT_EQ(parse_csv(emb, "emb", std::string("label")).n, 60u);
  EXPECT_NO_THROW(load_checkpoint(g / "checkpoint.bin"));
  EXPECT_NO_THROW(load_checkpoint(job_directory(cfg.out, "one", Method::kmeans_z, 2, 0) / "checkpoint.bin"));
  fs::remove_all(dir);
}

TEST(Benchmark, NeedsTwoMethods) {
  const auto dir = scratch("two");
  auto cfg = tiny_config(dir);
  cfg.methods = {Method::kmeans_x};
  std::ostringstream out, err;
  EXPECT_EQ(cmd_benchmark(cfg, out, err), 1);
  EXPECT_NE(err.str().find("two methods"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Benchmark, WorkerCountDoesNotChangeOutputs) {
  const auto dir = scratch("jobs");
  auto cfg = tiny_config(dir);
  cfg.methods = {Method::kmeans_x, Method::gmm_x, Method::gceals};
  cfg.hidden = {8};
  cfg.pretrain_epochs = 4;
  cfg.finetune_epochs = 4;
  cfg.out = (dir / "serial").string();
  cfg.jobs = 1;
  std::ostringstream o1, e1, o2, e2;
  ASSERT_EQ(cmd_benchmark(cfg, o1, e1), 0);
  cfg.out = (dir / "parallel").string();
  cfg.jobs = 8;
  ASSERT_EQ(cmd_benchmark(cfg, o2, e2), 0);
  EXPECT_EQ(o1.str(), o2.str());
  for (const char* f : {"report.csv", "summary.csv", "ranking.csv", "report.json"})
    EXPECT_EQ(read_text(dir / "serial" / f), read_text(dir / "parallel" / f)) << f;
  fs::remove_all(dir);
}

TEST(Benchmark, UnreadableDatasetIsExcludedWithWarning) {
  const auto dir = scratch("missing");
  auto cfg = tiny_config(dir);
  cfg.datasets.push_back((dir / "nope.csv").string());
  cfg.dims = {2};
  std::ostringstream log;
  auto rep = run_benchmark(cfg, log);
  EXPECT_EQ(rep.excluded_datasets, (std::vector<std::string>{"nope"}));
  EXPECT_NE(log.str().find("warning: dataset nope"), std::string::npos);
  EXPECT_EQ(rep.ranking.size(), 2u);
  fs::remove_all(dir);
}

TEST(Train, RepeatIsByteIdentical) {
  const auto dir = scratch("train");
  RunConfig cfg;
  cfg.datasets = {write_blobs(dir, "blob", 2, 30, 6.0, 7)};
  cfg.methods = {Method::gceals};
  cfg.dims = {2};
  cfg.hidden = {8};
  cfg.pretrain_epochs = 10;
  cfg.finetune_epochs = 10;
  cfg.out = (dir / "a").string();
  std::ostringstream o1, e1, o2, e2;
  ASSERT_EQ(cmd_train(cfg, o1, e1), 0) << e1.str();
  cfg.out = (dir / "b").string();
  ASSERT_EQ(cmd_train(cfg, o2, e2), 0) << e2.str();
  const auto rel = fs::path("blob") / "gceals" / "dim2" / "seed0";
  for (const char* f : {"metrics.json", "trace.csv", "report.json", "embedding.csv", "checkpoint.bin"})
    EXPECT_EQ(read_text(dir / "a" / rel / f), read_text(dir / "b" / rel / f)) << f;
  EXPECT_NE(o1.str().find("acc "), std::string::npos);
  fs::remove_all(dir);
}

TEST(Train, ExitCodes) {
  const auto dir = scratch("codes");
  RunConfig cfg;
  cfg.datasets = {(dir / "absent.csv").string()};
  cfg.methods = {Method::kmeans_x};
  cfg.out = (dir / "o").string();
  std::ostringstream out, err;
  EXPECT_EQ(cmd_train(cfg, out, err), 1);
  EXPECT_NE(err.str().find("error:"), std::string::npos);

  // Features large enough to overflow the reconstruction loss.
  std::ostringstream big;
  big << "a,b,class\n";
  for (int i = 0; i < 20; ++i) big << (i % 2 ? 1e300 : -1e300) << ',' << i << ',' << (i % 2) << '\n';
  write_text(dir / "huge.csv", big.str());
  RunConfig h;
  h.datasets = {(dir / "huge.csv").string()};
  h.methods = {Method::gceals};
  h.dims = {2};
  h.out = (dir / "o").string();
  std::ostringstream o2, e2;
  RunConfig multi = h;
  multi.methods = {Method::gceals, Method::dec};
  EXPECT_EQ(cmd_train(multi, o2, e2), 1);
  fs::remove_all(dir);
}
