#pragma once

// Run configuration, single (dataset, method, dim, seed) jobs, and the
// multi-method benchmark with best-dimension selection and rank aggregation.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gceals/baselines.hpp"
#include "gceals/dataset.hpp"
#include "gceals/io.hpp"
#include "gceals/metrics.hpp"
#include "gceals/training.hpp"

namespace gceals {

enum class Method { gceals, dec, idec, kmeans_x, gmm_x, kmeans_z, gmm_z };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::gceals: return "gceals";
    case Method::dec: return "dec";
    case Method::idec: return "idec";
    case Method::kmeans_x: return "kmeans_x";
    case Method::gmm_x: return "gmm_x";
    case Method::kmeans_z: return "kmeans_z";
    case Method::gmm_z: return "gmm_z";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  for (auto m : {Method::gceals, Method::dec, Method::idec, Method::kmeans_x, Method::gmm_x, Method::kmeans_z,
                 Method::gmm_z})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

inline bool uses_network(Method m) { return m != Method::kmeans_x && m != Method::gmm_x; }

struct RunConfig {
  std::vector<std::string> datasets;
  std::optional<std::string> label_column;  // defaults to the last CSV column
  std::vector<Method> methods = {Method::gceals};
  std::vector<std::size_t> dims = {5, 10, 15, 20};
  double gamma = 0.1;
  std::size_t pretrain_epochs = 1000;
  std::size_t finetune_epochs = 1000;
  std::size_t batch_cap = 256;
  std::vector<std::uint64_t> seeds = {0};
  std::size_t jobs = 1;
  std::string out = "runs";
  std::vector<std::size_t> hidden = {500, 500, 2000};
  bool write_checkpoint = true;

  void validate() const {
    if (datasets.empty()) throw std::invalid_argument("RunConfig: at least one dataset is required");
    if (methods.empty()) throw std::invalid_argument("RunConfig: at least one method is required");
    if (dims.empty()) throw std::invalid_argument("RunConfig: at least one embedding dimension is required");
    for (auto d : dims)
      if (d == 0) throw std::invalid_argument("RunConfig: embedding dimensions must be positive");
    if (seeds.empty()) throw std::invalid_argument("RunConfig: at least one seed is required");
    if (!(gamma >= 0.0)) throw std::invalid_argument("RunConfig: gamma must be >= 0");
    if (jobs == 0) throw std::invalid_argument("RunConfig: jobs must be >= 1");
  }

  GcealsConfig training_config(Method method, std::size_t dim) const {
    GcealsConfig c;
    c.gamma = gamma;
    c.pretrain_epochs = pretrain_epochs;
    c.finetune_epochs = finetune_epochs;
    c.batch_cap = batch_cap;
    c.embedding_dim = dim;
    c.hidden = hidden;
    c.mode = method == Method::dec ? TrainMode::dec : method == Method::idec ? TrainMode::idec : TrainMode::gceals;
    return c;
  }
};

inline json run_config_to_json(const RunConfig& c) {
  std::vector<std::string> methods;
  for (auto m : c.methods) methods.push_back(to_string(m));
  json j{{"datasets", c.datasets}, {"methods", methods},       {"dims", c.dims},
         {"gamma", c.gamma},       {"pretrain_epochs", c.pretrain_epochs}, {"finetune_epochs", c.finetune_epochs},
         {"batch_cap", c.batch_cap}, {"seeds", c.seeds},       {"jobs", c.jobs},
         {"out", c.out},           {"hidden", c.hidden},       {"checkpoint", c.write_checkpoint}};
  if (c.label_column) j["label_column"] = *c.label_column;
  return j;
}

// Overlays keys present in `j` onto `c`.
inline void apply_config_json(RunConfig& c, const json& j) {
  if (j.contains("datasets")) j.at("datasets").get_to(c.datasets);
  if (j.contains("label_column")) c.label_column = j.at("label_column").get<std::string>();
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
  }
  if (j.contains("method")) c.methods = {method_from_string(j.at("method").get<std::string>())};
  if (j.contains("dims")) j.at("dims").get_to(c.dims);
  if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
  if (j.contains("pretrain_epochs")) c.pretrain_epochs = j.at("pretrain_epochs").get<std::size_t>();
  if (j.contains("finetune_epochs")) c.finetune_epochs = j.at("finetune_epochs").get<std::size_t>();
  if (j.contains("batch_cap")) c.batch_cap = j.at("batch_cap").get<std::size_t>();
  if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
  if (j.contains("seed")) c.seeds = {j.at("seed").get<std::uint64_t>()};
  if (j.contains("jobs")) c.jobs = j.at("jobs").get<std::size_t>();
  if (j.contains("out")) c.out = j.at("out").get<std::string>();
  if (j.contains("hidden")) j.at("hidden").get_to(c.hidden);
  if (j.contains("checkpoint")) c.write_checkpoint = j.at("checkpoint").get<bool>();
}

// FNV-1a, used to fold names into job seeds.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Per-job seed from the master seed, dataset name and embedding dim. The
// method is left out so that methods sharing a pretraining stage start from
// the same network.
inline std::uint64_t job_seed(std::uint64_t master, const std::string& dataset, std::size_t dim) {
  return splitmix64(splitmix64(master ^ stable_hash(dataset)) + dim);
}

struct PreparedDataset {
  std::string name;
  DenseMatrix x;
  std::vector<int> labels;
  std::size_t clusters = 0;
};

inline PreparedDataset prepare_dataset(const std::string& path, const std::optional<std::string>& label_column) {
  std::optional<std::string> label = label_column;
  if (!label) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open dataset file " + path);
    std::vector<std::string> header;
    std::size_t line = 0;
    if (!detail::read_record(in, header, line) || header.empty()) throw IngestionError(path + ": missing header row");
    label = header.back();
  }
  auto ds = load_csv(path, label);
  PreparedDataset p;
  p.name = ds.name;
  p.x = preprocess(ds);
  p.labels = *ds.labels;
  p.clusters = ds.num_classes();
  return p;
}

struct JobSpec {
  std::size_t dataset = 0;
  Method method = Method::gceals;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
};

struct JobResult {
  bool ok = false;
  MetricScores scores;
  double runtime_seconds = 0.0;
  std::string stop_reason;
  std::string error;
  bool diverged = false;
};

inline std::filesystem::path job_directory(const std::string& out, const std::string& dataset, Method method,
                                           std::size_t dim, std::uint64_t seed) {
  return std::filesystem::path(out) / dataset / to_string(method) / ("dim" + std::to_string(dim)) /
         ("seed" + std::to_string(seed));
}

// Runs one job and writes its artifacts. Errors are captured in the result.
inline JobResult run_job(const PreparedDataset& data, Method method, std::size_t dim, std::uint64_t seed,
                         const RunConfig& config) {
  JobResult res;
  const auto dir = job_directory(config.out, data.name, method, dim, seed);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    Rng rng(job_seed(seed, data.name, dim));
    std::vector<int> labels;
    if (!uses_network(method)) {
      if (method == Method::kmeans_x) {
        labels = kmeans(data.x, data.clusters, rng).labels;
      } else {
        labels = gmm_fit(data.x, data.clusters, rng).labels;
      }
      res.stop_reason = "completed";
    } else if (method == Method::kmeans_z || method == Method::gmm_z) {
      PretrainOptions opt;
      opt.epochs = config.pretrain_epochs;
      opt.batch_size = config.batch_cap;
      opt.hidden = config.hidden;
      Rng pre_rng = rng.split();
      auto pre = pretrain_autoencoder(data.x, dim, opt, pre_rng);
      DenseMatrix z = pre.autoencoder.encode(data.x);
      Rng cl_rng = rng.split();
      labels = method == Method::kmeans_z ? kmeans(z, data.clusters, cl_rng).labels
                                          : gmm_fit(z, data.clusters, cl_rng).labels;
      write_text(dir / "embedding.csv", embedding_to_csv(z, labels));
      if (config.write_checkpoint) {
        Checkpoint ck;
        ck.mode = TrainMode::gceals;
        ck.model.autoencoder = std::move(pre.autoencoder);
        ck.model.head.means = DenseMatrix(data.clusters, dim);
        ck.model.head.log_variances = DenseMatrix(data.clusters, dim);
        ck.model.head.weights.assign(data.clusters, 1.0 / static_cast<double>(data.clusters));
        ck.optimizer_step = pre.optimizer_steps;
        save_checkpoint(dir / "checkpoint.bin", ck);
      }
      res.stop_reason = "completed";
    } else {
      auto tr = train(data.x, data.clusters, config.training_config(method, dim), rng);
      labels = tr.report.labels;
      res.stop_reason = to_string(tr.report.stop_reason);
      write_text(dir / "trace.csv", trace_to_csv(tr.report));
      write_text(dir / "report.json", train_report_to_json(tr.report).dump() + "\n");
      write_text(dir / "embedding.csv", embedding_to_csv(tr.report.embedding, labels));
      if (config.write_checkpoint) {
        Checkpoint ck{tr.report.mode, std::move(tr.model), tr.report.optimizer_steps};
        save_checkpoint(dir / "checkpoint.bin", ck);
      }
    }
    res.scores = evaluate(data.labels, labels);
    write_text(dir / "metrics.json", metrics_to_json_text(res.scores));
    res.ok = true;
  } catch (const DivergenceError& e) {
    res.diverged = true;
    res.error = e.what();
  } catch (const std::exception& e) {
    res.error = e.what();
  }
  res.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// Rank of each value (1 = largest), ties receive the average of their ranks.
inline std::vector<double> descending_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

struct BestCell {
  bool available = false;
  std::size_t dim = 0;
  MetricScores scores;  // mean over seeds at the best dim
};

struct MethodRank {
  Method method = Method::gceals;
  double acc_rank_mean = 0.0;
  double acc_rank_std = 0.0;
  double ari_rank_mean = 0.0;
  double ari_rank_std = 0.0;
};

struct BenchmarkReport {
  std::vector<std::string> dataset_names;
  std::vector<Method> methods;
  std::vector<JobSpec> jobs;
  std::vector<JobResult> results;
  std::vector<std::vector<BestCell>> best;  // [dataset][method]
  std::vector<std::vector<double>> acc_ranks;  // [dataset][method], empty row when excluded
  std::vector<std::vector<double>> ari_ranks;
  std::vector<std::string> excluded_datasets;
  std::vector<MethodRank> ranking;
};

inline std::vector<JobSpec> enumerate_jobs(const RunConfig& config) {
  std::vector<JobSpec> jobs;
  for (std::size_t d = 0; d < config.datasets.size(); ++d)
    for (auto m : config.methods)
      for (auto dim : config.dims)
        for (auto s : config.seeds) jobs.push_back({d, m, dim, s});
  return jobs;
}

// Best dim per (dataset, method) by mean ACC over seeds (smallest dim on
// ties), then per-dataset ranks over methods and their mean/std.
inline void aggregate(BenchmarkReport& rep, const RunConfig& config) {
  const std::size_t nd = rep.dataset_names.size();
  const std::size_t nm = rep.methods.size();
  rep.best.assign(nd, std::vector<BestCell>(nm));
  rep.acc_ranks.assign(nd, {});
  rep.ari_ranks.assign(nd, {});
  std::vector<bool> complete(nd, true);
  for (std::size_t i = 0; i < rep.jobs.size(); ++i)
    if (!rep.results[i].ok) complete[rep.jobs[i].dataset] = false;

  for (std::size_t d = 0; d < nd; ++d) {
    for (std::size_t mi = 0; mi < nm; ++mi) {
      BestCell best;
      for (auto dim : config.dims) {
        MetricScores sum;
        std::size_t count = 0;
        bool missing = false;
        for (std::size_t i = 0; i < rep.jobs.size(); ++i) {
          const auto& j = rep.jobs[i];
          if (j.dataset != d || j.method != rep.methods[mi] || j.dim != dim) continue;
          if (!rep.results[i].ok) {
            missing = true;
            continue;
          }
          sum.acc += rep.results[i].scores.acc;
          sum.ari += rep.results[i].scores.ari;
          sum.nmi += rep.results[i].scores.nmi;
          ++count;
        }
        if (missing || count == 0) continue;
        const double c = static_cast<double>(count);
        MetricScores mean{sum.acc / c, sum.ari / c, sum.nmi / c};
        if (!best.available || mean.acc > best.scores.acc || (mean.acc == best.scores.acc && dim < best.dim))
          best = {true, dim, mean};
      }
      rep.best[d][mi] = best;
    }
    if (!complete[d]) {
      rep.excluded_datasets.push_back(rep.dataset_names[d]);
      continue;
    }
    std::vector<double> acc(nm), ari(nm);
    for (std::size_t mi = 0; mi < nm; ++mi) {
      acc[mi] = rep.best[d][mi].scores.acc;
      ari[mi] = rep.best[d][mi].scores.ari;
    }
    rep.acc_ranks[d] = descending_ranks(acc);
    rep.ari_ranks[d] = descending_ranks(ari);
  }

  rep.ranking.clear();
  for (std::size_t mi = 0; mi < nm; ++mi) {
    std::vector<double> a, b;
    for (std::size_t d = 0; d < nd; ++d) {
      if (rep.acc_ranks[d].empty()) continue;
      a.push_back(rep.acc_ranks[d][mi]);
      b.push_back(rep.ari_ranks[d][mi]);
    }
    auto mean_std = [](const std::vector<double>& v) {
      if (v.empty()) return std::pair{std::nan(""), std::nan("")};
      double m = 0.0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - m) * (x - m);
      return std::pair{m, std::sqrt(var / static_cast<double>(v.size()))};
    };
    auto [am, as] = mean_std(a);
    auto [bm, bs] = mean_std(b);
    rep.ranking.push_back({rep.methods[mi], am, as, bm, bs});
  }
}

// Per-run table: dataset, method, dim, seed, status, acc, ari, nmi, stop_reason.
inline std::string runs_table_csv(const BenchmarkReport& rep) {
  std::ostringstream os;
  os << "dataset,method,dim,seed,status,acc,ari,nmi,stop_reason\n";
  for (std::size_t i = 0; i < rep.jobs.size(); ++i) {
    const auto& j = rep.jobs[i];
    const auto& r = rep.results[i];
    os << rep.dataset_names[j.dataset] << ',' << to_string(j.method) << ',' << j.dim << ',' << j.seed << ','
       << (r.ok ? "ok" : "failed") << ',';
    if (r.ok)
      os << format_fixed(r.scores.acc, 6) << ',' << format_fixed(r.scores.ari, 6) << ',' << format_fixed(r.scores.nmi, 6);
    else
      os << "NA,NA,NA";
    os << ',' << (r.stop_reason.empty() ? "NA" : r.stop_reason) << '\n';
  }
  return os.str();
}

// Best-dim scores per dataset x method with the within-dataset ranks. Missing
// cells (failed runs, excluded datasets) are written as NA.
inline std::string summary_table_csv(const BenchmarkReport& rep) {
  std::ostringstream os;
  os << "dataset,method,best_dim,acc,ari,nmi,acc_rank,ari_rank\n";
  for (std::size_t d = 0; d < rep.dataset_names.size(); ++d) {
    for (std::size_t mi = 0; mi < rep.methods.size(); ++mi) {
      const auto& b = rep.best[d][mi];
      os << rep.dataset_names[d] << ',' << to_string(rep.methods[mi]) << ',';
      if (b.available)
        os << b.dim << ',' << format_fixed(b.scores.acc, 6) << ',' << format_fixed(b.scores.ari, 6) << ','
           << format_fixed(b.scores.nmi, 6);
      else
        os << "NA,NA,NA,NA";
      os << ',';
      if (!rep.acc_ranks[d].empty())
        os << format_fixed(rep.acc_ranks[d][mi], 2) << ',' << format_fixed(rep.ari_ranks[d][mi], 2);
      else
        os << "NA,NA";
      os << '\n';
    }
  }
  return os.str();
}

// Average within-dataset rank (and its population std) per method.
inline std::string ranking_table_csv(const BenchmarkReport& rep) {
  std::ostringstream os;
  os << "method,acc_rank_mean,acc_rank_std,ari_rank_mean,ari_rank_std\n";
  for (const auto& r : rep.ranking)
    os << to_string(r.method) << ',' << format_fixed(r.acc_rank_mean, 4) << ',' << format_fixed(r.acc_rank_std, 4) << ','
       << format_fixed(r.ari_rank_mean, 4) << ',' << format_fixed(r.ari_rank_std, 4) << '\n';
  return os.str();
}

inline json benchmark_report_to_json(const BenchmarkReport& rep) {
  json runs = json::array();
  for (std::size_t i = 0; i < rep.jobs.size(); ++i) {
    const auto& j = rep.jobs[i];
    const auto& r = rep.results[i];
    json row{{"dataset", rep.dataset_names[j.dataset]}, {"method", to_string(j.method)}, {"dim", j.dim},
             {"seed", j.seed}, {"status", r.ok ? "ok" : "failed"}};
    if (r.ok) {
      row["acc"] = r.scores.acc;
      row["ari"] = r.scores.ari;
      row["nmi"] = r.scores.nmi;
      row["stop_reason"] = r.stop_reason;
    } else {
      row["error"] = r.error;
    }
    runs.push_back(std::move(row));
  }
  json best = json::array();
  for (std::size_t d = 0; d < rep.dataset_names.size(); ++d)
    for (std::size_t mi = 0; mi < rep.methods.size(); ++mi) {
      const auto& b = rep.best[d][mi];
      json cell{{"dataset", rep.dataset_names[d]}, {"method", to_string(rep.methods[mi])}, {"available", b.available}};
      if (b.available) {
        cell["best_dim"] = b.dim;
        cell["acc"] = b.scores.acc;
        cell["ari"] = b.scores.ari;
        cell["nmi"] = b.scores.nmi;
      }
      if (!rep.acc_ranks[d].empty()) {
        cell["acc_rank"] = rep.acc_ranks[d][mi];
        cell["ari_rank"] = rep.ari_ranks[d][mi];
      }
      best.push_back(std::move(cell));
    }
  json ranking = json::array();
  for (const auto& r : rep.ranking)
    ranking.push_back({{"method", to_string(r.method)},
                       {"acc_rank_mean", r.acc_rank_mean},
                       {"acc_rank_std", r.acc_rank_std},
                       {"ari_rank_mean", r.ari_rank_mean},
                       {"ari_rank_std", r.ari_rank_std}});
  return json{{"runs", runs}, {"best", best}, {"excluded_datasets", rep.excluded_datasets}, {"ranking", ranking}};
}

// Executes every job on a bounded worker pool. Results are stored by job
// index, so outputs do not depend on scheduling.
inline BenchmarkReport run_benchmark(const RunConfig& config, std::ostream& log = std::cerr) {
  config.validate();
  BenchmarkReport rep;
  rep.methods = config.methods;
  std::vector<std::optional<PreparedDataset>> data;
  std::vector<std::string> load_errors;
  for (const auto& path : config.datasets) {
    try {
      data.emplace_back(prepare_dataset(path, config.label_column));
      rep.dataset_names.push_back(data.back()->name);
      load_errors.emplace_back();
    } catch (const std::exception& e) {
      data.emplace_back(std::nullopt);
      rep.dataset_names.push_back(std::filesystem::path(path).stem().string());
      load_errors.emplace_back(e.what());
    }
  }
  rep.jobs = enumerate_jobs(config);
  rep.results.resize(rep.jobs.size());

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < rep.jobs.size(); i = next++) {
      const auto& j = rep.jobs[i];
      if (!data[j.dataset]) {
        rep.results[i].error = load_errors[j.dataset];
        continue;
      }
      rep.results[i] = run_job(*data[j.dataset], j.method, j.dim, j.seed, config);
      std::lock_guard lock(log_mutex);
      log << "[" << rep.dataset_names[j.dataset] << " " << to_string(j.method) << " dim" << j.dim << " seed" << j.seed
          << "] " << (rep.results[i].ok ? "ok" : "FAILED: " + rep.results[i].error) << '\n';
    }
  };
  const std::size_t workers = std::min(config.jobs, std::max<std::size_t>(1, rep.jobs.size()));
  std::vector<std::thread> pool;
  detail::gemm_backend();  // loads BLAS (and touches the environment) before any worker starts
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  aggregate(rep, config);
  for (const auto& name : rep.excluded_datasets)
    log << "warning: dataset " << name << " has failed runs and is excluded from ranking\n";
  return rep;
}

inline void write_benchmark_outputs(const BenchmarkReport& rep, const std::filesystem::path& out) {
  write_text(out / "report.csv", runs_table_csv(rep));
  write_text(out / "summary.csv", summary_table_csv(rep));
  write_text(out / "ranking.csv", ranking_table_csv(rep));
  write_text(out / "report.json", benchmark_report_to_json(rep).dump(2) + "\n");
  std::ostringstream t;
  t << "dataset,method,dim,seed,runtime_seconds\n";
  for (std::size_t i = 0; i < rep.jobs.size(); ++i) {
    const auto& j = rep.jobs[i];
    t << rep.dataset_names[j.dataset] << ',' << to_string(j.method) << ',' << j.dim << ',' << j.seed << ','
      << format_fixed(rep.results[i].runtime_seconds, 3) << '\n';
  }
  write_text(out / "timings.csv", t.str());
}

}  // namespace gceals
