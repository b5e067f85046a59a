#include <CLI11.hpp>
#include <malloc.h>

#include <fstream>
#include <iostream>

#include "gceals/commands.hpp"

namespace {

struct Flags {
  std::vector<std::string> datasets;
  std::string label_column;
  std::vector<std::string> methods;
  std::vector<std::size_t> dims;
  double gamma = 0.1;
  std::size_t pretrain_epochs = 1000;
  std::size_t finetune_epochs = 1000;
  std::size_t batch_cap = 256;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
  std::string out;
  std::string config;
  std::vector<std::size_t> hidden;
  bool json = false;
  bool no_checkpoint = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--dataset", f.datasets, "CSV dataset path(s)")->delimiter(',');
  cmd->add_option("--label-column", f.label_column, "Ground-truth column (default: last column)");
}

void add_training(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration; flags override it");
  cmd->add_option("--method", f.methods, "gceals|dec|idec|kmeans_x|gmm_x|kmeans_z|gmm_z")->delimiter(',');
  cmd->add_option("--dims", f.dims, "Embedding dimensions")->delimiter(',');
  cmd->add_option("--gamma", f.gamma, "Clustering loss weight")->capture_default_str();
  cmd->add_option("--pretrain-epochs", f.pretrain_epochs, "Autoencoder pretraining epochs")->capture_default_str();
  cmd->add_option("--finetune-epochs", f.finetune_epochs, "Joint fine-tuning epochs")->capture_default_str();
  cmd->add_option("--batch-cap", f.batch_cap, "Maximum batch size")->capture_default_str();
  cmd->add_option("--seed", f.seeds, "Seed(s)")->delimiter(',');
  cmd->add_option("--jobs", f.jobs, "Parallel jobs")->capture_default_str();
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--hidden", f.hidden, "Hidden widths of the encoder (mirrored in the decoder)")->delimiter(',');
  cmd->add_flag("--no-checkpoint", f.no_checkpoint, "Skip writing model checkpoints");
}

gceals::RunConfig build_config(const CLI::App* cmd, const Flags& f) {
  gceals::RunConfig c;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw std::runtime_error("cannot open config file " + f.config);
    gceals::apply_config_json(c, gceals::json::parse(in));
  }
  auto given = [&](const char* name) { return cmd->get_option(name)->count() > 0; };
  if (given("--dataset")) c.datasets = f.datasets;
  if (given("--label-column")) c.label_column = f.label_column;
  if (given("--method")) {
    c.methods.clear();
    for (const auto& m : f.methods) c.methods.push_back(gceals::method_from_string(m));
  }
  if (given("--dims")) c.dims = f.dims;
  if (given("--gamma")) c.gamma = f.gamma;
  if (given("--pretrain-epochs")) c.pretrain_epochs = f.pretrain_epochs;
  if (given("--finetune-epochs")) c.finetune_epochs = f.finetune_epochs;
  if (given("--batch-cap")) c.batch_cap = f.batch_cap;
  if (given("--seed")) c.seeds = f.seeds;
  if (given("--jobs")) c.jobs = f.jobs;
  if (given("--out")) c.out = f.out;
  if (given("--hidden")) c.hidden = f.hidden;
  if (f.no_checkpoint) c.write_checkpoint = false;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  // keep large training buffers on the heap instead of fresh mmaps per step
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"Deep clustering toolkit for tabular data"};
  app.require_subcommand(1);
  Flags f;

  auto* stats = app.add_subcommand("stats", "Print dataset statistics as JSON");
  add_common(stats, f);
  stats->add_flag("--json", f.json, "Single-line JSON");

  auto* prep = app.add_subcommand("preprocess", "Standardize/one-hot encode a dataset to CSV");
  add_common(prep, f);
  prep->add_option("--out", f.out, "Output CSV path (default: stdout)");

  auto* train = app.add_subcommand("train", "Train one method on one dataset");
  add_common(train, f);
  add_training(train, f);

  auto* bench = app.add_subcommand("benchmark", "Run methods x datasets x dims x seeds and rank methods");
  add_common(bench, f);
  add_training(bench, f);

  CLI11_PARSE(app, argc, argv);

  const std::optional<std::string> label =
      f.label_column.empty() ? std::nullopt : std::optional<std::string>(f.label_column);
  try {
    if (stats->parsed() || prep->parsed()) {
      if (f.datasets.size() != 1) {
        std::cerr << "error: exactly one --dataset is required\n";
        return 1;
      }
      if (stats->parsed()) return gceals::cmd_stats(f.datasets.front(), label, f.json, std::cout, std::cerr);
      return gceals::cmd_preprocess(f.datasets.front(), label,
                                    f.out.empty() ? std::nullopt : std::optional<std::string>(f.out), std::cout,
                                    std::cerr);
    }
    if (train->parsed()) return gceals::cmd_train(build_config(train, f), std::cout, std::cerr);
    return gceals::cmd_benchmark(build_config(bench, f), std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
