#pragma once

// Subcommand bodies shared by the command-line tool and the tests. Each
// returns a process exit code: 0 success, 1 input/usage error, 2 divergence.

#include <iostream>
#include <optional>
#include <string>

#include "gceals/benchmark.hpp"
#include "gceals/dataset.hpp"
#include "gceals/io.hpp"

namespace gceals {

inline int cmd_stats(const std::string& dataset, const std::optional<std::string>& label_column, bool single_line,
                     std::ostream& out, std::ostream& err) {
  try {
    auto ds = load_csv(dataset, label_column);
    auto j = stats_to_json(dataset_stats(ds));
    out << (single_line ? j.dump() : j.dump(2)) << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

// Writes the preprocessed matrix as CSV (header f0..f{d-1}) to `out_path`, or
// to `out` when no path is given.
inline int cmd_preprocess(const std::string& dataset, const std::optional<std::string>& label_column,
                          const std::optional<std::string>& out_path, std::ostream& out, std::ostream& err) {
  try {
    auto ds = load_csv(dataset, label_column);
    auto text = matrix_to_csv(preprocess(ds));
    if (out_path) write_text(*out_path, text);
    else out << text;
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

// One dataset and one method, every (dim, seed) pair, run in order.
inline int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    config.validate();
    if (config.datasets.size() != 1 || config.methods.size() != 1) {
      err << "error: train takes exactly one dataset and one method\n";
      return 1;
    }
    auto data = prepare_dataset(config.datasets.front(), config.label_column);
    int status = 0;
    for (auto dim : config.dims) {
      for (auto seed : config.seeds) {
        auto r = run_job(data, config.methods.front(), dim, seed, config);
        const auto dir = job_directory(config.out, data.name, config.methods.front(), dim, seed);
        if (!r.ok) {
          err << "error: " << dir.string() << ": " << r.error << '\n';
          status = std::max(status, r.diverged ? 2 : 1);
          continue;
        }
        out << dir.string() << ": acc " << format_fixed(100.0 * r.scores.acc, 1) << " ari "
            << format_fixed(r.scores.ari, 3) << " nmi " << format_fixed(r.scores.nmi, 3) << " (" << r.stop_reason
            << ")\n";
      }
    }
    return status;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

inline int cmd_benchmark(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    if (config.methods.size() < 2) {
      err << "error: benchmark ranking needs at least two methods\n";
      return 1;
    }
    auto rep = run_benchmark(config, err);
    write_benchmark_outputs(rep, config.out);
    out << summary_table_csv(rep) << '\n' << ranking_table_csv(rep);
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace gceals
