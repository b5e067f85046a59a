#pragma once

// CSV ingestion, schema inference, standardization/one-hot preprocessing and
// the F-S ratio / C-score dataset statistics.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gceals/error.hpp"
#include "gceals/linalg.hpp"

namespace gceals {

enum class ColumnKind { numeric, categorical };

inline const char* to_string(ColumnKind k) { return k == ColumnKind::numeric ? "numeric" : "categorical"; }

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> cells;
  std::vector<double> numbers;  // filled for numeric columns

  // Distinct levels in first-appearance order (categorical columns).
  std::vector<std::string> levels() const {
    std::vector<std::string> out;
    std::unordered_map<std::string, std::size_t> seen;
    for (const auto& c : cells)
      if (seen.emplace(c, out.size()).second) out.push_back(c);
    return out;
  }
};

struct Dataset {
  std::string name;
  std::vector<Column> columns;
  std::optional<std::vector<int>> labels;
  std::vector<std::string> label_names;  // label_names[id] is the raw class value
  std::size_t n = 0;

  std::size_t num_classes() const { return label_names.size(); }
};

struct DatasetStats {
  std::string name;
  std::size_t n = 0;
  std::size_t feature_dimension = 0;
  std::size_t classes = 0;
  double fs_ratio = 0.0;
  double c_score = 0.0;
};

using SchemaOverride = std::map<std::string, ColumnKind>;

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// RFC 4180 record splitter. Returns false at end of input.
inline bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line_no) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char ch;
  while (in.get(ch)) {
    any = true;
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line_no;
        field.push_back(ch);
      }
    } else if (ch == '"') {
      in_quotes = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get();
      ++line_no;
      break;
    } else if (ch == '\n') {
      ++line_no;
      break;
    } else {
      field.push_back(ch);
    }
  }
  if (!any) return false;
  if (in_quotes) throw IngestionError("unterminated quoted field near line " + std::to_string(line_no));
  fields.push_back(std::move(field));
  return true;
}

}  // namespace detail

// Parses CSV text. The label column (if any) is removed from the features and
// mapped to ids 0..C-1 in first-appearance order.
inline Dataset parse_csv(std::istream& in, const std::string& name,
                         const std::optional<std::string>& label_column = std::nullopt,
                         const SchemaOverride& schema_override = {}) {
  std::vector<std::string> header;
  std::size_t line_no = 0;
  if (!detail::read_record(in, header, line_no) || (header.size() == 1 && header[0].empty()))
    throw IngestionError(name + ": missing header row");
  if (!header.empty() && header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
    header[0].erase(0, 3);

  std::vector<std::vector<std::string>> cols(header.size());
  std::vector<std::string> rec;
  std::size_t row = 0;
  while (detail::read_record(in, rec, line_no)) {
    if (rec.size() == 1 && rec[0].empty()) continue;  // blank line
    ++row;
    if (rec.size() != header.size()) {
      throw IngestionError(name + ": ragged row " + std::to_string(row) + " (line " + std::to_string(line_no) +
                           "): " + std::to_string(rec.size()) + " cells, header has " +
                           std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < rec.size(); ++c) {
      if (rec[c].empty())
        throw IngestionError(name + ": missing cell at row " + std::to_string(row) + ", column '" + header[c] + "'");
      cols[c].push_back(std::move(rec[c]));
    }
  }
  if (row == 0) throw IngestionError(name + ": no data rows");

  Dataset ds;
  ds.name = name;
  ds.n = row;
  std::optional<std::size_t> label_idx;
  if (label_column) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == *label_column) label_idx = c;
    if (!label_idx) throw IngestionError(name + ": label column '" + *label_column + "' not found");
  }
  for (const auto& [col, kind] : schema_override) {
    if (std::find(header.begin(), header.end(), col) == header.end())
      throw IngestionError(name + ": schema override names unknown column '" + col + "'");
  }

  for (std::size_t c = 0; c < header.size(); ++c) {
    if (label_idx && c == *label_idx) {
      std::vector<int> ids;
      std::unordered_map<std::string, int> map;
      for (const auto& v : cols[c]) {
        auto [it, inserted] = map.emplace(v, static_cast<int>(ds.label_names.size()));
        if (inserted) ds.label_names.push_back(v);
        ids.push_back(it->second);
      }
      if (ds.label_names.size() < 2) throw IngestionError(name + ": label column has fewer than 2 classes");
      ds.labels = std::move(ids);
      continue;
    }
    Column column;
    column.name = header[c];
    column.cells = std::move(cols[c]);
    std::vector<double> nums;
    nums.reserve(column.cells.size());
    bool all_numeric = true;
    std::size_t bad_row = 0;
    for (std::size_t r = 0; r < column.cells.size(); ++r) {
      auto v = detail::parse_double(column.cells[r]);
      if (!v) {
        all_numeric = false;
        bad_row = r + 1;
        break;
      }
      nums.push_back(*v);
    }
    auto forced = schema_override.find(column.name);
    if (forced != schema_override.end()) {
      column.kind = forced->second;
      if (column.kind == ColumnKind::numeric && !all_numeric) {
        throw IngestionError(name + ": unparsable numeric cell '" + column.cells[bad_row - 1] + "' at row " +
                             std::to_string(bad_row) + ", column '" + column.name + "'");
      }
    } else {
      column.kind = all_numeric ? ColumnKind::numeric : ColumnKind::categorical;
    }
    if (column.kind == ColumnKind::numeric) column.numbers = std::move(nums);
    ds.columns.push_back(std::move(column));
  }
  return ds;
}

inline Dataset load_csv(const std::filesystem::path& path, const std::optional<std::string>& label_column = std::nullopt,
                        const SchemaOverride& schema_override = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open dataset file " + path.string());
  return parse_csv(in, path.stem().string(), label_column, schema_override);
}

// Feature dimension after one-hot expansion.
inline std::size_t feature_dimension(const Dataset& ds) {
  std::size_t d = 0;
  for (const auto& c : ds.columns) d += c.kind == ColumnKind::numeric ? 1 : c.levels().size();
  return d;
}

struct Preprocessed {
  DenseMatrix x;
  std::vector<std::string> feature_names;
};

// Numeric columns z-scored with population std (constant columns become 0),
// followed by full one-hot blocks for categorical columns.
inline Preprocessed preprocess_named(const Dataset& ds) {
  if (ds.n == 0 || ds.columns.empty()) throw IngestionError(ds.name + ": empty dataset");
  if (ds.n < 2) throw IngestionError(ds.name + ": preprocessing needs at least 2 samples");
  Preprocessed out;
  out.x = DenseMatrix(ds.n, feature_dimension(ds));
  std::size_t col = 0;
  const double n = static_cast<double>(ds.n);
  for (const auto& c : ds.columns) {
    if (c.kind != ColumnKind::numeric) continue;
    double mean = 0.0;
    for (double v : c.numbers) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : c.numbers) var += (v - mean) * (v - mean);
    var /= n;
    const double sd = std::sqrt(var);
    const bool constant = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
    for (std::size_t r = 0; r < ds.n; ++r) out.x(r, col) = constant ? 0.0 : (c.numbers[r] - mean) / sd;
    out.feature_names.push_back(c.name);
    ++col;
  }
  for (const auto& c : ds.columns) {
    if (c.kind != ColumnKind::categorical) continue;
    auto levels = c.levels();
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      index.emplace(levels[l], l);
      out.feature_names.push_back(c.name + "=" + levels[l]);
    }
    for (std::size_t r = 0; r < ds.n; ++r) out.x(r, col + index.at(c.cells[r])) = 1.0;
    col += levels.size();
  }
  return out;
}

inline DenseMatrix preprocess(const Dataset& ds) { return preprocess_named(ds).x; }

// Mean |Pearson r| over unordered pairs of distinct preprocessed columns,
// skipping pairs that involve a zero-variance column.
inline double c_score(const DenseMatrix& x) {
  const std::size_t d = x.cols();
  const std::size_t n = x.rows();
  std::vector<std::vector<double>> centered(d, std::vector<double>(n));
  std::vector<double> norm(d, 0.0);
  auto mean = column_means(x);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < n; ++r) {
      centered[c][r] = x(r, c) - mean[c];
      norm[c] += centered[c][r] * centered[c][r];
    }
    norm[c] = std::sqrt(norm[c]);
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < d; ++a) {
    if (!(norm[a] > 1e-12)) continue;
    for (std::size_t b = a + 1; b < d; ++b) {
      if (!(norm[b] > 1e-12)) continue;
      double dot = 0.0;
      for (std::size_t r = 0; r < n; ++r) dot += centered[a][r] * centered[b][r];
      sum += std::min(1.0, std::abs(dot / (norm[a] * norm[b])));
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

inline DatasetStats dataset_stats(const Dataset& ds) {
  DatasetStats s;
  s.name = ds.name;
  s.n = ds.n;
  s.feature_dimension = feature_dimension(ds);
  s.classes = ds.num_classes();
  s.fs_ratio = ds.n == 0 ? 0.0 : 100.0 * static_cast<double>(s.feature_dimension) / static_cast<double>(ds.n);
  s.c_score = ds.n >= 2 ? c_score(preprocess(ds)) : 0.0;
  return s;
}

}  // namespace gceals
