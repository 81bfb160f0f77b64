#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ochoice/common.hpp"

namespace ochoice {

// ---------------------------------------------------------------------------
// Dataset: immutable-by-convention tabular choice data. Labels are 1-based
// ordinal category indices; display names, when a label dictionary was used,
// ride along as metadata.
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<std::string> feature_names;
  Eigen::MatrixXd features;  // n_rows x n_features
  std::vector<int> labels;   // each in 1..n_categories
  int n_categories = 0;
  std::string label_name = "label";
  std::vector<std::string> category_names;  // empty or size n_categories

  long n_rows() const { return features.rows(); }
  long n_features() const { return features.cols(); }

  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < feature_names.size(); ++i)
      if (feature_names[i] == name) return static_cast<int>(i);
    return -1;
  }

  /// Structural invariants: label range, finite features, shape agreement.
  void validate() const {
    if (n_rows() == 0) throw ValidationError("dataset is empty");
    if (n_categories < 1) throw ValidationError("n_categories must be >= 1");
    if (static_cast<long>(labels.size()) != n_rows())
      throw ValidationError("label count does not match row count");
    if (static_cast<long>(feature_names.size()) != n_features())
      throw ValidationError("feature name count does not match column count");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 1 || labels[i] > n_categories)
        throw ValidationError("label out of range 1.." +
                              std::to_string(n_categories) + " at row " +
                              std::to_string(i + 1));
    }
    if (!all_finite(features.data(),
                    static_cast<std::size_t>(features.size())))
      throw ValidationError("non-finite feature value in dataset");
  }

  /// Fitting additionally requires every category to be observed.
  void validate_for_fit() const {
    validate();
    std::vector<bool> seen(static_cast<std::size_t>(n_categories), false);
    for (int y : labels) seen[static_cast<std::size_t>(y - 1)] = true;
    for (int k = 0; k < n_categories; ++k)
      if (!seen[static_cast<std::size_t>(k)])
        throw ValidationError("category " + std::to_string(k + 1) +
                              " has no observations");
  }
};

enum class CoefficientMode { kGeneric, kAlternativeSpecific };

inline std::string to_string(CoefficientMode m) {
  return m == CoefficientMode::kGeneric ? "generic" : "alternative_specific";
}

inline CoefficientMode coefficient_mode_from_string(const std::string& s) {
  if (s == "generic") return CoefficientMode::kGeneric;
  if (s == "alternative_specific" || s == "alt" || s == "alternative-specific")
    return CoefficientMode::kAlternativeSpecific;
  throw ValidationError("unknown coefficient mode: " + s);
}

// ---------------------------------------------------------------------------
// DesignSpec: which columns act as explanatory variables and under which
// coefficient regime. Exclusions pin individual (column, category)
// coefficients at zero in the alternative-specific regime.
// ---------------------------------------------------------------------------

struct DesignSpec {
  std::vector<std::string> feature_columns;
  std::string label_column = "label";
  CoefficientMode coefficient_mode = CoefficientMode::kGeneric;
  std::vector<std::string> standardize_columns;
  std::vector<std::pair<std::string, int>> exclusions;  // (column, category)

  void validate(const Dataset& ds) const {
    if (feature_columns.empty())
      throw ValidationError("design has no feature columns");
    std::set<std::string> seen;
    for (const auto& c : feature_columns) {
      if (!seen.insert(c).second)
        throw ValidationError("duplicate feature column: " + c);
      if (ds.column_index(c) < 0)
        throw ValidationError("feature column not in dataset: " + c);
    }
    for (const auto& c : standardize_columns)
      if (!seen.count(c))
        throw ValidationError("standardize column not in design: " + c);
    for (const auto& [col, cat] : exclusions) {
      if (!seen.count(col))
        throw ValidationError("excluded column not in design: " + col);
      if (cat < 1 || cat > ds.n_categories)
        throw ValidationError("excluded category out of range for " + col);
      if (coefficient_mode == CoefficientMode::kGeneric)
        throw ValidationError(
            "per-category exclusions require alternative_specific mode");
    }
  }
};

/// Design matrix with columns in design order.
inline Eigen::MatrixXd design_matrix(const Dataset& ds,
                                     const DesignSpec& spec) {
  Eigen::MatrixXd x(ds.n_rows(),
                    static_cast<long>(spec.feature_columns.size()));
  for (std::size_t j = 0; j < spec.feature_columns.size(); ++j) {
    const int c = ds.column_index(spec.feature_columns[j]);
    if (c < 0)
      throw ValidationError("column not in dataset: " +
                            spec.feature_columns[j]);
    x.col(static_cast<long>(j)) = ds.features.col(c);
  }
  return x;
}

// ---------------------------------------------------------------------------
// ScalingParams: training-set z-scoring statistics, reused verbatim on
// validation and analysis data. Population convention (divide by N).
// ---------------------------------------------------------------------------

struct ScalingParams {
  struct Column {
    std::string name;
    double mean = 0.0;
    double stddev = 1.0;
  };
  std::vector<Column> columns;

  bool empty() const { return columns.empty(); }

  const Column* find(const std::string& name) const {
    for (const auto& c : columns)
      if (c.name == name) return &c;
    return nullptr;
  }

  double transform(const std::string& name, double v) const {
    const Column* c = find(name);
    return c == nullptr ? v : (v - c->mean) / c->stddev;
  }

  double untransform(const std::string& name, double v) const {
    const Column* c = find(name);
    return c == nullptr ? v : v * c->stddev + c->mean;
  }

  void apply(Dataset& ds) const {
    for (const auto& c : columns) {
      const int j = ds.column_index(c.name);
      if (j < 0)
        throw ValidationError("scaled column missing from dataset: " + c.name);
      ds.features.col(j) = (ds.features.col(j).array() - c.mean) / c.stddev;
    }
  }

  void invert(Dataset& ds) const {
    for (const auto& c : columns) {
      const int j = ds.column_index(c.name);
      if (j < 0)
        throw ValidationError("scaled column missing from dataset: " + c.name);
      ds.features.col(j) = ds.features.col(j).array() * c.stddev + c.mean;
    }
  }
};

/// Z-scores the columns flagged in the design, returning the transformed
/// dataset and the statistics needed to transform held-out data identically.
inline std::pair<Dataset, ScalingParams> standardize(const Dataset& ds,
                                                     const DesignSpec& spec) {
  Dataset out = ds;
  ScalingParams params;
  for (const auto& name : spec.standardize_columns) {
    const int j = out.column_index(name);
    if (j < 0) throw ValidationError("standardize column missing: " + name);
    const auto col = out.features.col(j);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().mean();
    if (!(var > 0.0))
      throw ValidationError("zero-variance column flagged for scaling: " +
                            name);
    const double sd = std::sqrt(var);
    out.features.col(j) = (col.array() - mean) / sd;
    params.columns.push_back({name, mean, sd});
  }
  return {std::move(out), std::move(params)};
}

// ---------------------------------------------------------------------------
// CSV I/O. UTF-8, comma separated, first row is the header. The label
// column holds 1..K integers, or names resolved through a dictionary.
// ---------------------------------------------------------------------------

struct CsvOptions {
  bool lenient_missing = false;  // drop rows with missing cells vs reject
  std::map<std::string, int> label_map;  // optional name -> 1..K
};

struct CsvLoadResult {
  Dataset data;
  long dropped_rows = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

inline bool is_missing_cell(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "nan" || s == "NaN";
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  const char* e2 = e;
  while (e2 > b && (*(e2 - 1) == ' ' || *(e2 - 1) == '\t')) --e2;
  const auto [p, ec] = std::from_chars(b, e2, out);
  return ec == std::errc() && p == e2;
}

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace detail

/// Loads a CSV into a validated Dataset. K = 0 infers the category count
/// from the maximum label seen.
inline CsvLoadResult load_csv(const std::string& path,
                              const std::string& label_column, int k,
                              const CsvOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw ValidationError("empty file (no header): " + path);
  const auto header = detail::split_csv_line(line);

  int label_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == label_column) label_idx = static_cast<int>(i);
  if (label_idx < 0)
    throw ValidationError("label column not found: " + label_column);

  std::vector<std::string> feature_names;
  std::vector<int> feature_src;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (static_cast<int>(i) == label_idx) continue;
    feature_names.push_back(header[i]);
    feature_src.push_back(static_cast<int>(i));
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  long dropped = 0;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ValidationError("row " + std::to_string(lineno) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
    bool missing = false;
    for (const auto& c : cells)
      if (detail::is_missing_cell(c)) missing = true;
    if (missing) {
      if (opts.lenient_missing) {
        ++dropped;
        continue;
      }
      throw ValidationError("missing value at line " + std::to_string(lineno) +
                            " (use lenient mode to drop such rows)");
    }

    const std::string& label_cell = cells[static_cast<std::size_t>(label_idx)];
    int y = 0;
    if (auto it = opts.label_map.find(label_cell); it != opts.label_map.end()) {
      y = it->second;
    } else {
      double yv = 0.0;
      if (!detail::parse_double(label_cell, yv) ||
          yv != std::floor(yv))
        throw ValidationError("non-integer label '" + label_cell +
                              "' at line " + std::to_string(lineno));
      y = static_cast<int>(yv);
    }
    if (y < 1 || (k > 0 && y > k))
      throw ValidationError("label out of range at line " +
                            std::to_string(lineno) + ": " +
                            std::to_string(y));

    std::vector<double> row(feature_src.size());
    for (std::size_t j = 0; j < feature_src.size(); ++j) {
      const std::string& cell =
          cells[static_cast<std::size_t>(feature_src[j])];
      if (!detail::parse_double(cell, row[j]))
        throw ValidationError("non-numeric cell '" + cell + "' at line " +
                              std::to_string(lineno) + ", column " +
                              feature_names[j]);
    }
    rows.push_back(std::move(row));
    labels.push_back(y);
  }

  if (rows.empty()) throw ValidationError("no data rows in " + path);

  Dataset ds;
  ds.feature_names = feature_names;
  ds.label_name = label_column;
  ds.labels = std::move(labels);
  ds.n_categories =
      k > 0 ? k : *std::max_element(ds.labels.begin(), ds.labels.end());
  ds.features.resize(static_cast<long>(rows.size()),
                     static_cast<long>(feature_names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      ds.features(static_cast<long>(i), static_cast<long>(j)) = rows[i][j];

  if (!opts.label_map.empty()) {
    ds.category_names.assign(static_cast<std::size_t>(ds.n_categories), "");
    for (const auto& [name, idx] : opts.label_map)
      if (idx >= 1 && idx <= ds.n_categories)
        ds.category_names[static_cast<std::size_t>(idx - 1)] = name;
  }

  ds.validate();
  CsvLoadResult result;
  result.data = std::move(ds);
  result.dropped_rows = dropped;
  return result;
}

/// CSV text with features + integer labels; numbers round-trip exactly.
inline std::string to_csv_string(const Dataset& ds) {
  std::ostringstream out;
  for (const auto& name : ds.feature_names) out << name << ',';
  out << ds.label_name << '\n';
  for (long i = 0; i < ds.n_rows(); ++i) {
    for (long j = 0; j < ds.n_features(); ++j)
      out << detail::format_double(ds.features(i, j)) << ',';
    out << ds.labels[static_cast<std::size_t>(i)] << '\n';
  }
  return out.str();
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << to_csv_string(ds);
  if (!out) throw ValidationError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Seeded train/validation split. Rows are partitioned by a seeded uniform
// shuffle; the same (dataset, fraction, seed) triple always produces the
// same partition.
// ---------------------------------------------------------------------------

inline std::pair<Dataset, Dataset> split(const Dataset& ds,
                                         double train_fraction,
                                         std::uint64_t seed) {
  const long n = ds.n_rows();
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("train fraction must be in (0,1)");
  const long n_train = std::llround(train_fraction * static_cast<double>(n));
  if (n_train < 1 || n - n_train < 1)
    throw ValidationError("split would leave an empty partition");
  if (n < 10) throw ValidationError("split requires at least 10 rows");

  Rng rng(seed);
  std::vector<int> perm = rng.permutation(static_cast<int>(n));

  auto take = [&](long lo, long hi) {
    Dataset part;
    part.feature_names = ds.feature_names;
    part.label_name = ds.label_name;
    part.n_categories = ds.n_categories;
    part.category_names = ds.category_names;
    part.features.resize(hi - lo, ds.n_features());
    part.labels.resize(static_cast<std::size_t>(hi - lo));
    for (long i = lo; i < hi; ++i) {
      const int src = perm[static_cast<std::size_t>(i)];
      part.features.row(i - lo) = ds.features.row(src);
      part.labels[static_cast<std::size_t>(i - lo)] =
          ds.labels[static_cast<std::size_t>(src)];
    }
    return part;
  };
  return {take(0, n_train), take(n_train, n)};
}

}  // namespace ochoice
