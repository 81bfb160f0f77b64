#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ochoice/common.hpp"
#include "ochoice/dataset.hpp"
#include "ochoice/econ.hpp"
#include "ochoice/evaluation.hpp"
#include "ochoice/jenks.hpp"
#include "ochoice/model.hpp"
#include "ochoice/synth.hpp"

namespace ochoice {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON codecs. Keys are emitted in sorted order and doubles round-trip
// exactly, so identical models serialize to identical bytes.
// ---------------------------------------------------------------------------

inline json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (long i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vector_from_json(const json& a) {
  Eigen::VectorXd v(static_cast<long>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    v[static_cast<long>(i)] = a[i].get<double>();
  return v;
}

inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (long r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& rows) {
  if (rows.empty()) return Eigen::MatrixXd();
  Eigen::MatrixXd m(static_cast<long>(rows.size()),
                    static_cast<long>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<long>(r), static_cast<long>(c)) = rows[r][c].get<double>();
  return m;
}

inline json to_json(const DesignSpec& spec) {
  json j;
  j["feature_columns"] = spec.feature_columns;
  j["label_column"] = spec.label_column;
  j["coefficient_mode"] = to_string(spec.coefficient_mode);
  j["standardize_columns"] = spec.standardize_columns;
  json ex = json::array();
  for (const auto& [col, cat] : spec.exclusions)
    ex.push_back({{"column", col}, {"category", cat}});
  j["exclusions"] = std::move(ex);
  return j;
}

inline DesignSpec design_from_json(const json& j) {
  DesignSpec spec;
  spec.feature_columns = j.at("feature_columns").get<std::vector<std::string>>();
  spec.label_column = j.at("label_column").get<std::string>();
  spec.coefficient_mode =
      coefficient_mode_from_string(j.at("coefficient_mode").get<std::string>());
  spec.standardize_columns =
      j.at("standardize_columns").get<std::vector<std::string>>();
  for (const auto& e : j.at("exclusions"))
    spec.exclusions.emplace_back(e.at("column").get<std::string>(),
                                 e.at("category").get<int>());
  return spec;
}

inline json to_json(const ScalingParams& s) {
  json cols = json::array();
  for (const auto& c : s.columns)
    cols.push_back({{"name", c.name}, {"mean", c.mean}, {"stddev", c.stddev}});
  return cols;
}

inline ScalingParams scaling_from_json(const json& cols) {
  ScalingParams s;
  for (const auto& c : cols)
    s.columns.push_back({c.at("name").get<std::string>(),
                         c.at("mean").get<double>(),
                         c.at("stddev").get<double>()});
  return s;
}

inline json to_json(const OrderedLogitFit& fit) {
  json j;
  j["beta"] = to_json(fit.beta);
  j["deltas"] = to_json(fit.deltas);
  j["log_likelihood"] = fit.log_likelihood;
  j["n_params"] = fit.n_params;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["divergence_warning"] = fit.divergence_warning;
  return j;
}

inline OrderedLogitFit ordered_logit_from_json(const json& j) {
  OrderedLogitFit fit;
  fit.beta = vector_from_json(j.at("beta"));
  fit.deltas = vector_from_json(j.at("deltas"));
  fit.log_likelihood = j.at("log_likelihood").get<double>();
  fit.n_params = j.at("n_params").get<int>();
  fit.converged = j.at("converged").get<bool>();
  fit.iterations = j.at("iterations").get<int>();
  fit.divergence_warning = j.at("divergence_warning").get<bool>();
  return fit;
}

inline json to_json(const ReslogitParams& p) {
  json j;
  j["mode"] = to_string(p.mode);
  j["beta"] = to_json(p.beta);
  j["trainable_mask"] = to_json(p.trainable_mask);
  json ws = json::array();
  for (const auto& w : p.residual_weights) ws.push_back(to_json(w));
  j["residual_weights"] = std::move(ws);
  j["coral_weights"] = to_json(p.coral_weights);
  j["coral_biases"] = to_json(p.coral_biases);
  j["task_weights"] = to_json(p.task_weights);
  j["alpha"] = p.alpha;
  return j;
}

inline ReslogitParams reslogit_params_from_json(const json& j) {
  ReslogitParams p;
  p.mode = coefficient_mode_from_string(j.at("mode").get<std::string>());
  p.beta = matrix_from_json(j.at("beta"));
  p.trainable_mask = matrix_from_json(j.at("trainable_mask"));
  for (const auto& w : j.at("residual_weights"))
    p.residual_weights.push_back(matrix_from_json(w));
  p.coral_weights = vector_from_json(j.at("coral_weights"));
  p.coral_biases = vector_from_json(j.at("coral_biases"));
  p.task_weights = vector_from_json(j.at("task_weights"));
  p.alpha = j.at("alpha").get<double>();
  return p;
}

inline json to_json(const ReslogitFitResult& fit) {
  json j;
  j["params"] = to_json(fit.params);
  json hist = json::array();
  for (const auto& rec : fit.history)
    hist.push_back({{"epoch", rec.epoch},
                    {"train_loss", rec.train_loss},
                    {"val_mpe", rec.val_mpe}});
  j["history"] = std::move(hist);
  j["best_epoch"] = fit.best_epoch;
  j["best_val_mpe"] = fit.best_val_mpe;
  j["epochs_run"] = fit.epochs_run;
  j["stopped_early"] = fit.stopped_early;
  j["final_train_loss"] = fit.final_train_loss;
  j["clamp_violations"] = fit.clamp_violations;
  j["clamp_degenerate"] = fit.clamp_degenerate;
  return j;
}

inline ReslogitFitResult reslogit_fit_from_json(const json& j) {
  ReslogitFitResult fit;
  fit.params = reslogit_params_from_json(j.at("params"));
  for (const auto& rec : j.at("history"))
    fit.history.push_back({rec.at("epoch").get<int>(),
                           rec.at("train_loss").get<double>(),
                           rec.at("val_mpe").get<double>()});
  fit.best_epoch = j.at("best_epoch").get<int>();
  fit.best_val_mpe = j.at("best_val_mpe").get<double>();
  fit.epochs_run = j.at("epochs_run").get<int>();
  fit.stopped_early = j.at("stopped_early").get<bool>();
  fit.final_train_loss = j.at("final_train_loss").get<double>();
  fit.clamp_violations = j.value("clamp_violations", 0L);
  fit.clamp_degenerate = j.value("clamp_degenerate", 0L);
  return fit;
}

inline json to_json(const ModelBundle& bundle) {
  json j;
  j["schema_version"] = bundle.schema_version;
  j["kind"] = bundle.kind();
  j["design"] = to_json(bundle.design);
  j["scaling"] = to_json(bundle.scaling);
  j["n_categories"] = bundle.n_categories;
  if (bundle.is_ordered_logit())
    j["ordered_logit"] = to_json(bundle.ordered());
  else
    j["reslogit"] = to_json(bundle.reslogit());
  return j;
}

inline ModelBundle bundle_from_json(const json& j) {
  ModelBundle bundle;
  bundle.schema_version = j.at("schema_version").get<int>();
  bundle.design = design_from_json(j.at("design"));
  bundle.scaling = scaling_from_json(j.at("scaling"));
  bundle.n_categories = j.at("n_categories").get<int>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "ordered_logit")
    bundle.fit = ordered_logit_from_json(j.at("ordered_logit"));
  else if (kind == "ordinal_reslogit")
    bundle.fit = reslogit_fit_from_json(j.at("reslogit"));
  else
    throw ValidationError("unknown model kind: " + kind);
  return bundle;
}

inline json to_json(const GenSpec& spec) {
  json j;
  j["n_obs"] = spec.n_obs;
  j["n_features"] = spec.n_features;
  j["beta_true"] = to_json(spec.beta_true);
  if (spec.heterogeneity == HeterogeneityKind::kCategorySpecific)
    j["beta_by_category"] = to_json(spec.beta_by_category);
  j["deltas_true"] = spec.deltas_true;
  j["heterogeneity"] = to_string(spec.heterogeneity);
  json its = json::array();
  for (const auto& it : spec.interactions)
    its.push_back({{"a", it.a}, {"b", it.b}, {"gamma", it.gamma}});
  j["interactions"] = std::move(its);
  j["binary_features"] = spec.binary_features;
  j["seed"] = spec.seed;
  return j;
}

inline GenSpec gen_spec_from_json(const json& j) {
  GenSpec spec;
  spec.n_obs = j.at("n_obs").get<long>();
  spec.n_features = j.at("n_features").get<int>();
  if (j.contains("beta_true")) spec.beta_true = vector_from_json(j.at("beta_true"));
  if (j.contains("beta_by_category"))
    spec.beta_by_category = matrix_from_json(j.at("beta_by_category"));
  spec.deltas_true = j.at("deltas_true").get<std::vector<double>>();
  spec.heterogeneity =
      heterogeneity_from_string(j.value("heterogeneity", std::string("none")));
  if (j.contains("interactions"))
    for (const auto& it : j.at("interactions"))
      spec.interactions.push_back({it.at("a").get<int>(), it.at("b").get<int>(),
                                   it.at("gamma").get<double>()});
  if (j.contains("binary_features"))
    spec.binary_features = j.at("binary_features").get<std::vector<bool>>();
  spec.seed = j.value("seed", std::uint64_t{1});
  return spec;
}

inline json to_json(const Breaks& b) {
  json j;
  j["thresholds"] = b.thresholds;
  j["lower_bound"] = b.lower_bound;
  j["upper_bound"] = b.upper_bound;
  j["category_counts"] = b.category_counts;
  j["category_shares"] = b.category_shares;
  j["objective"] = b.objective;
  return j;
}

inline json to_json(const ParamRow& row) {
  json j;
  j["name"] = row.name;
  j["value"] = row.value;
  if (row.has_t)
    j["t_stat"] = row.t_stat;
  else
    j["t_stat"] = nullptr;
  return j;
}

inline json to_json(const FitReport& r) {
  json j;
  j["model_kind"] = r.model_kind;
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back(to_json(row));
  j["parameters"] = std::move(rows);
  j["log_likelihood"] = r.log_likelihood;
  j["choice_log_likelihood"] = r.choice_log_likelihood;
  j["n_params"] = r.n_params;
  j["aic"] = r.aic;
  j["validation_accuracy"] = r.validation_accuracy;
  j["n_observations"] = r.n_observations;
  j["n_validation"] = r.n_validation;
  j["se_method"] = r.se_method;
  if (!r.caveat.empty()) j["caveat"] = r.caveat;
  j["clamped_probability_vectors"] = r.clamped;
  j["degenerate_probability_vectors"] = r.degenerate;
  return j;
}

inline json to_json(const SubstitutionCurve& c) {
  json j;
  j["variable"] = c.variable;
  j["grid"] = c.grid;
  j["shares"] = to_json(c.shares);
  json cross = json::array();
  for (const auto& x : c.crossings)
    cross.push_back({{"category_a", x.category_a},
                     {"category_b", x.category_b},
                     {"at_value", x.at_value}});
  j["crossings"] = std::move(cross);
  return j;
}

inline json to_json(const ElasticityResult& e) {
  json j;
  j["variable"] = e.variable;
  j["aggregate"] = to_json(e.aggregate);
  j["excluded_observations"] = e.excluded;
  return j;
}

inline json to_json(const BinaryEffect& b) {
  json j;
  j["variable"] = b.variable;
  j["mean_change"] = to_json(b.mean_change);
  j["mean_change_from0"] = to_json(b.mean_change_from0);
  j["mean_change_from1"] = to_json(b.mean_change_from1);
  j["n_from0"] = b.n_from0;
  j["n_from1"] = b.n_from1;
  j["expected_value_delta"] = b.expected_value_delta;
  j["representatives"] = to_json(b.representatives);
  return j;
}

inline json to_json(const EconReport& r) {
  json j;
  j["share_mode"] = r.share_mode;
  j["market_shares"] = to_json(r.market_shares);
  json curves = json::array();
  for (const auto& c : r.substitution_curves) curves.push_back(to_json(c));
  j["substitution_curves"] = std::move(curves);
  json els = json::array();
  for (const auto& e : r.elasticities) els.push_back(to_json(e));
  j["elasticities"] = std::move(els);
  json bes = json::array();
  for (const auto& b : r.binary_effects) bes.push_back(to_json(b));
  j["binary_effects"] = std::move(bes);
  if (r.representatives.size() > 0) {
    j["representatives"] = to_json(r.representatives);
    j["representatives_source"] = r.representatives_source;
  }
  j["clamped_probability_vectors"] = r.clamped;
  j["degenerate_probability_vectors"] = r.degenerate;
  return j;
}

// ---------------------------------------------------------------------------
// File helpers. Writes go through a temp-file rename, so interrupted runs
// never leave partial outputs behind.
// ---------------------------------------------------------------------------

inline void write_file_atomic(const std::string& path,
                              const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write file: " + tmp.string());
    out << content;
    if (!out) throw ValidationError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

inline void save_model(const ModelBundle& bundle, const std::string& path) {
  write_file_atomic(path, to_json(bundle).dump(2) + "\n");
}

inline ModelBundle load_model(const std::string& path) {
  return bundle_from_json(read_json_file(path));
}

/// FNV-1a 64-bit content hash for run manifests.
inline std::string file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file for hashing: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(hex);
}

struct RunManifest {
  std::string subcommand;
  json config;  // fully resolved configuration
  std::uint64_t seed = 0;
  std::string toolkit_version = kToolkitVersion;
  std::vector<std::pair<std::string, std::string>> inputs;  // (path, hash)
  std::vector<std::string> outputs;
  double duration_seconds = 0.0;
  std::string determinism = "sequential";
  int threads = 1;
};

inline json to_json(const RunManifest& m) {
  json j;
  j["subcommand"] = m.subcommand;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["toolkit_version"] = m.toolkit_version;
  json ins = json::array();
  for (const auto& [path, hash] : m.inputs)
    ins.push_back({{"path", path}, {"fnv1a64", hash}});
  j["inputs"] = std::move(ins);
  j["outputs"] = m.outputs;
  j["duration_seconds"] = m.duration_seconds;
  j["determinism"] = m.determinism;
  j["threads"] = m.threads;
  return j;
}

}  // namespace ochoice
