// ochoice: single-binary pipeline for ordered discrete choice analysis.
// Subcommands: simulate, discretize, fit, evaluate, analyze. Every run
// writes exactly one manifest next to its outputs recording the resolved
// configuration, seed, input hashes and wall-clock duration.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ochoice/ochoice.hpp"

namespace fs = std::filesystem;
using ochoice::json;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    double v = 0.0;
    if (!ochoice::detail::parse_double(item, v))
      throw ochoice::ValidationError("not a number: " + item);
    out.push_back(v);
  }
  return out;
}

/// "lo:hi:step" inclusive grid.
std::vector<double> parse_grid_spec(const std::string& s) {
  const auto parts = [&] {
    std::vector<std::string> p;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ':')) p.push_back(item);
    return p;
  }();
  if (parts.size() != 3)
    throw ochoice::ValidationError("grid must be lo:hi:step, got " + s);
  double lo = 0, hi = 0, step = 0;
  if (!ochoice::detail::parse_double(parts[0], lo) ||
      !ochoice::detail::parse_double(parts[1], hi) ||
      !ochoice::detail::parse_double(parts[2], step) || step <= 0 || hi < lo)
    throw ochoice::ValidationError("invalid grid spec: " + s);
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    // Snap to 12 decimals so 0.3:0.6:0.05 yields 0.40, 0.45, ... exactly.
    const double v = std::round((lo + step * i) * 1e12) / 1e12;
    if (v > hi + 1e-12) break;
    grid.push_back(v);
  }
  return grid;
}

/// "lo:hi:steps" with an integer point count (substitution sweeps).
std::vector<double> parse_sweep_spec(const std::string& s) {
  std::vector<std::string> p;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ':')) p.push_back(item);
  if (p.size() != 3)
    throw ochoice::ValidationError("sweep must be lo:hi:steps, got " + s);
  double lo = 0, hi = 0, steps = 0;
  if (!ochoice::detail::parse_double(p[0], lo) ||
      !ochoice::detail::parse_double(p[1], hi) ||
      !ochoice::detail::parse_double(p[2], steps) || steps < 1 ||
      steps != std::floor(steps) || hi < lo)
    throw ochoice::ValidationError("invalid sweep spec: " + s);
  const int n = static_cast<int>(steps);
  std::vector<double> grid;
  if (n == 1) {
    grid.push_back(lo);
  } else {
    for (int i = 0; i < n; ++i)
      grid.push_back(lo + (hi - lo) * i / static_cast<double>(n - 1));
  }
  return grid;
}

std::string manifest_path_for(const std::string& out_path) {
  fs::path p(out_path);
  p.replace_extension();
  return p.string() + ".manifest.json";
}

struct RunContext {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  ochoice::RunManifest manifest;

  void add_input(const std::string& path) {
    manifest.inputs.emplace_back(path, ochoice::file_content_hash(path));
  }
  void write(const std::string& manifest_path) {
    manifest.threads = ochoice::env_thread_cap();
    manifest.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    ochoice::write_file_atomic(manifest_path,
                               ochoice::to_json(manifest).dump(2) + "\n");
  }
};

// Generic numeric table for the discretize subcommand (no label semantics).
struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> raw_rows;
  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

NumericTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ochoice::ValidationError("cannot open file: " + path);
  NumericTable t;
  std::string line;
  if (!std::getline(in, line))
    throw ochoice::ValidationError("empty file: " + path);
  t.header = ochoice::detail::split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto cells = ochoice::detail::split_csv_line(line);
    if (cells.size() != t.header.size())
      throw ochoice::ValidationError("ragged CSV row in " + path);
    t.raw_rows.push_back(std::move(cells));
  }
  if (t.raw_rows.empty())
    throw ochoice::ValidationError("no data rows in " + path);
  return t;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string spec_path;
  std::string out_path;
};

int run_simulate(const SimulateArgs& args) {
  RunContext ctx;
  ctx.manifest.subcommand = "simulate";
  ctx.add_input(args.spec_path);

  const json spec_json = ochoice::read_json_file(args.spec_path);
  const ochoice::GenSpec spec = ochoice::gen_spec_from_json(spec_json);
  spec.validate();
  const ochoice::Dataset ds =
      spec.heterogeneity == ochoice::HeterogeneityKind::kNone
          ? ochoice::gen_ordered_logit(spec)
          : ochoice::gen_heterogeneous(spec);
  ochoice::write_file_atomic(args.out_path, ochoice::to_csv_string(ds));

  ctx.manifest.seed = spec.seed;
  ctx.manifest.config = {{"spec", spec_json}, {"out", args.out_path}};
  ctx.manifest.outputs = {args.out_path};
  ctx.write(manifest_path_for(args.out_path));
  return 0;
}

// ---------------------------------------------------------------------------
// discretize
// ---------------------------------------------------------------------------

struct DiscretizeArgs {
  std::string data_path;
  std::string column;
  int k = 0;
  std::string thresholds;  // manual override, comma separated
  std::string out_labeled;
  std::string out_summary;
};

int run_discretize(const DiscretizeArgs& args) {
  RunContext ctx;
  ctx.manifest.subcommand = "discretize";
  ctx.add_input(args.data_path);

  const NumericTable table = read_table(args.data_path);
  const int col = table.column_index(args.column);
  if (col < 0)
    throw ochoice::ValidationError("column not found: " + args.column);
  std::vector<double> values;
  values.reserve(table.raw_rows.size());
  for (const auto& row : table.raw_rows) {
    double v = 0.0;
    if (!ochoice::detail::parse_double(row[static_cast<std::size_t>(col)], v))
      throw ochoice::ValidationError("non-numeric cell in column " +
                                     args.column);
    values.push_back(v);
  }

  ochoice::Breaks breaks;
  bool manual = !args.thresholds.empty();
  if (manual) {
    // User thresholds are applied verbatim, never re-optimized.
    const std::vector<double> thr = parse_double_list(args.thresholds);
    const std::vector<int> labels = ochoice::assign_categories(values, thr);
    breaks = ochoice::category_summary(labels, thr);
    breaks.lower_bound = *std::min_element(values.begin(), values.end());
    breaks.upper_bound = *std::max_element(values.begin(), values.end());
  } else {
    if (args.k < 1)
      throw ochoice::ValidationError("discretize requires --k or --thresholds");
    breaks = ochoice::jenks_breaks(values, args.k);
  }
  const std::vector<int> labels =
      ochoice::assign_categories(values, breaks.thresholds);

  std::ostringstream labeled;
  for (const auto& h : table.header) labeled << h << ',';
  labeled << args.column << "_category\n";
  for (std::size_t i = 0; i < table.raw_rows.size(); ++i) {
    for (const auto& cell : table.raw_rows[i]) labeled << cell << ',';
    labeled << labels[i] << '\n';
  }
  ochoice::write_file_atomic(args.out_labeled, labeled.str());

  json summary = ochoice::to_json(breaks);
  summary["column"] = args.column;
  summary["method"] = manual ? "manual" : "jenks";
  ochoice::write_file_atomic(args.out_summary, summary.dump(2) + "\n");

  ctx.manifest.config = {{"data", args.data_path},
                         {"column", args.column},
                         {"k", args.k},
                         {"thresholds", args.thresholds},
                         {"out-labeled", args.out_labeled},
                         {"out-summary", args.out_summary}};
  ctx.manifest.outputs = {args.out_labeled, args.out_summary};
  ctx.write(manifest_path_for(args.out_summary));
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string model = "ordered";
  std::string train_path;
  std::string val_path;
  std::string label_column = "y";
  int k = 0;  // 0 = infer from training labels
  std::string features;  // comma list; empty = all non-label columns
  std::string coefficient_mode = "generic";
  std::string exclude;      // col:cat,col:cat
  std::string standardize;  // comma list
  std::string label_dict;   // optional JSON path
  bool lenient = false;
  int layers = 16;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double rmsprop_decay = 0.9;
  int max_epochs = 500;
  int patience = 10;
  std::uint64_t seed = 1;
  std::string alpha_grid = "0.3:0.6:0.05";
  bool monotone_biases = false;
  std::string out_path;
};

/// CLI flags override config-file values; missing flags fall back to the
/// file. The manifest records the resolved result.
void apply_config_file(const json& cfg, const CLI::App* cmd, FitArgs& a) {
  auto absent = [&](const std::string& flag) {
    return cmd->count(flag) == 0;
  };
  auto load = [&](const char* key, const std::string& flag, auto& out) {
    if (cfg.contains(key) && absent(flag)) cfg.at(key).get_to(out);
  };
  load("model", "--model", a.model);
  load("train", "--train", a.train_path);
  load("val", "--val", a.val_path);
  load("label-column", "--label-column", a.label_column);
  load("k", "--k", a.k);
  load("features", "--features", a.features);
  load("coefficient-mode", "--coefficient-mode", a.coefficient_mode);
  load("exclude", "--exclude", a.exclude);
  load("standardize", "--standardize", a.standardize);
  load("label-dict", "--label-dict", a.label_dict);
  load("lenient", "--lenient", a.lenient);
  load("layers", "--layers", a.layers);
  load("batch-size", "--batch-size", a.batch_size);
  load("learning-rate", "--learning-rate", a.learning_rate);
  load("rmsprop-decay", "--rmsprop-decay", a.rmsprop_decay);
  load("max-epochs", "--max-epochs", a.max_epochs);
  load("patience", "--patience", a.patience);
  load("seed", "--seed", a.seed);
  load("alpha-grid", "--alpha-grid", a.alpha_grid);
  load("monotone-biases", "--monotone-biases", a.monotone_biases);
  load("out", "--out", a.out_path);
}

json resolved_fit_config(const FitArgs& a) {
  return {{"model", a.model},
          {"train", a.train_path},
          {"val", a.val_path},
          {"label-column", a.label_column},
          {"k", a.k},
          {"features", a.features},
          {"coefficient-mode", a.coefficient_mode},
          {"exclude", a.exclude},
          {"standardize", a.standardize},
          {"label-dict", a.label_dict},
          {"lenient", a.lenient},
          {"layers", a.layers},
          {"batch-size", a.batch_size},
          {"learning-rate", a.learning_rate},
          {"rmsprop-decay", a.rmsprop_decay},
          {"max-epochs", a.max_epochs},
          {"patience", a.patience},
          {"seed", a.seed},
          {"alpha-grid", a.alpha_grid},
          {"monotone-biases", a.monotone_biases},
          {"out", a.out_path}};
}

ochoice::CsvOptions csv_options(const FitArgs& args) {
  ochoice::CsvOptions opts;
  opts.lenient_missing = args.lenient;
  if (!args.label_dict.empty()) {
    const json dict = ochoice::read_json_file(args.label_dict);
    for (auto it = dict.begin(); it != dict.end(); ++it)
      opts.label_map[it.key()] = it.value().get<int>();
  }
  return opts;
}

int run_fit(const FitArgs& args, const CLI::App* cmd, const json& cfg) {
  FitArgs a = args;
  if (!cfg.is_null()) apply_config_file(cfg, cmd, a);
  if (a.train_path.empty() || a.val_path.empty() || a.out_path.empty())
    throw ochoice::ValidationError("fit requires --train, --val and --out");
  if (a.model != "ordered" && a.model != "reslogit")
    throw ochoice::ValidationError("unknown model kind: " + a.model);
  if (a.model == "ordered") {
    for (const char* flag : {"--layers", "--batch-size", "--learning-rate",
                             "--rmsprop-decay", "--max-epochs", "--patience",
                             "--alpha-grid", "--monotone-biases"})
      if (cmd->count(flag) > 0)
        throw ochoice::ValidationError(std::string(flag) +
                                       " applies to --model reslogit only");
  }

  RunContext ctx;
  ctx.manifest.subcommand = "fit";
  ctx.manifest.seed = a.seed;
  ctx.add_input(a.train_path);
  ctx.add_input(a.val_path);

  const ochoice::CsvOptions opts = csv_options(a);
  auto train_loaded = ochoice::load_csv(a.train_path, a.label_column, a.k, opts);
  const int k = train_loaded.data.n_categories;
  auto val_loaded = ochoice::load_csv(a.val_path, a.label_column, k, opts);
  if (train_loaded.dropped_rows + val_loaded.dropped_rows > 0)
    std::cerr << "dropped " << train_loaded.dropped_rows +
                                   val_loaded.dropped_rows
              << " rows with missing values\n";

  ochoice::DesignSpec design;
  design.label_column = a.label_column;
  design.feature_columns = a.features.empty()
                               ? train_loaded.data.feature_names
                               : split_list(a.features);
  design.coefficient_mode =
      ochoice::coefficient_mode_from_string(a.coefficient_mode);
  design.standardize_columns = split_list(a.standardize);
  for (const auto& item : split_list(a.exclude)) {
    const auto pos = item.rfind(':');
    double cat = 0.0;
    if (pos == std::string::npos ||
        !ochoice::detail::parse_double(item.substr(pos + 1), cat) ||
        cat != std::floor(cat))
      throw ochoice::ValidationError("exclusion must be column:category, got " +
                                     item);
    design.exclusions.emplace_back(item.substr(0, pos),
                                   static_cast<int>(cat));
  }
  design.validate(train_loaded.data);

  auto [train, scaling] = ochoice::standardize(train_loaded.data, design);
  ochoice::Dataset val = val_loaded.data;
  scaling.apply(val);

  ochoice::ModelBundle bundle;
  bundle.design = design;
  bundle.scaling = scaling;
  bundle.n_categories = k;

  if (a.model == "ordered") {
    bundle.fit = ochoice::fit_ordered_logit(train, design);
  } else {
    ochoice::TrainConfig config;
    config.m_layers = a.layers;
    config.batch_size = a.batch_size;
    config.learning_rate = a.learning_rate;
    config.rmsprop_decay = a.rmsprop_decay;
    config.max_epochs = a.max_epochs;
    config.early_stop_patience = a.patience;
    config.seed = a.seed;
    config.alpha_grid = parse_grid_spec(a.alpha_grid);
    config.monotone_biases = a.monotone_biases;
    ochoice::ReslogitFitResult fit =
        ochoice::fit_reslogit(train, val, design, config);
    ochoice::select_alpha(fit.params, ochoice::design_matrix(val, design),
                          val.labels, config.alpha_grid);
    bundle.fit = std::move(fit);
  }

  ochoice::save_model(bundle, a.out_path);
  ctx.manifest.config = resolved_fit_config(a);
  ctx.manifest.outputs = {a.out_path};
  ctx.write(manifest_path_for(a.out_path));
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string model_path;
  std::string train_path;
  std::string val_path;
  std::string out_path;
  std::string out_text;
  bool bhhh_full = false;
  bool absolute_ll = false;
};

int run_evaluate(const EvaluateArgs& args) {
  RunContext ctx;
  ctx.manifest.subcommand = "evaluate";
  ctx.add_input(args.model_path);
  ctx.add_input(args.train_path);
  ctx.add_input(args.val_path);

  const ochoice::ModelBundle bundle = ochoice::load_model(args.model_path);
  const auto train = ochoice::load_csv(args.train_path,
                                       bundle.design.label_column,
                                       bundle.n_categories);
  const auto val = ochoice::load_csv(args.val_path,
                                     bundle.design.label_column,
                                     bundle.n_categories);

  ochoice::TStatOptions opts;
  opts.bhhh_full_matrix = args.bhhh_full;
  const ochoice::FitReport report =
      ochoice::make_fit_report(bundle, train.data, val.data, opts);

  ochoice::write_file_atomic(args.out_path,
                             ochoice::to_json(report).dump(2) + "\n");
  ctx.manifest.outputs = {args.out_path};
  const std::string text =
      ochoice::render_fit_report_text(report, args.absolute_ll);
  if (!args.out_text.empty()) {
    ochoice::write_file_atomic(args.out_text, text);
    ctx.manifest.outputs.push_back(args.out_text);
  } else {
    std::cout << text;
  }

  ctx.manifest.config = {{"model", args.model_path},
                         {"train", args.train_path},
                         {"val", args.val_path},
                         {"out", args.out_path},
                         {"out-text", args.out_text},
                         {"bhhh-full", args.bhhh_full},
                         {"abs-ll", args.absolute_ll}};
  ctx.write(manifest_path_for(args.out_path));
  return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string model_path;
  std::string data_path;
  std::string out_dir;
  std::string market_share;  // "", "hard", "soft"
  std::vector<std::vector<std::string>> substitutions;  // (VAR, lo:hi:steps)
  std::vector<std::string> elasticities;
  std::vector<std::string> binary_effects;
  std::string representatives;  // comma list
};

int run_analyze(const AnalyzeArgs& args) {
  RunContext ctx;
  ctx.manifest.subcommand = "analyze";
  ctx.add_input(args.model_path);
  ctx.add_input(args.data_path);

  const ochoice::ModelBundle bundle = ochoice::load_model(args.model_path);
  const auto data = ochoice::load_csv(args.data_path,
                                      bundle.design.label_column,
                                      bundle.n_categories);
  const int threads = ochoice::env_thread_cap();
  fs::create_directories(args.out_dir);
  const fs::path dir(args.out_dir);

  ochoice::EconReport report;
  ochoice::ClampStats stats;
  std::vector<std::string> outputs;

  Eigen::VectorXd representatives;
  if (!args.representatives.empty()) {
    const auto values = parse_double_list(args.representatives);
    representatives = Eigen::Map<const Eigen::VectorXd>(
        values.data(), static_cast<long>(values.size()));
    report.representatives_source = "user";
  } else {
    // Fall back to category indices; flagged so no one mistakes these for
    // calibrated interval representatives.
    representatives.resize(bundle.n_categories);
    for (int j = 0; j < bundle.n_categories; ++j)
      representatives[j] = j + 1;
    report.representatives_source = "category_indices";
  }
  report.representatives = representatives;

  const ochoice::ShareMode mode = args.market_share == "soft"
                                      ? ochoice::ShareMode::kSoft
                                      : ochoice::ShareMode::kHard;
  report.share_mode = ochoice::to_string(mode);
  report.market_shares =
      ochoice::market_share(bundle, data.data, mode, &stats);

  for (const auto& sub : args.substitutions) {
    const std::vector<double> grid = parse_sweep_spec(sub[1]);
    report.substitution_curves.push_back(ochoice::substitution_curve(
        bundle, data.data, sub[0], grid, threads, &stats));
  }
  for (const auto& var : args.elasticities)
    report.elasticities.push_back(
        ochoice::elasticity(bundle, data.data, var, threads));
  for (const auto& var : args.binary_effects)
    report.binary_effects.push_back(ochoice::binary_effect(
        bundle, data.data, var, representatives, threads));
  report.clamped = stats.clamped;
  report.degenerate = stats.degenerate;

  // Nothing is written until every computation has succeeded, so a failed
  // run leaves no outputs dangling without a manifest.
  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back(
      (dir / "market_shares.csv").string(),
      ochoice::market_share_csv(report.market_shares, report.share_mode));
  for (const auto& curve : report.substitution_curves) {
    files.emplace_back(
        (dir / ("substitution_" + curve.variable + ".csv")).string(),
        ochoice::substitution_curve_csv(curve));
    files.emplace_back(
        (dir / ("substitution_" + curve.variable + ".svg")).string(),
        ochoice::substitution_curve_svg(curve));
  }
  if (!report.elasticities.empty())
    files.emplace_back((dir / "elasticities.csv").string(),
                       ochoice::elasticity_csv(report.elasticities));
  for (const auto& be : report.binary_effects)
    files.emplace_back(
        (dir / ("binary_effect_" + be.variable + ".csv")).string(),
        ochoice::binary_effect_csv(be));
  files.emplace_back((dir / "econ_report.json").string(),
                     ochoice::to_json(report).dump(2) + "\n");
  for (const auto& [path, content] : files) {
    ochoice::write_file_atomic(path, content);
    outputs.push_back(path);
  }

  json subs = json::array();
  for (const auto& s : args.substitutions) subs.push_back({s[0], s[1]});
  ctx.manifest.config = {{"model", args.model_path},
                         {"data", args.data_path},
                         {"out-dir", args.out_dir},
                         {"market-share", report.share_mode},
                         {"substitution", subs},
                         {"elasticity", args.elasticities},
                         {"binary-effect", args.binary_effects},
                         {"representatives", args.representatives}};
  ctx.manifest.outputs = outputs;
  ctx.write((dir / "manifest.json").string());
  return 0;
}

void emit_error(const std::string& kind, const std::string& message) {
  json err = {{"error", kind}, {"message", message}};
  std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ochoice: estimation toolkit for ordered discrete choices"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* sim_cmd =
      app.add_subcommand("simulate", "Generate synthetic choice data");
  sim_cmd->add_option("--spec", sim.spec_path, "Generator spec JSON")
      ->required();
  sim_cmd->add_option("--out", sim.out_path, "Output CSV path")->required();

  DiscretizeArgs disc;
  auto* disc_cmd = app.add_subcommand(
      "discretize", "Cut a continuous column into ordered categories");
  disc_cmd->add_option("--data", disc.data_path, "Input CSV")->required();
  disc_cmd->add_option("--column", disc.column, "Column to discretize")
      ->required();
  disc_cmd->add_option("--k", disc.k, "Number of categories (Jenks)");
  disc_cmd->add_option("--thresholds", disc.thresholds,
                       "Manual thresholds t1,t2,... (overrides Jenks)");
  disc_cmd->add_option("--out-labeled", disc.out_labeled, "Labeled CSV out")
      ->required();
  disc_cmd->add_option("--out-summary", disc.out_summary, "Summary JSON out")
      ->required();

  FitArgs fit;
  std::string fit_config_path;
  auto* fit_cmd = app.add_subcommand("fit", "Estimate a model");
  fit_cmd->add_option("--model", fit.model, "ordered | reslogit");
  fit_cmd->add_option("--train", fit.train_path, "Training CSV");
  fit_cmd->add_option("--val", fit.val_path, "Validation CSV");
  fit_cmd->add_option("--label-column", fit.label_column, "Label column name");
  fit_cmd->add_option("--k", fit.k, "Category count (0 = infer)");
  fit_cmd->add_option("--features", fit.features,
                      "Explanatory columns a,b,c (default: all)");
  fit_cmd->add_option("--coefficient-mode", fit.coefficient_mode,
                      "generic | alternative_specific");
  fit_cmd->add_option("--exclude", fit.exclude,
                      "Pinned coefficients col:cat,col:cat");
  fit_cmd->add_option("--standardize", fit.standardize,
                      "Columns to z-score using training stats");
  fit_cmd->add_option("--label-dict", fit.label_dict,
                      "JSON map of label names to 1..K");
  fit_cmd->add_flag("--lenient", fit.lenient,
                    "Drop rows with missing values instead of rejecting");
  fit_cmd->add_option("--layers", fit.layers, "Residual depth M (reslogit)");
  fit_cmd->add_option("--batch-size", fit.batch_size, "Minibatch size");
  fit_cmd->add_option("--learning-rate", fit.learning_rate, "RMSprop rate");
  fit_cmd->add_option("--rmsprop-decay", fit.rmsprop_decay, "RMSprop decay");
  fit_cmd->add_option("--max-epochs", fit.max_epochs, "Epoch cap");
  fit_cmd->add_option("--patience", fit.patience, "Early-stopping patience");
  fit_cmd->add_option("--seed", fit.seed, "RNG seed");
  fit_cmd->add_option("--alpha-grid", fit.alpha_grid,
                      "Decision threshold grid lo:hi:step");
  fit_cmd->add_flag("--monotone-biases", fit.monotone_biases,
                    "Enforce decreasing CORAL biases during training");
  fit_cmd->add_option("--config", fit_config_path,
                      "JSON config file (flags take precedence)");
  fit_cmd->add_option("--out", fit.out_path, "Model JSON out");

  EvaluateArgs eval;
  auto* eval_cmd =
      app.add_subcommand("evaluate", "Fit diagnostics and coefficient table");
  eval_cmd->add_option("--model", eval.model_path, "Model JSON")->required();
  eval_cmd->add_option("--train", eval.train_path, "Training CSV")->required();
  eval_cmd->add_option("--val", eval.val_path, "Validation CSV")->required();
  eval_cmd->add_option("--out", eval.out_path, "Report JSON out")->required();
  eval_cmd->add_option("--out-text", eval.out_text,
                       "Write the text table here instead of stdout");
  eval_cmd->add_flag("--bhhh-full", eval.bhhh_full,
                     "BHHH over all parameter blocks, not just beta");
  eval_cmd->add_flag("--abs-ll", eval.absolute_ll,
                     "Print |log-likelihood| in the text table");

  AnalyzeArgs ana;
  auto* ana_cmd = app.add_subcommand(
      "analyze", "Market shares, substitution, elasticities");
  ana_cmd->add_option("--model", ana.model_path, "Model JSON")->required();
  ana_cmd->add_option("--data", ana.data_path, "Analysis CSV")->required();
  ana_cmd->add_option("--out-dir", ana.out_dir, "Output directory")
      ->required();
  ana_cmd->add_option("--market-share", ana.market_share, "hard | soft")
      ->check(CLI::IsMember({"hard", "soft"}));
  ana_cmd
      ->add_option("--substitution", ana.substitutions,
                   "VAR lo:hi:steps (repeatable)")
      ->expected(-1)->type_size(2);
  ana_cmd->add_option("--elasticity", ana.elasticities,
                      "Continuous variable (repeatable)");
  ana_cmd->add_option("--binary-effect", ana.binary_effects,
                      "Binary variable (repeatable)");
  ana_cmd->add_option("--representatives", ana.representatives,
                      "Category representatives c1,c2,... for expected values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);  // prints message and usage hint
    emit_error("cli", e.what());
    return 1;
  }

  try {
    if (sim_cmd->parsed()) return run_simulate(sim);
    if (disc_cmd->parsed()) return run_discretize(disc);
    if (fit_cmd->parsed()) {
      json cfg;
      if (!fit_config_path.empty())
        cfg = ochoice::read_json_file(fit_config_path);
      return run_fit(fit, fit_cmd, cfg);
    }
    if (eval_cmd->parsed()) return run_evaluate(eval);
    if (ana_cmd->parsed()) return run_analyze(ana);
  } catch (const ochoice::ValidationError& e) {
    emit_error("validation", e.what());
    return 1;
  } catch (const ochoice::NumericError& e) {
    emit_error("numeric", e.what());
    return 2;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
  return 1;
}
