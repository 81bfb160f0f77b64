#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ochoice/common.hpp"
#include "ochoice/dataset.hpp"
#include "ochoice/model.hpp"

namespace ochoice {

/// Fraction of misclassified observations.
inline double mpe(const std::vector<int>& predicted,
                  const std::vector<int>& actual) {
  if (predicted.empty() || predicted.size() != actual.size())
    throw ValidationError("mpe requires equal-length nonempty sequences");
  long wrong = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] != actual[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(predicted.size());
}

inline double aic(double log_likelihood, long n_params) {
  if (n_params < 0) throw ValidationError("parameter count must be >= 0");
  return -2.0 * log_likelihood + 2.0 * static_cast<double>(n_params);
}

/// Choice log-likelihood sum ln P(y_n = observed) under either model kind.
/// Compensated summation; returns -inf (flagged via stats) if any observed
/// choice has zero probability after clamping.
inline double model_log_likelihood(const ModelBundle& bundle,
                                   const Dataset& data,
                                   ClampStats* stats = nullptr) {
  const Eigen::MatrixXd x = raw_design_matrix(bundle, data);
  KahanSum sum;
  bool degenerate = false;
  for (long i = 0; i < x.rows(); ++i) {
    const double lp = bundle.log_prob_design(
        bundle.standardize_row(x.row(i)),
        data.labels[static_cast<std::size_t>(i)], stats);
    if (lp == -std::numeric_limits<double>::infinity()) degenerate = true;
    sum.add(lp);
  }
  return degenerate ? -std::numeric_limits<double>::infinity() : sum.value();
}

// ---------------------------------------------------------------------------
// Parameter table with t-statistics. Ordered logit uses classical MLE
// standard errors from the inverse observed Hessian (central differences of
// the analytic gradient). The reslogit uses the BHHH estimator on the beta
// block: covariance from the inverse sum of per-observation gradient outer
// products. Residual weights are never tabulated; biases are listed without
// t-statistics, matching their non-interpretable role.
// ---------------------------------------------------------------------------

struct ParamRow {
  std::string name;
  double value = 0.0;
  double t_stat = std::numeric_limits<double>::quiet_NaN();
  bool has_t = false;
};

struct TStatOptions {
  bool bhhh_full_matrix = false;  // include all blocks, not just beta
  double hessian_step = 1e-5;
};

namespace eval_detail {

inline std::string category_label(const Dataset& data, int k) {
  if (static_cast<int>(data.category_names.size()) >= k &&
      !data.category_names[static_cast<std::size_t>(k - 1)].empty())
    return data.category_names[static_cast<std::size_t>(k - 1)];
  return std::to_string(k);
}

/// Observed-information covariance for the ordered logit at its optimum.
inline Eigen::MatrixXd ordered_logit_covariance(const OrderedLogitFit& fit,
                                                const Eigen::MatrixXd& x,
                                                const std::vector<int>& y,
                                                double step) {
  const long nb = fit.beta.size();
  const long nd = fit.deltas.size();
  const long dim = nb + nd;
  OrderedLogitObjective obj(x, y, fit.n_categories());

  auto grad_at = [&](const Eigen::VectorXd& theta) {
    Eigen::VectorXd gb, gd;
    obj.value_and_gradient(theta.head(nb), theta.tail(nd), gb, gd);
    Eigen::VectorXd g(dim);
    g.head(nb) = gb;
    g.tail(nd) = gd;
    return g;
  };

  Eigen::VectorXd theta(dim);
  theta.head(nb) = fit.beta;
  theta.tail(nd) = fit.deltas;

  double min_gap = std::numeric_limits<double>::infinity();
  for (long j = 1; j < nd; ++j)
    min_gap = std::min(min_gap, fit.deltas[j] - fit.deltas[j - 1]);

  Eigen::MatrixXd hess(dim, dim);
  for (long j = 0; j < dim; ++j) {
    double h = step * (1.0 + std::abs(theta[j]));
    if (j >= nb && std::isfinite(min_gap)) h = std::min(h, 0.25 * min_gap);
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    hess.col(j) = (grad_at(tp) - grad_at(tm)) / (2.0 * h);
  }
  hess = 0.5 * (hess + hess.transpose()).eval();

  const Eigen::MatrixXd info = -hess;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
  if (!lu.isInvertible())
    return Eigen::MatrixXd::Constant(dim, dim,
                                     std::numeric_limits<double>::quiet_NaN());
  return lu.inverse();
}

/// BHHH covariance over the trainable beta block of a reslogit.
inline Eigen::MatrixXd bhhh_covariance(const ReslogitParams& params,
                                       const Eigen::MatrixXd& x,
                                       const std::vector<int>& y,
                                       bool full_matrix) {
  const long n_beta = static_cast<long>(params.trainable_mask.sum());
  const long dim = full_matrix ? params.n_trainable() : n_beta;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(dim, dim);
  std::vector<int> yi(1);
  for (long i = 0; i < x.rows(); ++i) {
    yi[0] = y[static_cast<std::size_t>(i)];
    const ReslogitGradient g = gradient(x.row(i), yi, params);
    const Eigen::VectorXd flat = pack_gradient(g, params).head(dim);
    info.noalias() += flat * flat.transpose();
  }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
  if (!lu.isInvertible())
    return Eigen::MatrixXd::Constant(dim, dim,
                                     std::numeric_limits<double>::quiet_NaN());
  return lu.inverse();
}

inline ParamRow make_row(std::string name, double value, double variance) {
  ParamRow row;
  row.name = std::move(name);
  row.value = value;
  if (std::isfinite(variance) && variance > 0.0) {
    row.t_stat = value / std::sqrt(variance);
    row.has_t = true;
  }
  return row;
}

}  // namespace eval_detail

/// Per-parameter estimates and t-statistics evaluated on `data` (normally
/// the training set). Excluded coefficients produce no row.
inline std::vector<ParamRow> t_stats(const ModelBundle& bundle,
                                     const Dataset& data,
                                     const TStatOptions& opts = {}) {
  Eigen::MatrixXd x = raw_design_matrix(bundle, data);
  for (long i = 0; i < x.rows(); ++i)
    x.row(i) = bundle.standardize_row(x.row(i)).transpose();

  std::vector<ParamRow> rows;
  if (bundle.is_ordered_logit()) {
    const auto& fit = bundle.ordered();
    const Eigen::MatrixXd cov = eval_detail::ordered_logit_covariance(
        fit, x, data.labels, opts.hessian_step);
    const long nb = fit.beta.size();
    for (long j = 0; j < nb; ++j)
      rows.push_back(eval_detail::make_row(bundle.design.feature_columns
                                               [static_cast<std::size_t>(j)],
                                           fit.beta[j], cov(j, j)));
    for (long k = 0; k < fit.deltas.size(); ++k)
      rows.push_back(eval_detail::make_row(
          "threshold" + std::to_string(k + 1), fit.deltas[k],
          cov(nb + k, nb + k)));
    return rows;
  }

  const auto& params = bundle.reslogit().params;
  const Eigen::MatrixXd cov = eval_detail::bhhh_covariance(
      params, x, data.labels, opts.bhhh_full_matrix);
  long idx = 0;
  for (long r = 0; r < params.beta.rows(); ++r) {
    for (long c = 0; c < params.beta.cols(); ++c) {
      if (params.trainable_mask(r, c) == 0.0) continue;
      std::string name = bundle.design.feature_columns[static_cast<std::size_t>(c)];
      if (params.mode == CoefficientMode::kAlternativeSpecific)
        name += "[" + eval_detail::category_label(data, static_cast<int>(r) + 1) +
                "]";
      rows.push_back(
          eval_detail::make_row(std::move(name), params.beta(r, c),
                                cov(idx, idx)));
      ++idx;
    }
  }
  for (long k = 0; k < params.coral_biases.size(); ++k) {
    ParamRow row;
    row.name = "bias" + std::to_string(k + 1);
    row.value = params.coral_biases[k];
    rows.push_back(row);  // no t-statistic by construction
  }
  return rows;
}

// ---------------------------------------------------------------------------
// FitReport: the journal-style estimation summary.
// ---------------------------------------------------------------------------

struct FitReport {
  std::string model_kind;
  std::vector<ParamRow> rows;
  double log_likelihood = 0.0;         // ordered logit: choice LL;
                                       // reslogit: binary-task LL (-loss)
  double choice_log_likelihood = 0.0;  // sum of ln P(y = observed), both kinds
  long n_params = 0;
  double aic = 0.0;
  double validation_accuracy = 0.0;
  long n_observations = 0;
  long n_validation = 0;
  std::string se_method;
  std::string caveat;
  long clamped = 0;
  long degenerate = 0;
};

/// Builds the full diagnostic report: t-stats and log-likelihood on the
/// training data, accuracy on the validation data.
inline FitReport make_fit_report(const ModelBundle& bundle,
                                 const Dataset& train, const Dataset& val,
                                 const TStatOptions& opts = {}) {
  FitReport report;
  report.model_kind = bundle.kind();
  report.rows = t_stats(bundle, train, opts);
  report.n_params = bundle.n_params();
  report.n_observations = train.n_rows();
  report.n_validation = val.n_rows();

  ClampStats stats;
  report.choice_log_likelihood = model_log_likelihood(bundle, train, &stats);
  if (bundle.is_ordered_logit()) {
    report.log_likelihood = report.choice_log_likelihood;
    report.se_method = "observed_hessian";
  } else {
    Eigen::MatrixXd x = raw_design_matrix(bundle, train);
    for (long i = 0; i < x.rows(); ++i)
      x.row(i) = bundle.standardize_row(x.row(i)).transpose();
    report.log_likelihood =
        -loss(x, train.labels, bundle.reslogit().params);
    report.se_method = "bhhh";
    report.caveat =
        "BHHH standard errors are sensitive to the training batch size; "
        "compare across configurations before drawing significance "
        "conclusions.";
  }
  report.aic = aic(report.log_likelihood, report.n_params);
  report.validation_accuracy = 1.0 - mpe(predict_all(bundle, val), val.labels);
  report.clamped = stats.clamped;
  report.degenerate = stats.degenerate;
  return report;
}

}  // namespace ochoice
