#pragma once

#include <Eigen/Dense>
#include <string>
#include <variant>
#include <vector>

#include "ochoice/common.hpp"
#include "ochoice/dataset.hpp"
#include "ochoice/ordered_logit.hpp"
#include "ochoice/reslogit.hpp"

namespace ochoice {

// ---------------------------------------------------------------------------
// ModelBundle: a fitted model plus everything needed to evaluate it on raw
// data — the design (column selection, coefficient regime) and the
// training-set scaling statistics. This is the unit the CLI serializes.
// ---------------------------------------------------------------------------

struct ModelBundle {
  int schema_version = 1;
  DesignSpec design;
  ScalingParams scaling;
  int n_categories = 0;
  std::variant<OrderedLogitFit, ReslogitFitResult> fit;

  bool is_ordered_logit() const {
    return std::holds_alternative<OrderedLogitFit>(fit);
  }
  std::string kind() const {
    return is_ordered_logit() ? "ordered_logit" : "ordinal_reslogit";
  }
  const OrderedLogitFit& ordered() const {
    return std::get<OrderedLogitFit>(fit);
  }
  const ReslogitFitResult& reslogit() const {
    return std::get<ReslogitFitResult>(fit);
  }

  long n_params() const {
    return is_ordered_logit() ? ordered().n_params
                              : reslogit().params.n_trainable();
  }

  /// Applies stored scaling to a raw row given in design-column order.
  Eigen::VectorXd standardize_row(const Eigen::VectorXd& raw) const {
    Eigen::VectorXd x = raw;
    for (std::size_t j = 0; j < design.feature_columns.size(); ++j)
      x[static_cast<long>(j)] =
          scaling.transform(design.feature_columns[j], raw[static_cast<long>(j)]);
    return x;
  }

  /// Choice probabilities for a standardized design-space row.
  Eigen::VectorXd probs_design(const Eigen::VectorXd& x,
                               ClampStats* stats = nullptr) const {
    if (is_ordered_logit()) {
      const auto& m = ordered();
      return choice_probs_eta(m.beta.dot(x), m.deltas);
    }
    const ForwardTrace trace = forward(reslogit().params, x);
    return choice_probs_from_exceedance(trace.exceedance, stats);
  }

  Eigen::VectorXd probs_raw(const Eigen::VectorXd& raw,
                            ClampStats* stats = nullptr) const {
    return probs_design(standardize_row(raw), stats);
  }

  /// Predicted rank: threshold votes for the reslogit, the modal category
  /// for the ordered logit (ties to the lower category).
  int predict_design(const Eigen::VectorXd& x) const {
    if (is_ordered_logit()) {
      const Eigen::VectorXd p = probs_design(x);
      int arg = 0;
      for (long k = 1; k < p.size(); ++k)
        if (p[k] > p[arg]) arg = static_cast<int>(k);
      return arg + 1;
    }
    const auto& params = reslogit().params;
    return predict_rank(forward(params, x).exceedance, params.alpha);
  }

  int predict_raw(const Eigen::VectorXd& raw) const {
    return predict_design(standardize_row(raw));
  }

  /// ln P(y = observed) for one standardized row. The ordered logit path is
  /// exact in log space; the reslogit path takes the log of the (possibly
  /// clamped) exceedance differences and flags zero-probability outcomes.
  double log_prob_design(const Eigen::VectorXd& x, int y,
                         ClampStats* stats = nullptr) const {
    if (is_ordered_logit()) {
      const auto& m = ordered();
      return ol_detail::log_prob(m.beta.dot(x), m.deltas, y);
    }
    const Eigen::VectorXd p = probs_design(x, stats);
    const double py = p[y - 1];
    if (py <= 0.0) {
      if (stats != nullptr) ++stats->degenerate;
      return -std::numeric_limits<double>::infinity();
    }
    return std::log(py);
  }
};

/// Raw rows of `data` restricted to the bundle's design columns.
inline Eigen::MatrixXd raw_design_matrix(const ModelBundle& bundle,
                                         const Dataset& data) {
  return design_matrix(data, bundle.design);
}

inline std::vector<int> predict_all(const ModelBundle& bundle,
                                    const Dataset& data) {
  const Eigen::MatrixXd x = raw_design_matrix(bundle, data);
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (long i = 0; i < x.rows(); ++i)
    out[static_cast<std::size_t>(i)] = bundle.predict_raw(x.row(i));
  return out;
}

}  // namespace ochoice
