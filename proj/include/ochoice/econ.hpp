#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "ochoice/common.hpp"
#include "ochoice/dataset.hpp"
#include "ochoice/model.hpp"

namespace ochoice {

// ---------------------------------------------------------------------------
// Post-estimation economic analysis, uniform over both model kinds. All
// counterfactual edits are made on raw variable values and then passed
// through the bundle's stored scaling, so analysis sees exactly the
// training-time transform.
// ---------------------------------------------------------------------------

enum class ShareMode { kHard, kSoft };

inline std::string to_string(ShareMode m) {
  return m == ShareMode::kHard ? "hard" : "soft";
}

/// Hard mode: fraction of observations predicted into each category (the
/// convention behind exactly-zero shares). Soft mode: mean predicted
/// probability per category.
inline Eigen::VectorXd market_share(const ModelBundle& bundle,
                                    const Dataset& data, ShareMode mode,
                                    ClampStats* stats = nullptr) {
  const Eigen::MatrixXd x = raw_design_matrix(bundle, data);
  const int k = bundle.n_categories;
  Eigen::VectorXd shares = Eigen::VectorXd::Zero(k);
  if (mode == ShareMode::kHard) {
    for (long i = 0; i < x.rows(); ++i)
      shares[bundle.predict_raw(x.row(i)) - 1] += 1.0;
  } else {
    for (long i = 0; i < x.rows(); ++i)
      shares += bundle.probs_raw(x.row(i), stats);
  }
  return shares / static_cast<double>(x.rows());
}

struct CurveCrossing {
  int category_a = 0;  // 1-based
  int category_b = 0;
  double at_value = 0.0;
};

struct SubstitutionCurve {
  std::string variable;
  std::vector<double> grid;
  Eigen::MatrixXd shares;  // grid points x K, rows sum to 1
  std::vector<CurveCrossing> crossings;
};

namespace econ_detail {

inline int design_column(const ModelBundle& bundle, const std::string& var) {
  for (std::size_t j = 0; j < bundle.design.feature_columns.size(); ++j)
    if (bundle.design.feature_columns[j] == var) return static_cast<int>(j);
  throw ValidationError("variable not in model design: " + var);
}

inline bool is_binary_column(const Eigen::MatrixXd& x, int col) {
  for (long i = 0; i < x.rows(); ++i) {
    const double v = x(i, col);
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

}  // namespace econ_detail

/// Mean choice probabilities as one variable sweeps a grid, all other
/// variables held at their observed values. Reports where category curves
/// cross (linear interpolation between adjacent grid points).
inline SubstitutionCurve substitution_curve(const ModelBundle& bundle,
                                            const Dataset& data,
                                            const std::string& variable,
                                            const std::vector<double>& grid,
                                            int threads = 1,
                                            ClampStats* stats = nullptr) {
  if (grid.empty()) throw ValidationError("substitution grid is empty");
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (!(grid[g - 1] < grid[g]))
      throw ValidationError("substitution grid must be sorted increasing");
  const int col = econ_detail::design_column(bundle, variable);
  const Eigen::MatrixXd x = raw_design_matrix(bundle, data);
  const long n = x.rows();
  const int k = bundle.n_categories;

  SubstitutionCurve curve;
  curve.variable = variable;
  curve.grid = grid;
  curve.shares.resize(static_cast<long>(grid.size()), k);

  std::vector<ClampStats> row_stats(static_cast<std::size_t>(n));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    Eigen::MatrixXd probs(n, k);
    parallel_for(n, threads, [&](long i) {
      Eigen::VectorXd row = x.row(i);
      row[col] = grid[g];
      probs.row(i) =
          bundle.probs_raw(row, &row_stats[static_cast<std::size_t>(i)])
              .transpose();
    });
    curve.shares.row(static_cast<long>(g)) = probs.colwise().mean();
  }
  if (stats != nullptr)
    for (const auto& s : row_stats) stats->merge(s);

  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      for (std::size_t g = 1; g < grid.size(); ++g) {
        const double d0 = curve.shares(static_cast<long>(g - 1), a) -
                          curve.shares(static_cast<long>(g - 1), b);
        const double d1 = curve.shares(static_cast<long>(g), a) -
                          curve.shares(static_cast<long>(g), b);
        if (d0 == 0.0 || d0 * d1 >= 0.0) continue;
        const double frac = d0 / (d0 - d1);
        curve.crossings.push_back(
            {a + 1, b + 1, grid[g - 1] + frac * (grid[g] - grid[g - 1])});
      }
    }
  }
  return curve;
}

struct ElasticityResult {
  std::string variable;
  Eigen::VectorXd aggregate;  // per category, probability-weighted mean
  long excluded = 0;          // observations skipped for near-zero P
};

/// Aggregate elasticities via central finite differences on the raw
/// variable: E = (dP/dx)(x/P), probability-weighted across observations.
inline ElasticityResult elasticity(const ModelBundle& bundle,
                                   const Dataset& data,
                                   const std::string& variable,
                                   int threads = 1) {
  const int col = econ_detail::design_column(bundle, variable);
  const Eigen::MatrixXd x = raw_design_matrix(bundle, data);
  if (econ_detail::is_binary_column(x, col))
    throw ValidationError("variable '" + variable +
                          "' is binary; use binary_effect");
  const long n = x.rows();
  const int k = bundle.n_categories;

  Eigen::MatrixXd weighted(n, k);  // P_n^j * E_n^j, zero when excluded
  Eigen::MatrixXd weights(n, k);   // P_n^j, zero when excluded
  std::vector<long> excluded(static_cast<std::size_t>(n), 0);
  parallel_for(n, threads, [&](long i) {
    const Eigen::VectorXd row = x.row(i);
    const double xi = row[col];
    const double h = xi != 0.0 ? 1e-4 * std::abs(xi) : 1e-6;
    Eigen::VectorXd up = row, down = row;
    up[col] = xi + h;
    down[col] = xi - h;
    const Eigen::VectorXd p0 = bundle.probs_raw(row);
    const Eigen::VectorXd dp =
        (bundle.probs_raw(up) - bundle.probs_raw(down)) / (2.0 * h);
    for (int j = 0; j < k; ++j) {
      if (p0[j] <= 1e-12) {
        ++excluded[static_cast<std::size_t>(i)];
        weighted(i, j) = 0.0;
        weights(i, j) = 0.0;
        continue;
      }
      const double e = dp[j] * xi / p0[j];
      weighted(i, j) = p0[j] * e;
      weights(i, j) = p0[j];
    }
  });

  ElasticityResult out;
  out.variable = variable;
  out.aggregate.resize(k);
  for (int j = 0; j < k; ++j) {
    const double w = weights.col(j).sum();
    out.aggregate[j] = w > 0.0 ? weighted.col(j).sum() / w : 0.0;
  }
  for (long e : excluded) out.excluded += e;
  return out;
}

/// Analytic dP/dx path (reverse mode through the model), used to cross-check
/// the finite-difference default. Valid where no clamping occurs.
inline Eigen::MatrixXd choice_prob_jacobian_raw(const ModelBundle& bundle,
                                                const Eigen::VectorXd& raw) {
  const Eigen::VectorXd x = bundle.standardize_row(raw);
  const long f = x.size();
  const int k = bundle.n_categories;
  Eigen::VectorXd dz_dx(f);
  Eigen::VectorXd exceed_deriv(k - 1);  // sigma'(z + b) per classifier

  if (bundle.is_ordered_logit()) {
    const auto& m = bundle.ordered();
    const double eta = m.beta.dot(x);
    dz_dx = m.beta;
    for (int j = 0; j < k - 1; ++j) {
      const double s = sigmoid(eta - m.deltas[j]);
      exceed_deriv[j] = s * (1.0 - s);
    }
  } else {
    const auto& params = bundle.reslogit().params;
    const ForwardTrace trace = forward(params, x);
    Eigen::VectorXd v = params.coral_weights;
    for (int m = params.depth() - 1; m >= 0; --m) {
      const Eigen::MatrixXd& w =
          params.residual_weights[static_cast<std::size_t>(m)];
      const Eigen::VectorXd a =
          w * trace.v_layers[static_cast<std::size_t>(m)];
      Eigen::VectorXd scaled(v.size());
      for (long i = 0; i < v.size(); ++i) scaled[i] = sigmoid(a[i]) * v[i];
      v -= w.transpose() * scaled;
    }
    if (params.mode == CoefficientMode::kGeneric) {
      dz_dx = v.sum() * params.beta.row(0).transpose();
    } else {
      dz_dx = params.beta.transpose() * v;
    }
    for (int j = 0; j < k - 1; ++j) {
      const double s = trace.exceedance[j];
      exceed_deriv[j] = s * (1.0 - s);
    }
  }

  // Chain through scaling: d x_scaled / d x_raw = 1/sd.
  for (std::size_t j = 0; j < bundle.design.feature_columns.size(); ++j) {
    const ScalingParams::Column* c =
        bundle.scaling.find(bundle.design.feature_columns[j]);
    if (c != nullptr) dz_dx[static_cast<long>(j)] /= c->stddev;
  }

  Eigen::MatrixXd jac(k, f);
  for (int j = 0; j < k; ++j) {
    const double upper = j == 0 ? 0.0 : exceed_deriv[j - 1];
    const double lower = j == k - 1 ? 0.0 : exceed_deriv[j];
    jac.row(j) = (upper - lower) * dz_dx.transpose();
  }
  return jac;
}

struct BinaryEffect {
  std::string variable;
  Eigen::VectorXd mean_change;        // over all observations
  Eigen::VectorXd mean_change_from0;  // rows starting at 0, flipped to 1
  Eigen::VectorXd mean_change_from1;  // rows starting at 1, flipped to 0
  long n_from0 = 0;
  long n_from1 = 0;
  double expected_value_delta = 0.0;
  Eigen::VectorXd representatives;
};

inline double expected_value(const Eigen::VectorXd& probs,
                             const Eigen::VectorXd& representatives) {
  if (probs.size() != representatives.size())
    throw ValidationError("representative count must match category count");
  for (long j = 1; j < representatives.size(); ++j)
    if (!(representatives[j - 1] < representatives[j]))
      throw ValidationError("representatives must be strictly increasing");
  return probs.dot(representatives);
}

/// Category representatives from discretization cut points: interval
/// midpoints, with the open-ended top category extrapolated half a width
/// past the last threshold. Any report built on these flags the
/// extrapolation, since the data never pin the top representative.
inline Eigen::VectorXd representatives_from_thresholds(
    double lower_bound, const std::vector<double>& thresholds) {
  const int k = static_cast<int>(thresholds.size()) + 1;
  if (k < 2)
    throw ValidationError("representatives require at least one threshold");
  Eigen::VectorXd c(k);
  c[0] = 0.5 * (lower_bound + thresholds[0]);
  for (int j = 1; j < k - 1; ++j)
    c[j] = 0.5 * (thresholds[static_cast<std::size_t>(j - 1)] +
                  thresholds[static_cast<std::size_t>(j)]);
  const double last = thresholds[static_cast<std::size_t>(k - 2)];
  const double prev =
      k >= 3 ? thresholds[static_cast<std::size_t>(k - 3)] : lower_bound;
  c[k - 1] = last + 0.5 * (last - prev);
  return c;
}

/// Sener-Bhat style binary flip: complement the variable for every
/// observation, record per-category probability changes and the induced
/// change in the expected ordinal value.
inline BinaryEffect binary_effect(const ModelBundle& bundle,
                                  const Dataset& data,
                                  const std::string& variable,
                                  const Eigen::VectorXd& representatives,
                                  int threads = 1) {
  const int col = econ_detail::design_column(bundle, variable);
  const Eigen::MatrixXd x = raw_design_matrix(bundle, data);
  if (!econ_detail::is_binary_column(x, col))
    throw ValidationError("variable '" + variable + "' is not 0/1 valued");
  const long n = x.rows();
  const int k = bundle.n_categories;
  if (representatives.size() != k)
    throw ValidationError("representative count must match category count");
  for (int j = 1; j < k; ++j)
    if (!(representatives[j - 1] < representatives[j]))
      throw ValidationError("representatives must be strictly increasing");

  Eigen::MatrixXd change(n, k);
  Eigen::VectorXd ev_delta(n);
  parallel_for(n, threads, [&](long i) {
    Eigen::VectorXd row = x.row(i);
    const Eigen::VectorXd before = bundle.probs_raw(row);
    row[col] = row[col] == 0.0 ? 1.0 : 0.0;
    const Eigen::VectorXd after = bundle.probs_raw(row);
    change.row(i) = (after - before).transpose();
    ev_delta[i] = representatives.dot(after - before);
  });

  BinaryEffect out;
  out.variable = variable;
  out.representatives = representatives;
  out.mean_change = change.colwise().mean();
  out.mean_change_from0 = Eigen::VectorXd::Zero(k);
  out.mean_change_from1 = Eigen::VectorXd::Zero(k);
  for (long i = 0; i < n; ++i) {
    if (x(i, col) == 0.0) {
      out.mean_change_from0 += change.row(i).transpose();
      ++out.n_from0;
    } else {
      out.mean_change_from1 += change.row(i).transpose();
      ++out.n_from1;
    }
  }
  if (out.n_from0 > 0)
    out.mean_change_from0 /= static_cast<double>(out.n_from0);
  if (out.n_from1 > 0)
    out.mean_change_from1 /= static_cast<double>(out.n_from1);
  out.expected_value_delta = ev_delta.mean();
  return out;
}

/// Aggregated analysis bundle assembled by the analyze pipeline.
struct EconReport {
  std::string share_mode;
  Eigen::VectorXd market_shares;
  std::vector<SubstitutionCurve> substitution_curves;
  std::vector<ElasticityResult> elasticities;
  std::vector<BinaryEffect> binary_effects;
  Eigen::VectorXd representatives;
  std::string representatives_source;  // "user" | "category_indices"
  long clamped = 0;
  long degenerate = 0;
};

}  // namespace ochoice
