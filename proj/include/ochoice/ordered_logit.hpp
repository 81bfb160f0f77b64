#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "ochoice/common.hpp"
#include "ochoice/dataset.hpp"

namespace ochoice {

// ---------------------------------------------------------------------------
// Proportional-odds (ordered logit) baseline. Exceedance orientation:
// P(U* > delta_k) = sigmoid(beta.x - delta_k), so choice probabilities are
// differences of exceedances taken high-minus-low, which keeps every entry
// nonnegative for increasing thresholds. No intercept in beta.x; the level
// is identified through the thresholds.
// ---------------------------------------------------------------------------

struct OrderedLogitFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd deltas;  // K-1, strictly increasing
  double log_likelihood = 0.0;
  int n_params = 0;  // |beta| + (K-1)
  bool converged = false;
  int iterations = 0;
  bool divergence_warning = false;  // some |beta_j| exceeded the guard

  int n_categories() const { return static_cast<int>(deltas.size()) + 1; }
};

inline double exceedance_prob(double eta, double delta) {
  return sigmoid(eta - delta);
}

inline double exceedance_prob(const Eigen::VectorXd& beta,
                              const Eigen::VectorXd& x, double delta) {
  return exceedance_prob(beta.dot(x), delta);
}

namespace ol_detail {

inline void check_increasing(const Eigen::VectorXd& deltas) {
  for (long k = 1; k < deltas.size(); ++k)
    if (!(deltas[k - 1] < deltas[k]))
      throw ValidationError("thresholds must be strictly increasing");
}

/// ln P(y = k | eta) for 1-based category k; exact in log space, no
/// underflow for |eta| up to ~700.
inline double log_prob(double eta, const Eigen::VectorXd& deltas, int k) {
  const int n_cat = static_cast<int>(deltas.size()) + 1;
  if (k == 1) return log_sigmoid(deltas[0] - eta);
  if (k == n_cat) return log_sigmoid(eta - deltas[n_cat - 2]);
  const double a = eta - deltas[k - 2];
  const double b = eta - deltas[k - 1];
  return log_sigmoid(a) + std::log1p(-std::exp(b - a)) - softplus(b);
}

// Elementwise array helpers (stable; inf arithmetic degrades gracefully).
inline Eigen::ArrayXd softplus_arr(const Eigen::ArrayXd& x) {
  return x.max(0.0) + (-x.abs()).exp().log1p();
}
inline Eigen::ArrayXd sigmoid_arr(const Eigen::ArrayXd& x) {
  return ((-x).exp() + 1.0).inverse();
}

}  // namespace ol_detail

/// K-vector of choice probabilities at a given linear index.
inline Eigen::VectorXd choice_probs_eta(double eta,
                                        const Eigen::VectorXd& deltas) {
  ol_detail::check_increasing(deltas);
  const int n_cat = static_cast<int>(deltas.size()) + 1;
  Eigen::VectorXd p(n_cat);
  for (int k = 1; k <= n_cat; ++k)
    p[k - 1] = std::exp(ol_detail::log_prob(eta, deltas, k));
  return p;
}

inline Eigen::VectorXd choice_probs(const Eigen::VectorXd& beta,
                                    const Eigen::VectorXd& deltas,
                                    const Eigen::VectorXd& x) {
  return choice_probs_eta(beta.dot(x), deltas);
}

/// Total log-likelihood and its gradient with respect to (beta, deltas).
/// Rows are grouped by category so the transcendental work vectorizes.
class OrderedLogitObjective {
 public:
  OrderedLogitObjective(const Eigen::MatrixXd& x, const std::vector<int>& y,
                        int n_categories)
      : n_features_(x.cols()), n_rows_(x.rows()),
        n_categories_(n_categories) {
    std::vector<std::vector<long>> group_rows(
        static_cast<std::size_t>(n_categories));
    for (std::size_t i = 0; i < y.size(); ++i)
      group_rows[static_cast<std::size_t>(y[i] - 1)].push_back(
          static_cast<long>(i));
    group_x_.reserve(group_rows.size());
    for (const auto& rows : group_rows) {
      Eigen::MatrixXd xg(static_cast<long>(rows.size()), x.cols());
      for (std::size_t r = 0; r < rows.size(); ++r)
        xg.row(static_cast<long>(r)) = x.row(rows[r]);
      group_x_.push_back(std::move(xg));
    }
  }

  int n_categories() const { return n_categories_; }
  long n_features() const { return n_features_; }
  long n_rows() const { return n_rows_; }

  double value(const Eigen::VectorXd& beta,
               const Eigen::VectorXd& deltas) const {
    double ll = 0.0;
    for (int k = 1; k <= n_categories_; ++k) {
      const Eigen::MatrixXd& xg = group_x_[static_cast<std::size_t>(k - 1)];
      if (xg.rows() == 0) continue;
      const Eigen::ArrayXd eta = (xg * beta).array();
      ll += group_loglik(eta, deltas, k).sum();
    }
    return ll;
  }

  double value_and_gradient(const Eigen::VectorXd& beta,
                            const Eigen::VectorXd& deltas,
                            Eigen::VectorXd& grad_beta,
                            Eigen::VectorXd& grad_delta) const {
    using ol_detail::sigmoid_arr;
    const int n_cat = n_categories_;
    grad_beta = Eigen::VectorXd::Zero(n_features_);
    grad_delta = Eigen::VectorXd::Zero(n_cat - 1);
    double ll = 0.0;
    for (int k = 1; k <= n_cat; ++k) {
      const Eigen::MatrixXd& xg = group_x_[static_cast<std::size_t>(k - 1)];
      if (xg.rows() == 0) continue;
      const Eigen::ArrayXd eta = (xg * beta).array();
      Eigen::ArrayXd deta;
      if (k == 1) {
        const Eigen::ArrayXd s = sigmoid_arr(eta - deltas[0]);
        ll += group_loglik(eta, deltas, k).sum();
        deta = -s;
        grad_delta[0] += s.sum();
      } else if (k == n_cat) {
        const Eigen::ArrayXd s = sigmoid_arr(deltas[n_cat - 2] - eta);
        ll += group_loglik(eta, deltas, k).sum();
        deta = s;
        grad_delta[n_cat - 2] -= s.sum();
      } else {
        const Eigen::ArrayXd lnp = group_loglik(eta, deltas, k);
        ll += lnp.sum();
        const Eigen::ArrayXd a = eta - deltas[k - 2];
        const Eigen::ArrayXd b = eta - deltas[k - 1];
        // sigma'(t)/P computed fully in log space: exp(ln s'(t) - ln P).
        const Eigen::ArrayXd ra =
            (-ol_detail::softplus_arr(-a) - ol_detail::softplus_arr(a) - lnp)
                .exp();
        const Eigen::ArrayXd rb =
            (-ol_detail::softplus_arr(-b) - ol_detail::softplus_arr(b) - lnp)
                .exp();
        deta = ra - rb;
        grad_delta[k - 2] -= ra.sum();
        grad_delta[k - 1] += rb.sum();
      }
      grad_beta.noalias() += xg.transpose() * deta.matrix();
    }
    return ll;
  }

 private:
  Eigen::ArrayXd group_loglik(const Eigen::ArrayXd& eta,
                              const Eigen::VectorXd& deltas, int k) const {
    using ol_detail::softplus_arr;
    const int n_cat = n_categories_;
    if (k == 1) return -softplus_arr(eta - deltas[0]);
    if (k == n_cat) return -softplus_arr(deltas[n_cat - 2] - eta);
    const double gap = deltas[k - 1] - deltas[k - 2];
    const Eigen::ArrayXd a = eta - deltas[k - 2];
    const Eigen::ArrayXd b = eta - deltas[k - 1];
    return -softplus_arr(-a) + std::log1p(-std::exp(-gap)) - softplus_arr(b);
  }

  long n_features_;
  long n_rows_;
  int n_categories_;
  std::vector<Eigen::MatrixXd> group_x_;
};

struct OrderedLogitOptions {
  int max_iterations = 2000;
  double gradient_tolerance = 1e-6;  // max-norm over (beta, delta) gradient
  double divergence_beta = 50.0;
};

namespace ol_detail {

inline Eigen::VectorXd deltas_from_raw(const Eigen::VectorXd& raw) {
  Eigen::VectorXd d(raw.size());
  d[0] = raw[0];
  for (long j = 1; j < raw.size(); ++j) d[j] = d[j - 1] + softplus(raw[j]);
  return d;
}

inline Eigen::VectorXd raw_from_deltas(const Eigen::VectorXd& deltas) {
  Eigen::VectorXd raw(deltas.size());
  raw[0] = deltas[0];
  for (long j = 1; j < deltas.size(); ++j)
    raw[j] = inv_softplus(deltas[j] - deltas[j - 1]);
  return raw;
}

/// Chain rule through the cumulative-softplus threshold map.
inline Eigen::VectorXd raw_gradient(const Eigen::VectorXd& raw,
                                    const Eigen::VectorXd& grad_delta) {
  Eigen::VectorXd g(raw.size());
  double suffix = 0.0;
  for (long j = raw.size() - 1; j >= 0; --j) {
    suffix += grad_delta[j];
    g[j] = j == 0 ? suffix : sigmoid(raw[j]) * suffix;
  }
  return g;
}

}  // namespace ol_detail

/// Maximum-likelihood fit by full-batch gradient ascent with a
/// Barzilai-Borwein initial step and backtracking line search. Thresholds
/// are optimized through the cumulative-softplus reparameterization, so
/// monotonicity holds at every iterate. Deterministic: fixed initialization,
/// no tie-breaking randomness.
inline OrderedLogitFit fit_ordered_logit(const Dataset& train,
                                         const DesignSpec& spec,
                                         const OrderedLogitOptions& opts = {}) {
  train.validate_for_fit();
  spec.validate(train);
  if (spec.coefficient_mode != CoefficientMode::kGeneric)
    throw ValidationError(
        "ordered logit supports generic coefficients only (alternative-"
        "specific regimes belong to the reslogit model)");
  if (train.n_categories < 2)
    throw ValidationError("ordered logit requires at least 2 categories");

  const Eigen::MatrixXd x = design_matrix(train, spec);
  const int n_cat = train.n_categories;
  const long n = x.rows();
  const long n_feat = x.cols();
  OrderedLogitObjective obj(x, train.labels, n_cat);

  // Start at the intercept-only optimum: beta = 0, thresholds at the logit
  // of empirical cumulative shares.
  Eigen::VectorXd deltas(n_cat - 1);
  {
    std::vector<long> counts(static_cast<std::size_t>(n_cat), 0);
    for (int y : train.labels) ++counts[static_cast<std::size_t>(y - 1)];
    double cum = 0.0;
    for (int k = 0; k < n_cat - 1; ++k) {
      cum += static_cast<double>(counts[static_cast<std::size_t>(k)]);
      deltas[k] = logit(cum / static_cast<double>(n));
    }
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(n_feat);
  Eigen::VectorXd raw = ol_detail::raw_from_deltas(deltas);

  const long dim = n_feat + (n_cat - 1);
  auto pack = [&](const Eigen::VectorXd& b, const Eigen::VectorXd& r) {
    Eigen::VectorXd th(dim);
    th.head(n_feat) = b;
    th.tail(n_cat - 1) = r;
    return th;
  };
  auto eval_ll = [&](const Eigen::VectorXd& th) {
    return obj.value(th.head(n_feat),
                     ol_detail::deltas_from_raw(th.tail(n_cat - 1)));
  };

  Eigen::VectorXd theta = pack(beta, raw);
  Eigen::VectorXd grad_beta, grad_delta;
  double ll = obj.value_and_gradient(beta, deltas, grad_beta, grad_delta);
  Eigen::VectorXd grad =
      pack(grad_beta, ol_detail::raw_gradient(raw, grad_delta));

  OrderedLogitFit fit;
  double step = 1.0;
  Eigen::VectorXd theta_prev, grad_prev;
  bool have_prev = false;
  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    const double gmax =
        std::max(grad_beta.lpNorm<Eigen::Infinity>(),
                 grad_delta.lpNorm<Eigen::Infinity>());
    if (gmax < opts.gradient_tolerance) {
      fit.converged = true;
      break;
    }

    if (have_prev) {
      const Eigen::VectorXd s = theta - theta_prev;
      const Eigen::VectorXd yv = grad_prev - grad;  // ascent curvature pair
      const double sy = s.dot(yv);
      if (sy > 0.0) step = s.squaredNorm() / sy;
    }
    step = std::clamp(step, 1e-12, 1e12);

    const double g2 = grad.squaredNorm();
    // Near the optimum the Armijo decrease falls below the float resolution
    // of the total log-likelihood; the slack keeps such steps acceptable so
    // the gradient can keep shrinking to the tolerance.
    const double slack = 1e-14 * (std::abs(ll) + 1.0);
    double t_step = step;
    double ll_new = -std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int halvings = 0; halvings < 80; ++halvings) {
      ll_new = eval_ll(theta + t_step * grad);
      if (std::isfinite(ll_new) && ll_new >= ll + 1e-4 * t_step * g2 - slack) {
        accepted = true;
        break;
      }
      t_step *= 0.5;
    }
    if (!accepted) break;  // stalled within float resolution of the optimum

    theta_prev = theta;
    grad_prev = grad;
    have_prev = true;
    theta += t_step * grad;
    step = t_step;

    beta = theta.head(n_feat);
    raw = theta.tail(n_cat - 1);
    deltas = ol_detail::deltas_from_raw(raw);
    ll = obj.value_and_gradient(beta, deltas, grad_beta, grad_delta);
    if (!std::isfinite(ll))
      throw NumericError("ordered logit: non-finite log-likelihood at "
                         "iteration " +
                         std::to_string(iter + 1));
    grad = pack(grad_beta, ol_detail::raw_gradient(raw, grad_delta));
  }

  fit.beta = beta;
  fit.deltas = deltas;
  fit.log_likelihood = ll;
  fit.n_params = static_cast<int>(n_feat) + (n_cat - 1);
  fit.iterations = iter;
  fit.divergence_warning =
      beta.cwiseAbs().maxCoeff() > opts.divergence_beta;
  return fit;
}

}  // namespace ochoice
