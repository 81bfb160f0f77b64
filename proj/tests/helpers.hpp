#pragma once

// Shared fixtures and independent oracles for the test suite. Oracles here
// (Newton logistic regression, finite differences) deliberately avoid the
// library's own code paths.

#include <Eigen/Dense>
#include <vector>

#include "ochoice/dataset.hpp"
#include "ochoice/reslogit.hpp"

namespace test_helpers {

// Binary logistic regression P(y = 1) = sigmoid(c + b.x) fit by
// Newton-Raphson, with the classical inverse-Hessian covariance.
struct LogisticOracle {
  Eigen::VectorXd coef;  // [intercept, b...]
  Eigen::MatrixXd covariance;
};

inline LogisticOracle newton_logistic(const Eigen::MatrixXd& x,
                                      const std::vector<int>& y01) {
  const long n = x.rows();
  const long f = x.cols() + 1;
  Eigen::MatrixXd design(n, f);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(f);
  auto logistic = [](double t) { return 1.0 / (1.0 + std::exp(-t)); };
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::VectorXd eta = design * coef;
    Eigen::VectorXd w(n), resid(n);
    for (long i = 0; i < n; ++i) {
      const double mu = logistic(eta[i]);
      w[i] = mu * (1.0 - mu);
      resid[i] = static_cast<double>(y01[static_cast<std::size_t>(i)]) - mu;
    }
    const Eigen::VectorXd grad = design.transpose() * resid;
    const Eigen::VectorXd step =
        (design.transpose() * w.asDiagonal() * design).ldlt().solve(grad);
    coef += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-12) break;
  }
  LogisticOracle out;
  out.coef = coef;
  const Eigen::VectorXd eta = design * coef;
  Eigen::VectorXd w(n);
  for (long i = 0; i < n; ++i) {
    const double mu = logistic(eta[i]);
    w[i] = mu * (1.0 - mu);
  }
  out.covariance =
      (design.transpose() * w.asDiagonal() * design)
          .ldlt()
          .solve(Eigen::MatrixXd::Identity(f, f));
  return out;
}

inline ochoice::DesignSpec design_for(const ochoice::Dataset& ds) {
  ochoice::DesignSpec spec;
  spec.feature_columns = ds.feature_names;
  spec.label_column = ds.label_name;
  return spec;
}

inline ochoice::ReslogitParams random_reslogit(
    int k, int f, int m, ochoice::CoefficientMode mode, ochoice::Rng& rng,
    double scale = 0.5) {
  ochoice::ReslogitParams p;
  p.mode = mode;
  const int rows = mode == ochoice::CoefficientMode::kGeneric ? 1 : k;
  p.beta.resize(rows, f);
  for (long r = 0; r < p.beta.rows(); ++r)
    for (long c = 0; c < p.beta.cols(); ++c)
      p.beta(r, c) = rng.uniform(-scale, scale);
  p.trainable_mask = Eigen::MatrixXd::Ones(rows, f);
  for (int layer = 0; layer < m; ++layer) {
    Eigen::MatrixXd w(k, k);
    for (long r = 0; r < k; ++r)
      for (long c = 0; c < k; ++c) w(r, c) = rng.uniform(-scale, scale);
    p.residual_weights.push_back(std::move(w));
  }
  p.coral_weights.resize(k);
  for (int i = 0; i < k; ++i) p.coral_weights[i] = rng.uniform(-scale, scale);
  p.coral_biases.resize(k - 1);
  for (int i = 0; i < k - 1; ++i)
    p.coral_biases[i] = rng.uniform(-scale, scale);
  p.task_weights = Eigen::VectorXd::Ones(k - 1);
  return p;
}

}  // namespace test_helpers
