#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ochoice/common.hpp"
#include "ochoice/dataset.hpp"

namespace ochoice {

// ---------------------------------------------------------------------------
// Ordinal-ResLogit: deterministic linear utilities, M residual correction
// layers V <- V - softplus(W V), and a CORAL head of K-1 binary classifiers
// sharing one weight vector w with per-classifier biases b_k. Because every
// classifier sees the same score z = w.V, the ordering of the exceedance
// probabilities equals the ordering of the biases for every observation.
// ---------------------------------------------------------------------------

struct ReslogitParams {
  CoefficientMode mode = CoefficientMode::kGeneric;
  Eigen::MatrixXd beta;            // generic: 1 x F; alternative-specific: K x F
  Eigen::MatrixXd trainable_mask;  // same shape as beta; 0 = pinned at zero
  std::vector<Eigen::MatrixXd> residual_weights;  // M matrices, each K x K
  Eigen::VectorXd coral_weights;                  // K
  Eigen::VectorXd coral_biases;                   // K-1
  Eigen::VectorXd task_weights;                   // K-1, all positive
  double alpha = 0.5;

  int n_categories() const { return static_cast<int>(coral_weights.size()); }
  int n_features() const { return static_cast<int>(beta.cols()); }
  int depth() const { return static_cast<int>(residual_weights.size()); }

  /// Count of estimated scalars: unpinned beta entries + M*K^2 + K + (K-1).
  long n_trainable() const {
    const long k = n_categories();
    return static_cast<long>(trainable_mask.sum()) +
           static_cast<long>(depth()) * k * k + k + (k - 1);
  }

  void validate() const {
    const int k = n_categories();
    if (k < 2) throw ValidationError("reslogit requires at least 2 categories");
    if (!(alpha > 0.0 && alpha < 1.0))
      throw ValidationError("alpha must lie in (0,1)");
    if (coral_biases.size() != k - 1)
      throw ValidationError("bias count must be K-1");
    if (task_weights.size() != k - 1)
      throw ValidationError("task weight count must be K-1");
    for (long i = 0; i < task_weights.size(); ++i)
      if (!(task_weights[i] > 0.0))
        throw ValidationError("task weights must be positive");
    const long beta_rows = mode == CoefficientMode::kGeneric ? 1 : k;
    if (beta.rows() != beta_rows)
      throw ValidationError("beta block shape does not match mode");
    if (trainable_mask.rows() != beta.rows() ||
        trainable_mask.cols() != beta.cols())
      throw ValidationError("mask shape does not match beta");
    for (const auto& w : residual_weights)
      if (w.rows() != k || w.cols() != k)
        throw ValidationError("residual weight matrices must be K x K");
    auto finite = [](const Eigen::MatrixXd& m) {
      return all_finite(m.data(), static_cast<std::size_t>(m.size()));
    };
    if (!finite(beta) || !finite(coral_weights) || !finite(coral_biases))
      throw ValidationError("non-finite parameter value");
    for (const auto& w : residual_weights)
      if (!finite(w)) throw ValidationError("non-finite residual weight");
  }
};

struct ForwardTrace {
  std::vector<Eigen::VectorXd> v_layers;  // V^(0) .. V^(M)
  double z = 0.0;                         // w . V^(M)
  Eigen::VectorXd exceedance;             // K-1 values of P(y > r_k)
};

/// Counters for the exceedance -> probability conversion. Clamping is only
/// reachable with rank-inconsistent (non-monotone) classifier outputs.
struct ClampStats {
  long clamped = 0;
  long degenerate = 0;
  void merge(const ClampStats& o) {
    clamped += o.clamped;
    degenerate += o.degenerate;
  }
};

// ---------------------------------------------------------------------------
// Forward pieces.
// ---------------------------------------------------------------------------

/// V^(0): the deterministic utility vector. Generic mode replicates one
/// linear index across categories; alternative-specific mode evaluates one
/// index per category (pinned coefficients contribute zero).
inline Eigen::VectorXd deterministic_utilities(const ReslogitParams& params,
                                               const Eigen::VectorXd& x) {
  if (x.size() != params.beta.cols())
    throw ValidationError("feature dimension mismatch");
  const int k = params.n_categories();
  if (params.mode == CoefficientMode::kGeneric)
    return Eigen::VectorXd::Constant(k, params.beta.row(0).dot(x));
  return params.beta * x;
}

/// Applies the residual recursion V^(m) = V^(m-1) - softplus(W^m V^(m-1))
/// and returns every intermediate layer.
inline ForwardTrace forward_utilities(
    const Eigen::VectorXd& v0,
    const std::vector<Eigen::MatrixXd>& residual_weights) {
  ForwardTrace trace;
  trace.v_layers.reserve(residual_weights.size() + 1);
  trace.v_layers.push_back(v0);
  for (const auto& w : residual_weights) {
    const Eigen::VectorXd a = w * trace.v_layers.back();
    Eigen::VectorXd v = trace.v_layers.back();
    for (long i = 0; i < v.size(); ++i) v[i] -= softplus(a[i]);
    trace.v_layers.push_back(std::move(v));
  }
  return trace;
}

/// The K-1 binary classifiers: P(y > r_k) = sigmoid(w.VM + b_k).
inline Eigen::VectorXd coral_exceedance(const Eigen::VectorXd& vm,
                                        const Eigen::VectorXd& w,
                                        const Eigen::VectorXd& b) {
  const double z = w.dot(vm);
  Eigen::VectorXd p(b.size());
  for (long i = 0; i < b.size(); ++i) p[i] = sigmoid(z + b[i]);
  return p;
}

inline ForwardTrace forward(const ReslogitParams& params,
                            const Eigen::VectorXd& x) {
  ForwardTrace trace =
      forward_utilities(deterministic_utilities(params, x),
                        params.residual_weights);
  trace.z = params.coral_weights.dot(trace.v_layers.back());
  trace.exceedance = coral_exceedance(trace.v_layers.back(),
                                      params.coral_weights,
                                      params.coral_biases);
  return trace;
}

/// Adjacent differences of the exceedance chain, oriented high-minus-low so
/// a monotone chain yields a proper distribution directly. Non-monotone
/// inputs are clamped at zero and renormalized, with the event counted.
inline Eigen::VectorXd choice_probs_from_exceedance(
    const Eigen::VectorXd& exceedance, ClampStats* stats = nullptr) {
  const long k = exceedance.size() + 1;
  Eigen::VectorXd raw(k);
  raw[0] = 1.0 - exceedance[0];
  for (long j = 1; j < k - 1; ++j) raw[j] = exceedance[j - 1] - exceedance[j];
  raw[k - 1] = exceedance[k - 2];

  bool negative = false;
  for (long j = 0; j < k; ++j)
    if (raw[j] < 0.0) negative = true;
  if (!negative) return raw;

  for (long j = 0; j < k; ++j) raw[j] = std::max(raw[j], 0.0);
  const double total = raw.sum();
  if (total <= 0.0) {
    if (stats != nullptr) ++stats->degenerate;
    return Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  }
  if (stats != nullptr) ++stats->clamped;
  return raw / total;
}

/// Rank prediction: one vote per classifier whose exceedance strictly
/// exceeds alpha; the first category is the floor.
inline int predict_rank(const Eigen::VectorXd& exceedance, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ValidationError("alpha must lie in (0,1)");
  int rank = 1;
  for (long i = 0; i < exceedance.size(); ++i)
    if (exceedance[i] > alpha) ++rank;
  return rank;
}

// ---------------------------------------------------------------------------
// Batched forward/backward over a minibatch. Columns are observations.
// ---------------------------------------------------------------------------

struct BatchTrace {
  std::vector<Eigen::MatrixXd> v_layers;  // M+1 matrices, each K x B
  Eigen::RowVectorXd z;                   // 1 x B
};

inline BatchTrace forward_batch(const ReslogitParams& params,
                                const Eigen::MatrixXd& x_batch) {
  const int k = params.n_categories();
  const long b = x_batch.rows();
  BatchTrace trace;
  trace.v_layers.reserve(params.residual_weights.size() + 1);
  if (params.mode == CoefficientMode::kGeneric) {
    const Eigen::RowVectorXd eta =
        (x_batch * params.beta.row(0).transpose()).transpose();
    trace.v_layers.push_back(Eigen::MatrixXd::Ones(k, 1) * eta);
  } else {
    trace.v_layers.push_back(params.beta * x_batch.transpose());
  }
  for (const auto& w : params.residual_weights) {
    const Eigen::MatrixXd a = w * trace.v_layers.back();
    Eigen::MatrixXd v = trace.v_layers.back();
    for (long j = 0; j < b; ++j)
      for (int i = 0; i < k; ++i) v(i, j) -= softplus(a(i, j));
    trace.v_layers.push_back(std::move(v));
  }
  trace.z = params.coral_weights.transpose() * trace.v_layers.back();
  return trace;
}

inline Eigen::VectorXd exceedance_from_trace(const BatchTrace& trace,
                                             const ReslogitParams& params,
                                             long column) {
  const double z = trace.z[column];
  Eigen::VectorXd p(params.coral_biases.size());
  for (long i = 0; i < p.size(); ++i)
    p[i] = sigmoid(z + params.coral_biases[i]);
  return p;
}

/// Extended binary label: y_n^k = I[y_n > r_k], k = 1..K-1.
inline double binary_label(int y, int task) { return y > task ? 1.0 : 0.0; }

/// Weighted binary cross-entropy, totaled (not averaged) over all
/// observations and tasks. Accumulated with compensated summation so the
/// value is insensitive to batch ordering. Works entirely on logits.
inline double loss(const Eigen::MatrixXd& x_batch, const std::vector<int>& y,
                   const ReslogitParams& params) {
  if (x_batch.rows() == 0) throw ValidationError("empty batch");
  const BatchTrace trace = forward_batch(params, x_batch);
  const int n_tasks = params.n_categories() - 1;
  KahanSum total;
  for (long n = 0; n < x_batch.rows(); ++n) {
    double obs = 0.0;
    for (int k = 0; k < n_tasks; ++k) {
      const double logit_nk = trace.z[n] + params.coral_biases[k];
      const double target = binary_label(y[static_cast<std::size_t>(n)], k + 1);
      obs += params.task_weights[k] * (softplus(logit_nk) - target * logit_nk);
    }
    if (!std::isfinite(obs))
      throw NumericError("non-finite loss at observation " +
                         std::to_string(n));
    total.add(obs);
  }
  return total.value();
}

struct ReslogitGradient {
  Eigen::MatrixXd beta;
  std::vector<Eigen::MatrixXd> residual_weights;
  Eigen::VectorXd coral_weights;
  Eigen::VectorXd coral_biases;
  double loss = 0.0;
};

/// Exact reverse-mode gradient of loss() with respect to every trainable
/// block. Pinned beta entries receive zero gradient.
inline ReslogitGradient gradient(const Eigen::MatrixXd& x_batch,
                                 const std::vector<int>& y,
                                 const ReslogitParams& params) {
  const int k = params.n_categories();
  const int n_tasks = k - 1;
  const long b = x_batch.rows();
  const int depth = params.depth();
  const BatchTrace trace = forward_batch(params, x_batch);

  ReslogitGradient g;
  g.coral_biases = Eigen::VectorXd::Zero(n_tasks);

  // dL/dlogit = lambda_k (sigmoid(logit) - y^k); z collects all tasks.
  Eigen::RowVectorXd dz = Eigen::RowVectorXd::Zero(b);
  KahanSum total;
  for (long n = 0; n < b; ++n) {
    double obs = 0.0;
    for (int t = 0; t < n_tasks; ++t) {
      const double logit_nt = trace.z[n] + params.coral_biases[t];
      const double target = binary_label(y[static_cast<std::size_t>(n)], t + 1);
      const double lam = params.task_weights[t];
      obs += lam * (softplus(logit_nt) - target * logit_nt);
      const double dl = lam * (sigmoid(logit_nt) - target);
      g.coral_biases[t] += dl;
      dz[n] += dl;
    }
    total.add(obs);
  }
  g.loss = total.value();

  const Eigen::MatrixXd& vm = trace.v_layers.back();
  g.coral_weights = vm * dz.transpose();
  Eigen::MatrixXd dv = params.coral_weights * dz;  // K x B

  g.residual_weights.resize(static_cast<std::size_t>(depth));
  for (int m = depth - 1; m >= 0; --m) {
    const Eigen::MatrixXd& v_in = trace.v_layers[static_cast<std::size_t>(m)];
    const Eigen::MatrixXd a =
        params.residual_weights[static_cast<std::size_t>(m)] * v_in;
    Eigen::MatrixXd da(k, b);
    for (long j = 0; j < b; ++j)
      for (int i = 0; i < k; ++i) da(i, j) = -sigmoid(a(i, j)) * dv(i, j);
    g.residual_weights[static_cast<std::size_t>(m)].noalias() =
        da * v_in.transpose();
    dv.noalias() +=
        params.residual_weights[static_cast<std::size_t>(m)].transpose() * da;
  }

  if (params.mode == CoefficientMode::kGeneric) {
    const Eigen::RowVectorXd deta = dv.colwise().sum();
    g.beta = deta * x_batch;  // 1 x F
  } else {
    g.beta.noalias() = dv * x_batch;  // K x F
  }
  g.beta = g.beta.cwiseProduct(params.trainable_mask);
  return g;
}

// ---------------------------------------------------------------------------
// Flat packing of trainable scalars (beta without pinned entries, then each
// residual matrix row-major, then w, then b). Used by the finite-difference
// checks and the BHHH block extraction.
// ---------------------------------------------------------------------------

inline Eigen::VectorXd pack_parameters(const ReslogitParams& p) {
  Eigen::VectorXd out(p.n_trainable());
  long idx = 0;
  for (long r = 0; r < p.beta.rows(); ++r)
    for (long c = 0; c < p.beta.cols(); ++c)
      if (p.trainable_mask(r, c) != 0.0) out[idx++] = p.beta(r, c);
  for (const auto& w : p.residual_weights)
    for (long r = 0; r < w.rows(); ++r)
      for (long c = 0; c < w.cols(); ++c) out[idx++] = w(r, c);
  for (long i = 0; i < p.coral_weights.size(); ++i)
    out[idx++] = p.coral_weights[i];
  for (long i = 0; i < p.coral_biases.size(); ++i)
    out[idx++] = p.coral_biases[i];
  return out;
}

inline void unpack_parameters(const Eigen::VectorXd& flat, ReslogitParams& p) {
  long idx = 0;
  for (long r = 0; r < p.beta.rows(); ++r)
    for (long c = 0; c < p.beta.cols(); ++c)
      if (p.trainable_mask(r, c) != 0.0) p.beta(r, c) = flat[idx++];
  for (auto& w : p.residual_weights)
    for (long r = 0; r < w.rows(); ++r)
      for (long c = 0; c < w.cols(); ++c) w(r, c) = flat[idx++];
  for (long i = 0; i < p.coral_weights.size(); ++i)
    p.coral_weights[i] = flat[idx++];
  for (long i = 0; i < p.coral_biases.size(); ++i)
    p.coral_biases[i] = flat[idx++];
}

inline Eigen::VectorXd pack_gradient(const ReslogitGradient& g,
                                     const ReslogitParams& p) {
  Eigen::VectorXd out(p.n_trainable());
  long idx = 0;
  for (long r = 0; r < g.beta.rows(); ++r)
    for (long c = 0; c < g.beta.cols(); ++c)
      if (p.trainable_mask(r, c) != 0.0) out[idx++] = g.beta(r, c);
  for (const auto& w : g.residual_weights)
    for (long r = 0; r < w.rows(); ++r)
      for (long c = 0; c < w.cols(); ++c) out[idx++] = w(r, c);
  for (long i = 0; i < g.coral_weights.size(); ++i)
    out[idx++] = g.coral_weights[i];
  for (long i = 0; i < g.coral_biases.size(); ++i)
    out[idx++] = g.coral_biases[i];
  return out;
}

// ---------------------------------------------------------------------------
// Training: minibatch SGD with RMSprop scaling, seeded epoch shuffles,
// early stopping on validation MPE at alpha = 0.5. Fully sequential, so a
// fixed seed reproduces parameters bit for bit.
// ---------------------------------------------------------------------------

struct TrainConfig {
  int m_layers = 16;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double rmsprop_decay = 0.9;
  double rmsprop_epsilon = 1e-8;
  int max_epochs = 500;
  int early_stop_patience = 10;
  std::uint64_t seed = 1;
  std::vector<double> alpha_grid = {0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60};
  std::vector<double> task_weights;  // empty = all ones
  bool monotone_biases = false;      // reparameterize b_k as decreasing chain
  double init_beta_range = 0.1;

  void validate() const {
    if (m_layers < 0) throw ValidationError("layer count must be >= 0");
    if (batch_size < 1) throw ValidationError("batch size must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (!(rmsprop_decay > 0.0 && rmsprop_decay < 1.0))
      throw ValidationError("rmsprop decay must lie in (0,1)");
    if (!(rmsprop_epsilon > 0.0)) throw ValidationError("rmsprop epsilon must be positive");
    if (max_epochs < 1) throw ValidationError("max epochs must be positive");
    if (early_stop_patience < 1 || early_stop_patience >= max_epochs)
      throw ValidationError("patience must lie in [1, max_epochs)");
    if (alpha_grid.empty()) throw ValidationError("alpha grid is empty");
    for (double a : alpha_grid)
      if (!(a > 0.0 && a < 1.0))
        throw ValidationError("alpha grid values must lie in (0,1)");
  }
};

struct EpochRecord {
  int epoch = 0;          // 1-based
  double train_loss = 0.0;  // running sum of batch losses over the epoch
  double val_mpe = 0.0;
};

struct ReslogitFitResult {
  ReslogitParams params;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_mpe = 1.0;
  int epochs_run = 0;
  bool stopped_early = false;
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  // Rank-consistency violations of the fitted parameters over the training
  // data (clamped / unrecoverable probability vectors).
  long clamp_violations = 0;
  long clamp_degenerate = 0;
};

inline std::vector<int> predict_ranks(const ReslogitParams& params,
                                      const Eigen::MatrixXd& x, double alpha) {
  const BatchTrace trace = forward_batch(params, x);
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (long n = 0; n < x.rows(); ++n)
    out[static_cast<std::size_t>(n)] =
        predict_rank(exceedance_from_trace(trace, params, n), alpha);
  return out;
}

namespace reslogit_detail {

inline double mpe_of(const std::vector<int>& pred, const std::vector<int>& y) {
  long wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] != y[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

/// Decreasing-chain bias parameterization: b_1 = r_1,
/// b_k = b_{k-1} - softplus(r_k).
inline Eigen::VectorXd biases_from_raw(const Eigen::VectorXd& raw) {
  Eigen::VectorXd b(raw.size());
  b[0] = raw[0];
  for (long j = 1; j < raw.size(); ++j) b[j] = b[j - 1] - softplus(raw[j]);
  return b;
}

inline Eigen::VectorXd raw_from_biases(const Eigen::VectorXd& b) {
  Eigen::VectorXd raw(b.size());
  raw[0] = b[0];
  for (long j = 1; j < b.size(); ++j) {
    const double gap = b[j - 1] - b[j];
    if (!(gap > 0.0))
      throw ValidationError("monotone bias mode requires decreasing biases");
    raw[j] = inv_softplus(gap);
  }
  return raw;
}

inline Eigen::VectorXd raw_bias_gradient(const Eigen::VectorXd& raw,
                                         const Eigen::VectorXd& grad_b) {
  Eigen::VectorXd g(raw.size());
  double suffix = 0.0;
  for (long j = raw.size() - 1; j >= 0; --j) {
    suffix += grad_b[j];
    g[j] = j == 0 ? suffix : -sigmoid(raw[j]) * suffix;
  }
  return g;
}

struct RmsCache {
  Eigen::MatrixXd beta;
  std::vector<Eigen::MatrixXd> residual_weights;
  Eigen::VectorXd coral_weights;
  Eigen::VectorXd coral_biases;

  static RmsCache zeros_like(const ReslogitParams& p) {
    RmsCache c;
    c.beta = Eigen::MatrixXd::Zero(p.beta.rows(), p.beta.cols());
    c.residual_weights.reserve(p.residual_weights.size());
    for (const auto& w : p.residual_weights)
      c.residual_weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    c.coral_weights = Eigen::VectorXd::Zero(p.coral_weights.size());
    c.coral_biases = Eigen::VectorXd::Zero(p.coral_biases.size());
    return c;
  }
};

inline void rms_step(Eigen::Ref<Eigen::MatrixXd> param,
                     Eigen::Ref<Eigen::MatrixXd> cache,
                     const Eigen::MatrixXd& grad, double lr, double decay,
                     double eps) {
  cache = decay * cache + (1.0 - decay) * grad.cwiseProduct(grad);
  param.array() -= lr * grad.array() / (cache.array().sqrt() + eps);
}

}  // namespace reslogit_detail

/// Seeds and shapes a fresh parameter set: residual weights start at zero
/// (the exact linear model), beta uniform in +-init_beta_range, w = 1/K,
/// biases at the logit of empirical exceedance shares.
inline ReslogitParams init_reslogit_params(const Dataset& train,
                                           const DesignSpec& spec,
                                           const TrainConfig& config,
                                           Rng& rng) {
  const int k = train.n_categories;
  const int f = static_cast<int>(spec.feature_columns.size());
  ReslogitParams p;
  p.mode = spec.coefficient_mode;
  const int beta_rows = p.mode == CoefficientMode::kGeneric ? 1 : k;
  p.trainable_mask = Eigen::MatrixXd::Ones(beta_rows, f);
  for (const auto& [col, cat] : spec.exclusions) {
    int j = -1;
    for (std::size_t c = 0; c < spec.feature_columns.size(); ++c)
      if (spec.feature_columns[c] == col) j = static_cast<int>(c);
    if (j < 0 || cat < 1 || cat > beta_rows)
      throw ValidationError("exclusion does not match design: " + col);
    p.trainable_mask(cat - 1, j) = 0.0;
  }
  p.beta = Eigen::MatrixXd::Zero(beta_rows, f);
  for (long r = 0; r < p.beta.rows(); ++r)
    for (long c = 0; c < p.beta.cols(); ++c)
      if (p.trainable_mask(r, c) != 0.0)
        p.beta(r, c) = rng.uniform(-config.init_beta_range,
                                   config.init_beta_range);
  p.residual_weights.assign(static_cast<std::size_t>(config.m_layers),
                            Eigen::MatrixXd::Zero(k, k));
  p.coral_weights =
      Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));

  const double n = static_cast<double>(train.n_rows());
  p.coral_biases.resize(k - 1);
  for (int t = 1; t <= k - 1; ++t) {
    long above = 0;
    for (int y : train.labels)
      if (y > t) ++above;
    const double share = std::clamp(static_cast<double>(above) / n,
                                    0.5 / n, 1.0 - 0.5 / n);
    p.coral_biases[t - 1] = logit(share);
  }
  if (config.task_weights.empty()) {
    p.task_weights = Eigen::VectorXd::Ones(k - 1);
  } else {
    p.task_weights = Eigen::Map<const Eigen::VectorXd>(
        config.task_weights.data(),
        static_cast<long>(config.task_weights.size()));
  }
  p.alpha = 0.5;
  p.validate();
  return p;
}

inline ReslogitFitResult fit_reslogit(const Dataset& train, const Dataset& val,
                                      const DesignSpec& spec,
                                      const TrainConfig& config) {
  config.validate();
  train.validate_for_fit();
  val.validate();
  spec.validate(train);
  if (train.n_categories != val.n_categories)
    throw ValidationError("train and validation category counts differ");
  if (train.n_categories < 2)
    throw ValidationError("reslogit requires at least 2 categories");

  const Eigen::MatrixXd x_train = design_matrix(train, spec);
  const Eigen::MatrixXd x_val = design_matrix(val, spec);
  const long n = x_train.rows();

  Rng rng(config.seed);
  ReslogitParams params = init_reslogit_params(train, spec, config, rng);
  auto cache = reslogit_detail::RmsCache::zeros_like(params);

  Eigen::VectorXd bias_raw, bias_raw_cache;
  if (config.monotone_biases) {
    bias_raw = reslogit_detail::raw_from_biases(params.coral_biases);
    bias_raw_cache = Eigen::VectorXd::Zero(bias_raw.size());
  }

  ReslogitFitResult result;
  ReslogitParams best = params;
  int last_improvement = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const std::vector<int> perm = rng.permutation(static_cast<int>(n));
    KahanSum epoch_loss;
    for (long start = 0; start < n; start += config.batch_size) {
      const long stop = std::min<long>(start + config.batch_size, n);
      const long bsz = stop - start;
      Eigen::MatrixXd xb(bsz, x_train.cols());
      std::vector<int> yb(static_cast<std::size_t>(bsz));
      for (long i = 0; i < bsz; ++i) {
        const int src = perm[static_cast<std::size_t>(start + i)];
        xb.row(i) = x_train.row(src);
        yb[static_cast<std::size_t>(i)] =
            train.labels[static_cast<std::size_t>(src)];
      }

      ReslogitGradient g = gradient(xb, yb, params);
      if (!std::isfinite(g.loss))
        throw NumericError("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(start / config.batch_size + 1));
      epoch_loss.add(g.loss);

      const double lr = config.learning_rate;
      const double decay = config.rmsprop_decay;
      const double eps = config.rmsprop_epsilon;
      reslogit_detail::rms_step(params.beta, cache.beta, g.beta, lr, decay,
                                eps);
      params.beta = params.beta.cwiseProduct(params.trainable_mask);
      for (std::size_t m = 0; m < params.residual_weights.size(); ++m)
        reslogit_detail::rms_step(params.residual_weights[m],
                                  cache.residual_weights[m],
                                  g.residual_weights[m], lr, decay, eps);
      reslogit_detail::rms_step(params.coral_weights, cache.coral_weights,
                                g.coral_weights, lr, decay, eps);
      if (config.monotone_biases) {
        const Eigen::VectorXd graw =
            reslogit_detail::raw_bias_gradient(bias_raw, g.coral_biases);
        reslogit_detail::rms_step(bias_raw, bias_raw_cache, graw, lr, decay,
                                  eps);
        params.coral_biases = reslogit_detail::biases_from_raw(bias_raw);
      } else {
        reslogit_detail::rms_step(params.coral_biases, cache.coral_biases,
                                  g.coral_biases, lr, decay, eps);
      }
    }

    const double val_mpe = reslogit_detail::mpe_of(
        predict_ranks(params, x_val, 0.5), val.labels);
    result.history.push_back({epoch, epoch_loss.value(), val_mpe});

    if (result.history.size() == 1 || val_mpe < result.best_val_mpe) {
      result.best_val_mpe = val_mpe;
      result.best_epoch = epoch;
      best = params;
      last_improvement = epoch;
    } else if (val_mpe == result.best_val_mpe) {
      // Equal-MPE epochs keep training; prefer the later (better-converged)
      // parameters without resetting the stopping clock.
      result.best_epoch = epoch;
      best = params;
    }
    result.epochs_run = epoch;
    if (epoch - last_improvement >= config.early_stop_patience) {
      result.stopped_early = true;
      break;
    }
  }

  result.params = best;
  result.final_train_loss = loss(x_train, train.labels, result.params);

  ClampStats stats;
  const BatchTrace trace = forward_batch(result.params, x_train);
  for (long i = 0; i < n; ++i)
    choice_probs_from_exceedance(
        exceedance_from_trace(trace, result.params, i), &stats);
  result.clamp_violations = stats.clamped;
  result.clamp_degenerate = stats.degenerate;
  return result;
}

/// Grid search for the decision threshold: smallest alpha attaining the
/// minimum validation MPE. Stores the choice in the parameter set.
inline double select_alpha(ReslogitParams& params, const Eigen::MatrixXd& x_val,
                           const std::vector<int>& y_val,
                           const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("alpha grid is empty");
  const BatchTrace trace = forward_batch(params, x_val);
  double best_alpha = grid.front();
  double best_mpe = std::numeric_limits<double>::infinity();
  for (double a : grid) {
    if (!(a > 0.0 && a < 1.0))
      throw ValidationError("alpha grid values must lie in (0,1)");
    long wrong = 0;
    for (long n = 0; n < x_val.rows(); ++n) {
      const int pred =
          predict_rank(exceedance_from_trace(trace, params, n), a);
      if (pred != y_val[static_cast<std::size_t>(n)]) ++wrong;
    }
    const double mpe =
        static_cast<double>(wrong) / static_cast<double>(x_val.rows());
    if (mpe < best_mpe || (mpe == best_mpe && a < best_alpha)) {
      best_mpe = mpe;
      best_alpha = a;
    }
  }
  params.alpha = best_alpha;
  return best_alpha;
}

}  // namespace ochoice
