#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "ochoice/common.hpp"
#include "ochoice/dataset.hpp"
#include "ochoice/jenks.hpp"
#include "ochoice/ordered_logit.hpp"

namespace ochoice {

// ---------------------------------------------------------------------------
// Ground-truth generators. Logistic noise comes from the inverse CDF of
// uniform draws, so the sampler realizes the model's link exactly. All
// output is a pure function of (spec, seed).
// ---------------------------------------------------------------------------

enum class HeterogeneityKind { kNone, kInteraction, kCategorySpecific };

inline std::string to_string(HeterogeneityKind h) {
  switch (h) {
    case HeterogeneityKind::kNone: return "none";
    case HeterogeneityKind::kInteraction: return "interaction";
    default: return "category_specific";
  }
}

inline HeterogeneityKind heterogeneity_from_string(const std::string& s) {
  if (s == "none") return HeterogeneityKind::kNone;
  if (s == "interaction") return HeterogeneityKind::kInteraction;
  if (s == "category_specific") return HeterogeneityKind::kCategorySpecific;
  throw ValidationError("unknown heterogeneity kind: " + s);
}

struct Interaction {
  int a = 0;
  int b = 0;
  double gamma = 0.0;
};

struct GenSpec {
  long n_obs = 0;
  int n_features = 0;
  Eigen::VectorXd beta_true;          // length n_features
  Eigen::MatrixXd beta_by_category;   // K x F, category_specific mode only
  std::vector<double> deltas_true;    // K-1, strictly increasing
  HeterogeneityKind heterogeneity = HeterogeneityKind::kNone;
  std::vector<Interaction> interactions;
  std::vector<bool> binary_features;  // empty = all continuous
  std::uint64_t seed = 1;

  int n_categories() const { return static_cast<int>(deltas_true.size()) + 1; }

  void validate() const {
    if (n_obs < 1) throw ValidationError("n_obs must be >= 1");
    if (n_features < 1) throw ValidationError("n_features must be >= 1");
    if (deltas_true.empty()) throw ValidationError("deltas_true is empty");
    for (std::size_t i = 1; i < deltas_true.size(); ++i)
      if (!(deltas_true[i - 1] < deltas_true[i]))
        throw ValidationError("deltas_true must be strictly increasing");
    if (!binary_features.empty() &&
        static_cast<int>(binary_features.size()) != n_features)
      throw ValidationError("binary feature flags must match n_features");
    if (heterogeneity == HeterogeneityKind::kCategorySpecific) {
      if (beta_by_category.rows() != n_categories() ||
          beta_by_category.cols() != n_features)
        throw ValidationError("beta_by_category must be K x F");
    } else if (beta_true.size() != n_features) {
      throw ValidationError("beta_true length must equal n_features");
    }
    for (const auto& it : interactions)
      if (it.a < 0 || it.a >= n_features || it.b < 0 || it.b >= n_features)
        throw ValidationError("interaction feature index out of range");
  }
};

namespace synth_detail {

inline Eigen::VectorXd draw_features(const GenSpec& spec, Rng& rng) {
  Eigen::VectorXd x(spec.n_features);
  for (int j = 0; j < spec.n_features; ++j) {
    const bool binary = !spec.binary_features.empty() &&
                        spec.binary_features[static_cast<std::size_t>(j)];
    x[j] = binary ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.normal();
  }
  return x;
}

inline double interaction_shift(const GenSpec& spec,
                                const Eigen::VectorXd& x) {
  double shift = 0.0;
  for (const auto& it : spec.interactions)
    shift += it.gamma * x[it.a] * x[it.b];
  return shift;
}

inline int label_from_latent(double latent,
                             const std::vector<double>& deltas) {
  int y = 1;
  for (double d : deltas)
    if (latent > d) ++y;
  return y;
}

inline Dataset make_dataset(const GenSpec& spec,
                            std::vector<Eigen::VectorXd> rows,
                            std::vector<int> labels) {
  Dataset ds;
  ds.n_categories = spec.n_categories();
  ds.label_name = "y";
  for (int j = 0; j < spec.n_features; ++j)
    ds.feature_names.push_back("x" + std::to_string(j + 1));
  ds.features.resize(static_cast<long>(rows.size()), spec.n_features);
  for (std::size_t i = 0; i < rows.size(); ++i)
    ds.features.row(static_cast<long>(i)) = rows[i].transpose();
  ds.labels = std::move(labels);
  ds.validate();
  return ds;
}

}  // namespace synth_detail

/// Samples U* = beta.x + logistic noise and thresholds it (closed-above).
inline Dataset gen_ordered_logit(const GenSpec& spec) {
  spec.validate();
  if (spec.heterogeneity != HeterogeneityKind::kNone)
    throw ValidationError("gen_ordered_logit requires heterogeneity = none");
  Rng rng(spec.seed);
  std::vector<Eigen::VectorXd> rows;
  std::vector<int> labels;
  rows.reserve(static_cast<std::size_t>(spec.n_obs));
  labels.reserve(static_cast<std::size_t>(spec.n_obs));
  for (long i = 0; i < spec.n_obs; ++i) {
    Eigen::VectorXd x = synth_detail::draw_features(spec, rng);
    const double latent = spec.beta_true.dot(x) + rng.logistic();
    labels.push_back(synth_detail::label_from_latent(latent, spec.deltas_true));
    rows.push_back(std::move(x));
  }
  return synth_detail::make_dataset(spec, std::move(rows), std::move(labels));
}

/// Planted-heterogeneity sampler. Interaction mode adds gamma * x_a * x_b
/// terms to the latent index without exposing them as features, so any
/// linear-in-x model is misspecified by construction. With all gammas zero
/// the draw sequence reduces bitwise to gen_ordered_logit. Category-specific
/// mode draws labels from exceedances sigma(beta_k.x - delta_k) folded into
/// a proper distribution by the clamp-and-renormalize rule.
inline Dataset gen_heterogeneous(const GenSpec& spec) {
  spec.validate();
  if (spec.heterogeneity == HeterogeneityKind::kNone)
    throw ValidationError("gen_heterogeneous requires heterogeneity != none");
  Rng rng(spec.seed);
  std::vector<Eigen::VectorXd> rows;
  std::vector<int> labels;
  rows.reserve(static_cast<std::size_t>(spec.n_obs));
  labels.reserve(static_cast<std::size_t>(spec.n_obs));
  const int k = spec.n_categories();

  for (long i = 0; i < spec.n_obs; ++i) {
    Eigen::VectorXd x = synth_detail::draw_features(spec, rng);
    if (spec.heterogeneity == HeterogeneityKind::kInteraction) {
      const double latent = spec.beta_true.dot(x) +
                            synth_detail::interaction_shift(spec, x) +
                            rng.logistic();
      labels.push_back(
          synth_detail::label_from_latent(latent, spec.deltas_true));
    } else {
      Eigen::VectorXd exceed(k - 1);
      for (int t = 0; t < k - 1; ++t)
        exceed[t] = sigmoid(spec.beta_by_category.row(t + 1).dot(x) -
                            spec.deltas_true[static_cast<std::size_t>(t)]);
      Eigen::VectorXd raw(k);
      raw[0] = 1.0 - exceed[0];
      for (int j = 1; j < k - 1; ++j) raw[j] = exceed[j - 1] - exceed[j];
      raw[k - 1] = exceed[k - 2];
      for (int j = 0; j < k; ++j) raw[j] = std::max(raw[j], 0.0);
      const double total = raw.sum();
      const double u = rng.uniform01() * (total > 0.0 ? total : 1.0);
      double cum = 0.0;
      int y = k;
      for (int j = 0; j < k; ++j) {
        cum += total > 0.0 ? raw[j] : 1.0 / static_cast<double>(k);
        if (u < cum) {
          y = j + 1;
          break;
        }
      }
      labels.push_back(y);
    }
    rows.push_back(std::move(x));
  }
  return synth_detail::make_dataset(spec, std::move(rows), std::move(labels));
}

/// True conditional category probabilities under the generative model.
inline Eigen::VectorXd true_probs(const GenSpec& spec,
                                  const Eigen::VectorXd& x) {
  const int k = spec.n_categories();
  Eigen::Map<const Eigen::VectorXd> deltas(spec.deltas_true.data(),
                                           static_cast<long>(
                                               spec.deltas_true.size()));
  if (spec.heterogeneity == HeterogeneityKind::kCategorySpecific) {
    Eigen::VectorXd exceed(k - 1);
    for (int t = 0; t < k - 1; ++t)
      exceed[t] = sigmoid(spec.beta_by_category.row(t + 1).dot(x) -
                          spec.deltas_true[static_cast<std::size_t>(t)]);
    Eigen::VectorXd raw(k);
    raw[0] = 1.0 - exceed[0];
    for (int j = 1; j < k - 1; ++j) raw[j] = exceed[j - 1] - exceed[j];
    raw[k - 1] = exceed[k - 2];
    for (int j = 0; j < k; ++j) raw[j] = std::max(raw[j], 0.0);
    const double total = raw.sum();
    if (total <= 0.0)
      return Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    return raw / total;
  }
  double eta = spec.beta_true.dot(x);
  if (spec.heterogeneity == HeterogeneityKind::kInteraction)
    eta += synth_detail::interaction_shift(spec, x);
  return choice_probs_eta(eta, deltas);
}

/// Expected accuracy of the optimal (true-model) predictor, estimated as
/// the mean maximal conditional probability over the given rows. Bounds
/// what any fitted model can reach on this data.
inline double bayes_rate_estimate(const GenSpec& spec, const Dataset& data) {
  double sum = 0.0;
  for (long i = 0; i < data.n_rows(); ++i)
    sum += true_probs(spec, data.features.row(i)).maxCoeff();
  return sum / static_cast<double>(data.n_rows());
}

// ---------------------------------------------------------------------------
// Brute-force Jenks oracle: exhaustive enumeration of contiguous partitions
// of the sorted values (split points restricted to distinct-value
// boundaries, the same partition space as the DP). Independent of the DP:
// class costs come from direct per-class sums.
// ---------------------------------------------------------------------------

inline Breaks brute_force_jenks(std::vector<double> values, int k) {
  if (values.size() > 14)
    throw ValidationError("brute-force jenks is limited to n <= 14");
  if (k < 1 || values.empty())
    throw ValidationError("invalid brute-force jenks input");
  std::sort(values.begin(), values.end());
  const long n = static_cast<long>(values.size());

  auto class_cost = [&](long i, long j) {  // inclusive
    double sum = 0.0, sumsq = 0.0;
    for (long t = i; t <= j; ++t) {
      sum += values[static_cast<std::size_t>(t)];
      sumsq += values[static_cast<std::size_t>(t)] *
               values[static_cast<std::size_t>(t)];
    }
    return sumsq - sum * sum / static_cast<double>(j - i + 1);
  };
  const double tol = jenks_detail::tie_tolerance(class_cost(0, n - 1));

  std::vector<long> ends(static_cast<std::size_t>(k));  // class end indices
  std::vector<long> best_ends;
  double best_total = std::numeric_limits<double>::infinity();

  auto thresholds_of = [&](const std::vector<long>& e) {
    std::vector<double> t;
    for (int c = 0; c + 1 < k; ++c)
      t.push_back(values[static_cast<std::size_t>(e[static_cast<std::size_t>(c)])]);
    return t;
  };

  // Recursive enumeration over valid split points.
  auto recurse = [&](auto&& self, int cls, long start) -> void {
    if (cls == k - 1) {
      ends[static_cast<std::size_t>(cls)] = n - 1;
      if (start > n - 1) return;
      double total = 0.0;
      for (int c = k - 1; c >= 0; --c) {  // right-associated accumulation
        const long lo = c == 0 ? 0 : ends[static_cast<std::size_t>(c - 1)] + 1;
        total = class_cost(lo, ends[static_cast<std::size_t>(c)]) + total;
      }
      if (total < best_total - tol) {
        best_total = total;
        best_ends = ends;
      } else if (total <= best_total + tol && !best_ends.empty()) {
        if (thresholds_of(ends) < thresholds_of(best_ends)) best_ends = ends;
        best_total = std::min(best_total, total);
      }
      return;
    }
    for (long j = start; j <= n - (k - cls); ++j) {
      if (values[static_cast<std::size_t>(j)] ==
          values[static_cast<std::size_t>(j + 1)])
        continue;  // splits only at distinct-value boundaries
      ends[static_cast<std::size_t>(cls)] = j;
      self(self, cls + 1, j + 1);
    }
  };
  recurse(recurse, 0, 0);

  if (best_ends.empty())
    throw ValidationError("brute-force jenks: no feasible partition");

  Breaks out;
  out.lower_bound = values.front();
  out.upper_bound = values.back();
  out.objective = best_total;
  out.thresholds = thresholds_of(best_ends);
  long prev = -1;
  for (int c = 0; c < k; ++c) {
    out.category_counts.push_back(best_ends[static_cast<std::size_t>(c)] -
                                  prev);
    prev = best_ends[static_cast<std::size_t>(c)];
  }
  out.category_shares.resize(out.category_counts.size());
  for (std::size_t c = 0; c < out.category_counts.size(); ++c)
    out.category_shares[c] =
        static_cast<double>(out.category_counts[c]) / static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------------------
// Central finite differences: the reference every analytic derivative in
// this toolkit is checked against.
// ---------------------------------------------------------------------------

template <typename F>
double central_diff(F&& f, double x, double step) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

template <typename F>
Eigen::VectorXd central_diff_gradient(F&& f, const Eigen::VectorXd& theta,
                                      double step) {
  Eigen::VectorXd g(theta.size());
  Eigen::VectorXd t = theta;
  for (long j = 0; j < theta.size(); ++j) {
    const double orig = t[j];
    t[j] = orig + step;
    const double up = f(t);
    t[j] = orig - step;
    const double down = f(t);
    t[j] = orig;
    g[j] = (up - down) / (2.0 * step);
  }
  return g;
}

}  // namespace ochoice
