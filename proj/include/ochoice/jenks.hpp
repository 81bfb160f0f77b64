#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ochoice/common.hpp"

namespace ochoice {

// ---------------------------------------------------------------------------
// Jenks natural breaks: exact dynamic programming over contiguous partitions
// of the sorted values, minimizing the total within-class sum of squared
// deviations. Thresholds are class maxima (closed-above intervals), so class
// boundaries always fall between distinct values; otherwise the reported
// thresholds could not reproduce the class assignment.
// ---------------------------------------------------------------------------

struct Breaks {
  std::vector<double> thresholds;  // K-1, strictly increasing
  double lower_bound = std::numeric_limits<double>::quiet_NaN();
  double upper_bound = std::numeric_limits<double>::quiet_NaN();
  std::vector<long> category_counts;
  std::vector<double> category_shares;
  double objective = std::numeric_limits<double>::quiet_NaN();

  int n_classes() const { return static_cast<int>(category_counts.size()); }
};

namespace jenks_detail {

/// Within-class SSD of sorted[i..j] from prefix sums: sumsq - sum^2/n.
struct CostTable {
  std::vector<double> sum;    // prefix sums, size n+1
  std::vector<double> sumsq;  // prefix sums of squares, size n+1

  explicit CostTable(const std::vector<double>& sorted) {
    const std::size_t n = sorted.size();
    sum.assign(n + 1, 0.0);
    sumsq.assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[i + 1] = sum[i] + sorted[i];
      sumsq[i + 1] = sumsq[i] + sorted[i] * sorted[i];
    }
  }

  double operator()(long i, long j) const {  // inclusive endpoints
    const double s = sum[static_cast<std::size_t>(j + 1)] -
                     sum[static_cast<std::size_t>(i)];
    const double q = sumsq[static_cast<std::size_t>(j + 1)] -
                     sumsq[static_cast<std::size_t>(i)];
    const double len = static_cast<double>(j - i + 1);
    return q - s * s / len;
  }
};

/// Objective values within this tolerance of the optimum are treated as tied
/// and resolved by the lexicographic threshold rule. Scaled to the data so
/// float-level noise between equivalent partitions never masks a tie.
inline double tie_tolerance(double whole_range_cost) {
  return 1e-10 * (1.0 + std::abs(whole_range_cost));
}

}  // namespace jenks_detail

/// Exact Jenks classification into k classes. Requires at least k distinct
/// values. Ties in the objective are broken toward the lexicographically
/// smallest threshold vector.
inline Breaks jenks_breaks(std::vector<double> values, int k) {
  if (k < 1) throw ValidationError("jenks: class count must be >= 1");
  if (values.empty()) throw ValidationError("jenks: no values");
  for (double v : values)
    if (!std::isfinite(v)) throw ValidationError("jenks: non-finite value");
  std::sort(values.begin(), values.end());
  const long n = static_cast<long>(values.size());

  long n_distinct = 1;
  for (long i = 1; i < n; ++i)
    if (values[static_cast<std::size_t>(i)] !=
        values[static_cast<std::size_t>(i - 1)])
      ++n_distinct;
  if (n_distinct < k)
    throw ValidationError("jenks: fewer than k distinct values (" +
                          std::to_string(n_distinct) + " < " +
                          std::to_string(k) + ")");

  const jenks_detail::CostTable cost(values);
  const double tol = jenks_detail::tie_tolerance(cost(0, n - 1));
  const double inf = std::numeric_limits<double>::infinity();

  // Valid class end positions: run boundaries of the sorted array.
  auto valid_end = [&](long j) {
    return j == n - 1 || values[static_cast<std::size_t>(j)] <
                             values[static_cast<std::size_t>(j + 1)];
  };

  // best[c][i] = minimal SSD partitioning values[i..n-1] into c classes.
  std::vector<std::vector<double>> best(
      static_cast<std::size_t>(k + 1),
      std::vector<double>(static_cast<std::size_t>(n + 1), inf));
  for (long i = 0; i < n; ++i)
    best[1][static_cast<std::size_t>(i)] = cost(i, n - 1);
  for (int c = 2; c <= k; ++c) {
    for (long i = 0; i + c <= n; ++i) {
      double acc = inf;
      for (long j = i; j <= n - c; ++j) {
        if (!valid_end(j)) continue;
        const double sub = best[static_cast<std::size_t>(c - 1)]
                               [static_cast<std::size_t>(j + 1)];
        if (sub == inf) continue;
        const double total = cost(i, j) + sub;
        if (total < acc) acc = total;
      }
      best[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] = acc;
    }
  }
  if (best[static_cast<std::size_t>(k)][0] == inf)
    throw ValidationError("jenks: no feasible partition");

  // Reconstruct, taking the smallest admissible split at each level; among
  // tied objectives this yields the lexicographically smallest thresholds.
  Breaks out;
  out.lower_bound = values.front();
  out.upper_bound = values.back();
  long i = 0;
  for (int c = k; c >= 2; --c) {
    const double target =
        best[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
    long chosen = -1;
    for (long j = i; j <= n - c; ++j) {
      if (!valid_end(j)) continue;
      const double sub = best[static_cast<std::size_t>(c - 1)]
                             [static_cast<std::size_t>(j + 1)];
      if (sub == inf) continue;
      if (cost(i, j) + sub <= target + tol) {
        chosen = j;
        break;
      }
    }
    if (chosen < 0) throw NumericError("jenks: reconstruction failed");
    out.thresholds.push_back(values[static_cast<std::size_t>(chosen)]);
    out.category_counts.push_back(chosen - i + 1);
    i = chosen + 1;
  }
  out.category_counts.push_back(n - i);

  out.objective = best[static_cast<std::size_t>(k)][0];
  out.category_shares.resize(out.category_counts.size());
  for (std::size_t c = 0; c < out.category_counts.size(); ++c)
    out.category_shares[c] =
        static_cast<double>(out.category_counts[c]) / static_cast<double>(n);
  return out;
}

/// Interval assignment with closed-above classes: v belongs to category c
/// when threshold[c-2] < v <= threshold[c-1], with open outer intervals.
inline std::vector<int> assign_categories(
    const std::vector<double>& values, const std::vector<double>& thresholds) {
  for (std::size_t t = 1; t < thresholds.size(); ++t)
    if (!(thresholds[t - 1] < thresholds[t]))
      throw ValidationError("thresholds must be strictly increasing");
  std::vector<int> labels(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto it =
        std::lower_bound(thresholds.begin(), thresholds.end(), values[i]);
    labels[i] = 1 + static_cast<int>(it - thresholds.begin());
  }
  return labels;
}

/// Count/share table for existing labels against a threshold set.
inline Breaks category_summary(const std::vector<int>& labels,
                               const std::vector<double>& thresholds) {
  const int k = static_cast<int>(thresholds.size()) + 1;
  Breaks out;
  out.thresholds = thresholds;
  out.category_counts.assign(static_cast<std::size_t>(k), 0);
  for (int y : labels) {
    if (y < 1 || y > k)
      throw ValidationError("label " + std::to_string(y) +
                            " inconsistent with " + std::to_string(k) +
                            " categories");
    ++out.category_counts[static_cast<std::size_t>(y - 1)];
  }
  const double n = static_cast<double>(labels.size());
  out.category_shares.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c)
    out.category_shares[static_cast<std::size_t>(c)] =
        n > 0 ? static_cast<double>(
                    out.category_counts[static_cast<std::size_t>(c)]) /
                    n
              : 0.0;
  return out;
}

}  // namespace ochoice
