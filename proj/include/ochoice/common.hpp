#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ochoice {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Bad input or contract violation detectable before any numerics run.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure during optimization or evaluation (divergence,
/// singular information matrix, non-finite intermediate values).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Stable scalar links. All probability arithmetic in this toolkit goes
// through these; nothing ever takes log() of a sigmoid output directly.
// ---------------------------------------------------------------------------

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// ln(1 + e^x) evaluated as max(x,0) + log1p(exp(-|x|)).
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

/// ln sigmoid(x) = -softplus(-x); stays finite down to x ~ -700.
inline double log_sigmoid(double x) { return -softplus(-x); }

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// Inverse of softplus on (0, inf): solves softplus(x) = y.
inline double inv_softplus(double y) {
  // y + log(1 - e^-y); for large y the correction underflows to 0.
  return y + std::log1p(-std::exp(-y));
}

inline bool all_finite(const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Compensated summation. Used where a sum must be insensitive to the
// order of its terms (loss over a shuffled batch, per-category tallies).
// ---------------------------------------------------------------------------

class KahanSum {
 public:
  void add(double v) {
    const double y = v - carry_;
    const double t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

// ---------------------------------------------------------------------------
// Seeded RNG. mt19937_64 has a bit-exact output sequence across standard
// library implementations; the distribution mappings below are hand-rolled
// so the whole stream is reproducible, not just the raw engine.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform on the open interval (0, 1); safe for logit/log transforms.
  double uniform_open01() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /// Standard normal via Box-Muller; second draw cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_open01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  /// Standard logistic by inverse CDF: ln(u / (1-u)).
  double logistic() {
    const double u = uniform_open01();
    return std::log(u) - std::log1p(-u);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Fisher-Yates shuffle driven by below(); deterministic per seed.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    shuffle(p);
    return p;
  }

 private:
  std::mt19937_64 engine_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// ---------------------------------------------------------------------------
// Bounded worker pool for per-observation maps. Results must be written to
// preallocated slots so the final aggregation order is fixed regardless of
// the worker count.
// ---------------------------------------------------------------------------

template <typename Fn>
void parallel_for(long n, int threads, Fn&& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<long>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&fn, n, w, workers]() {
      for (long i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Worker cap from OCHOICE_THREADS; defaults to 1 (fully sequential).
inline int env_thread_cap() {
  const char* s = std::getenv("OCHOICE_THREADS");
  if (s == nullptr || *s == '\0') return 1;
  const long v = std::strtol(s, nullptr, 10);
  return v > 1 ? static_cast<int>(v) : 1;
}

}  // namespace ochoice
