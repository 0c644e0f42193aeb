// ============================================================================
// detect.hpp -- Poisson particle-counting detection: MAP thresholds, binary
// and M-ary error probabilities, total-variation identity
// ============================================================================
#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"

namespace rdmc {

namespace detail {

/// log k! with an incrementally grown table.
inline double log_factorial(int k) {
  static std::vector<double> table{0.0};
  if (k < 0) throw ValidationError("log_factorial of negative k");
  while (int(table.size()) <= k) table.push_back(table.back() + std::log(double(table.size())));
  return table[std::size_t(k)];
}

inline double poisson_log_pmf(int k, double mean) {
  if (mean == 0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return double(k) * std::log(mean) - mean - log_factorial(k);
}

inline double poisson_pmf(int k, double mean) { return std::exp(poisson_log_pmf(k, mean)); }

/// Truncation window [0, mean + 40 sqrt(mean) + 40]: Poisson tail mass beyond
/// it is far below 1e-12 for means up to 1e6.
inline int poisson_window(double mean) {
  return int(std::ceil(mean + 40.0 * std::sqrt(std::max(mean, 0.0)) + 40.0));
}

}  // namespace detail

/// MAP threshold T_h = (rho1 - rho0) / (log rho1 - log rho0); declare H0 iff
/// the observed count is below T_h.
inline double map_threshold(double rho0, double rho1) {
  if (!(rho0 > 0) || !(rho1 > 0)) throw NonPositiveMean("means must be positive");
  if (rho0 == rho1) throw DegenerateMeans("equal means have no threshold");
  return (rho1 - rho0) / (std::log(rho1) - std::log(rho0));
}

/// Exact MAP error probability for equal priors, by summing Poisson pmfs on
/// the two decision regions (log-space terms, so means up to 1e6 are fine).
/// Handles rho = 0 and equal means directly.
inline double binary_error_prob(double rho0, double rho1) {
  if (rho0 < 0 || rho1 < 0) throw NonPositiveMean("means must be nonnegative");
  if (rho0 > rho1) std::swap(rho0, rho1);
  if (rho0 == rho1) return 0.5;
  if (rho0 == 0) return 0.5 * std::exp(-rho1);  // declare H0 iff X = 0
  const double th = map_threshold(rho0, rho1);
  const int k_th = int(std::ceil(th));  // smallest count declared H1
  // miss mass of H0: upper tail of Poisson(rho0) from k_th (decreasing terms)
  double miss0 = 0;
  const int hi = detail::poisson_window(std::max(rho0, th));
  for (int k = k_th; k <= hi; ++k) miss0 += detail::poisson_pmf(k, rho0);
  // miss mass of H1: lower region k < th
  double miss1 = 0;
  for (int k = 0; k < k_th && double(k) < th; ++k) miss1 += detail::poisson_pmf(k, rho1);
  return 0.5 * (miss0 + miss1);
}

/// log P_e for the (0, rho) pair, exact: log(1/2) - rho.  Used where the
/// error probability itself underflows.
inline double log_binary_error_prob_zero_null(double rho) {
  if (rho < 0) throw NonPositiveMean("mean must be nonnegative");
  return std::log(0.5) - rho;
}

/// Total variation distance between Poisson(rho0) and Poisson(rho1),
/// 1/2 sum_k |p0(k) - p1(k)| with tail truncation below 1e-12.
inline double total_variation_poisson(double rho0, double rho1) {
  if (rho0 < 0 || rho1 < 0) throw NonPositiveMean("means must be nonnegative");
  const int hi = detail::poisson_window(std::max(rho0, rho1));
  double s = 0;
  for (int k = 0; k <= hi; ++k)
    s += std::abs(detail::poisson_pmf(k, rho0) - detail::poisson_pmf(k, rho1));
  return 0.5 * s;
}

// ============================================================================
// M-ary hypotheses
// ============================================================================
struct HypothesisSet {
  std::vector<double> means;
  std::vector<double> priors;       // empty = uniform
  std::vector<std::string> labels;  // optional message identifiers

  void validate() const {
    if (means.size() < 2) throw EmptyHypothesisSet("need at least 2 hypotheses");
    for (double m : means)
      if (m < 0 || !std::isfinite(m)) throw NonPositiveMean("means must be finite nonnegative");
    if (!priors.empty()) {
      if (priors.size() != means.size()) throw LengthMismatch("priors/means size mismatch");
      double s = 0;
      for (double p : priors) {
        if (p < 0) throw ValidationError("negative prior");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-12) throw ValidationError("priors must sum to 1");
    }
  }
};

/// MAP error probability 1 - sum_k max_m prior_m pmf_m(k); ties resolve to
/// the lowest index, which does not change the value.
inline double mary_error_prob(const HypothesisSet& h) {
  h.validate();
  const std::size_t m = h.means.size();
  const double uniform = 1.0 / double(m);
  double max_mean = 0;
  for (double v : h.means) max_mean = std::max(max_mean, v);
  const int hi = detail::poisson_window(max_mean);
  double correct = 0;
  for (int k = 0; k <= hi; ++k) {
    double best = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double prior = h.priors.empty() ? uniform : h.priors[i];
      const double w = prior * detail::poisson_pmf(k, h.means[i]);
      if (w > best) best = w;
    }
    correct += best;
  }
  return 1.0 - correct;
}

}  // namespace rdmc
