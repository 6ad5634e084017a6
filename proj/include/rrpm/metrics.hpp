#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rrpm/geometry.hpp"
#include "rrpm/problem.hpp"
#include "rrpm/solvers.hpp"

namespace rrpm {

// ---------------------------------------------------------------------------
// Point metrics.
// ---------------------------------------------------------------------------

struct MetricRecord {
  double f_gap = std::numeric_limits<double>::quiet_NaN();  // NaN without a reference
  double max_violation = 0.0;
  double dist2_C = 0.0;
  bool dist2_is_estimate = false;  // Dykstra hit its cap; distance from the partial point
};

/// Objective gap, worst violation, and squared distance to the feasible set
/// at x.  Pass a prebuilt projector when calling repeatedly.
inline MetricRecord compute_metrics(const ProblemInstance& instance, const Vector& x,
                                    const FeasibilityProjector& feasible_set) {
  MetricRecord record;
  if (instance.metadata().reference.has_value()) {
    record.f_gap = evaluate_objective(instance, x) - instance.metadata().reference->f_star;
  }
  record.max_violation = max_violation(instance, x);
  try {
    const double dist = feasible_set.project(x).distance;
    record.dist2_C = dist * dist;
  } catch (const DykstraError& e) {
    record.dist2_C = e.report.distance * e.report.distance;
    record.dist2_is_estimate = true;
  }
  return record;
}

inline MetricRecord compute_metrics(const ProblemInstance& instance, const Vector& x) {
  return compute_metrics(instance, x, FeasibilityProjector(instance));
}

// ---------------------------------------------------------------------------
// Rate fitting on trace columns.
// ---------------------------------------------------------------------------

struct RateFit {
  double slope = 0.0;      // least-squares slope of log(metric) vs log(iter)
  double intercept = 0.0;
  double ci_lower = 0.0;   // 95% bootstrap interval for the slope
  double ci_upper = 0.0;
  int points = 0;
};

namespace detail {

inline double trace_column(const TraceRow& row, const std::string& metric) {
  if (metric == "f_gap_iterate") return row.f_gap_iterate;
  if (metric == "f_gap_average") return row.f_gap_average;
  if (metric == "max_violation_average") return row.max_violation_average;
  if (metric == "dist2_C_average") return row.dist2_C_average;
  throw std::invalid_argument("fit_rate: unknown metric '" + metric + "'");
}

inline std::pair<double, double> least_squares_line(const std::vector<double>& xs,
                                                    const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("fit_rate: degenerate abscissae");
  const double slope = (n * sxy - sx * sy) / denom;
  return {slope, (sy - slope * sx) / n};
}

}  // namespace detail

/// Power-law fit metric ~ C * iter^slope over rows with k_min <= iter <= k_max.
/// Rows with nonpositive or non-finite metric values are dropped; fewer than
/// 20 surviving rows is an error (insufficient data).  The confidence
/// interval comes from a deterministic residual bootstrap (200 resamples).
inline RateFit fit_rate(const RunTrace& trace, const std::string& metric, long k_min, long k_max) {
  if (k_min < 1 || k_max < k_min) throw std::invalid_argument("fit_rate: bad iteration window");
  std::vector<double> log_k, log_y;
  for (const auto& row : trace.rows) {
    if (row.iter < k_min || row.iter > k_max) continue;
    const double value = detail::trace_column(row, metric);
    if (!std::isfinite(value) || value <= 0.0) continue;
    log_k.push_back(std::log(static_cast<double>(row.iter)));
    log_y.push_back(std::log(value));
  }
  if (log_k.size() < 20) {
    throw std::invalid_argument("fit_rate: insufficient data (" + std::to_string(log_k.size()) +
                                " positive samples in window)");
  }

  RateFit fit;
  fit.points = static_cast<int>(log_k.size());
  const auto [slope, intercept] = detail::least_squares_line(log_k, log_y);
  fit.slope = slope;
  fit.intercept = intercept;

  std::vector<double> residuals(log_k.size());
  for (std::size_t i = 0; i < log_k.size(); ++i) {
    residuals[i] = log_y[i] - (intercept + slope * log_k[i]);
  }
  const int resamples = 200;
  std::mt19937_64 rng(0xB007ULL);
  std::uniform_int_distribution<std::size_t> pick(0, residuals.size() - 1);
  std::vector<double> slopes;
  slopes.reserve(resamples);
  std::vector<double> resampled(log_k.size());
  for (int b = 0; b < resamples; ++b) {
    for (std::size_t i = 0; i < log_k.size(); ++i) {
      resampled[i] = intercept + slope * log_k[i] + residuals[pick(rng)];
    }
    slopes.push_back(detail::least_squares_line(log_k, resampled).first);
  }
  std::sort(slopes.begin(), slopes.end());
  fit.ci_lower = slopes[static_cast<std::size_t>(0.025 * (resamples - 1))];
  fit.ci_upper = slopes[static_cast<std::size_t>(0.975 * (resamples - 1))];
  return fit;
}

// ---------------------------------------------------------------------------
// Linear-regularity probe.
// ---------------------------------------------------------------------------

struct RegularityEstimate {
  bool defined = false;     // at least one usable infeasible sample
  double kappa_hat = 0.0;   // max over samples of dist(x,C) / max_j dist(x,H_j)
  Vector witness;           // sample attaining kappa_hat
  int infeasible_samples = 0;
  int total_samples = 0;
};

/// Empirical lower estimate of the regularity constant: sample points from a
/// box (intersected with the simple set), and for each infeasible sample
/// compare the true distance to the feasible set against the largest distance
/// to a single half-space cut.  The ratio is at least 1 for every sample.
inline RegularityEstimate probe_regularity(
    const ProblemInstance& instance, int num_samples, std::uint64_t seed,
    std::optional<std::pair<Vector, Vector>> sample_box = std::nullopt) {
  if (num_samples < 1) throw std::invalid_argument("probe_regularity: need at least one sample");

  Vector lower, upper;
  if (sample_box.has_value()) {
    lower = sample_box->first;
    upper = sample_box->second;
    check_dimension(lower.size(), instance.dimension(), "probe_regularity box");
    check_dimension(upper.size(), instance.dimension(), "probe_regularity box");
    if ((lower.array() > upper.array()).any()) {
      throw std::invalid_argument("probe_regularity: empty sample box");
    }
  } else if (instance.simple_set().is_bounded()) {
    std::tie(lower, upper) = instance.simple_set().bounding_box();
  } else {
    lower = Vector::Constant(instance.dimension(), -10.0);
    upper = Vector::Constant(instance.dimension(), 10.0);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FeasibilityProjector feasible_set(instance);

  RegularityEstimate estimate;
  long attempts = 0;
  const long attempt_cap = 1000L * num_samples;
  while (estimate.total_samples < num_samples) {
    if (++attempts > attempt_cap) {
      throw std::invalid_argument("probe_regularity: sample box misses the simple set");
    }
    Vector x(instance.dimension());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x[i] = lower[i] + (upper[i] - lower[i]) * unit(rng);
    }
    if (!instance.simple_set().contains(x)) continue;
    ++estimate.total_samples;

    double denom = 0.0;
    bool infeasible = false;
    for (int j = 0; j < instance.num_constraints(); ++j) {
      const auto [phi, xi] = instance.constraint(j).value_and_subgradient(x);
      if (phi <= 0.0) continue;
      infeasible = true;
      const double norm = xi.norm();
      if (norm > 0.0) denom = std::max(denom, phi / norm);  // dist(x, H(phi_j; x; xi_j))
    }
    if (!infeasible) continue;
    ++estimate.infeasible_samples;
    if (denom == 0.0) continue;  // every violated cut was degenerate

    const double dist = feasible_set.project(x).distance;
    const double ratio = dist / denom;
    if (!estimate.defined || ratio > estimate.kappa_hat) {
      estimate.kappa_hat = ratio;
      estimate.witness = x;
    }
    estimate.defined = true;
  }
  return estimate;
}

}  // namespace rrpm
