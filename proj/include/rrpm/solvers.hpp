#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rrpm/errors.hpp"
#include "rrpm/estimators.hpp"
#include "rrpm/geometry.hpp"
#include "rrpm/problem.hpp"
#include "rrpm/schedule.hpp"

namespace rrpm {

// ---------------------------------------------------------------------------
// Algorithms and configuration.
// ---------------------------------------------------------------------------

enum class Algorithm { vr3pm, r2pm_1, r2pm_b, r2pm_n, rpm_n, rpm_wb };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::vr3pm: return "vr3pm";
    case Algorithm::r2pm_1: return "r2pm-1";
    case Algorithm::r2pm_b: return "r2pm-b";
    case Algorithm::r2pm_n: return "r2pm-n";
    case Algorithm::rpm_n: return "rpm-n";
    case Algorithm::rpm_wb: return "rpm-wb";
  }
  return "unknown";
}

inline Algorithm algorithm_from_string(const std::string& name) {
  if (name == "vr3pm") return Algorithm::vr3pm;
  if (name == "r2pm-1") return Algorithm::r2pm_1;
  if (name == "r2pm-b") return Algorithm::r2pm_b;
  if (name == "r2pm-n") return Algorithm::r2pm_n;
  if (name == "rpm-n") return Algorithm::rpm_n;
  if (name == "rpm-wb") return Algorithm::rpm_wb;
  throw std::invalid_argument("unknown algorithm: " + name);
}

/// Default step schedule per algorithm: the variance-reduced method takes
/// 0.01/(k+1)^0.55, the plain stochastic baselines 1/(k+1)^0.55.
inline StepSchedule default_schedule(Algorithm a) {
  return a == Algorithm::vr3pm ? StepSchedule::power(0.01, 0.55) : StepSchedule::power(1.0, 0.55);
}

struct SolverConfig {
  Algorithm algorithm = Algorithm::vr3pm;
  StepSchedule schedule = StepSchedule::power(0.01, 0.55);
  int batch_size = 5;           // summand draws per step (vr3pm, r2pm-b)
  int epoch_length = 0;         // snapshot spacing r; 0 resolves to ceil(n/b)
  int constraint_grouping = 1;  // contiguous max-of-group blocks over the constraints
  double relaxation = 1.0;      // beta in (0,2) for rpm-wb
  std::vector<double> constraint_weights;  // empty = uniform over (grouped) constraints
  std::uint64_t seed = 0;
  long iterations = 1000;       // 0 = run until the gradient budget stops us
  long grad_eval_budget = 0;    // 0 = no budget stop
  long full_metric_stride = 0;  // distance-to-C cadence; 0 resolves to ceil(K/500)
};

/// Snapshot spacing with the default r = ceil(n/b) filled in.
inline long resolved_epoch_length(const SolverConfig& config, int n) {
  if (config.epoch_length > 0) return config.epoch_length;
  return (n + config.batch_size - 1) / config.batch_size;
}

/// Replaces the constraints by m/bbar contiguous max groups.  The feasible
/// set is unchanged; each group behaves as one constraint for the sampler.
inline ProblemInstance apply_grouping(const ProblemInstance& instance, int bbar) {
  if (bbar < 1) throw std::invalid_argument("apply_grouping: group size must be positive");
  if (bbar == 1) return instance;
  const int m = instance.num_constraints();
  if (m % bbar != 0) {
    throw std::invalid_argument("apply_grouping: group size must divide the constraint count");
  }
  std::vector<ConstraintFunction> grouped;
  grouped.reserve(static_cast<std::size_t>(m / bbar));
  for (int t = 0; t < m / bbar; ++t) {
    MaxGroupConstraint group;
    group.members.reserve(static_cast<std::size_t>(bbar));
    for (int j = t * bbar; j < (t + 1) * bbar; ++j) group.members.push_back(instance.constraint(j));
    grouped.emplace_back(std::move(group));
  }
  return ProblemInstance(instance.objective(), std::move(grouped), instance.simple_set(),
                         instance.metadata());
}

inline void validate_config(const SolverConfig& config, const ProblemInstance& instance) {
  const int n = instance.num_summands();
  const int m = instance.num_constraints();
  if (m < 1) throw std::invalid_argument("solver: instance has no constraints to sample");
  if (config.batch_size < 1 || config.batch_size > n) {
    throw std::invalid_argument("solver: batch size must lie in [1, n]");
  }
  if (config.epoch_length < 0) throw std::invalid_argument("solver: negative epoch length");
  if (config.constraint_grouping < 1 || m % config.constraint_grouping != 0) {
    throw std::invalid_argument("solver: constraint grouping must divide m");
  }
  if (config.algorithm == Algorithm::rpm_wb) {
    if (config.constraint_grouping != 1) {
      throw std::invalid_argument("solver: rpm-wb projects onto single sets; grouping does not apply");
    }
    for (const auto& c : instance.constraints()) {
      if (c.is_max_group()) {
        throw std::invalid_argument("solver: rpm-wb needs affine or quadratic constraints");
      }
    }
    if (!(config.relaxation > 0.0) || !(config.relaxation < 2.0)) {
      throw std::invalid_argument("solver: rpm-wb relaxation must lie in (0, 2)");
    }
  }
  const int m_effective = m / config.constraint_grouping;
  if (!config.constraint_weights.empty() &&
      static_cast<int>(config.constraint_weights.size()) != m_effective) {
    throw std::invalid_argument("solver: constraint weights must match the grouped constraint count");
  }
  if (config.iterations < 0 || config.grad_eval_budget < 0) {
    throw std::invalid_argument("solver: negative stopping rule");
  }
  if (config.iterations == 0 && config.grad_eval_budget == 0) {
    throw std::invalid_argument("solver: no stopping rule (iterations and budget both zero)");
  }
}

// ---------------------------------------------------------------------------
// Iterate state and divergence reporting.
// ---------------------------------------------------------------------------

/// Everything a step function consumes and produces.  Value type: copies are
/// independent, so a run can be forked or replayed from any state.
struct IterateState {
  long k = 0;
  Vector x;
  EstimatorState estimator;
  IndexSampler summand_sampler;
  IndexSampler constraint_sampler;
  long grad_evals = 0;
  long projections = 0;

  IterateState(Vector x0, EstimatorState est, IndexSampler summands, IndexSampler constraints)
      : x(std::move(x0)),
        estimator(std::move(est)),
        summand_sampler(std::move(summands)),
        constraint_sampler(std::move(constraints)) {}
};

struct TraceRow {
  long iter = 0;
  long epoch = 0;
  double time_s = 0.0;
  long grad_evals = 0;
  double f_gap_iterate = std::numeric_limits<double>::quiet_NaN();
  double f_gap_average = std::numeric_limits<double>::quiet_NaN();
  double max_violation_average = 0.0;
  double dist2_C_average = std::numeric_limits<double>::quiet_NaN();
};

struct RunHeader {
  std::string algorithm;
  std::string schedule;
  std::string prng = "std::mt19937_64";
  std::string family;
  std::uint64_t seed = 0;
  int n = 0, m = 0, d = 0;
  int batch_size = 0;
  long epoch_length = 0;
  int constraint_grouping = 1;
  double relaxation = 1.0;
  long iterations = 0;
  long grad_eval_budget = 0;
};

struct RunSummary {
  long iterations_completed = 0;
  long grad_evals = 0;
  double time_s = 0.0;
  double final_f_gap_iterate = std::numeric_limits<double>::quiet_NaN();
  double final_f_gap_average = std::numeric_limits<double>::quiet_NaN();
  double final_max_violation_average = 0.0;
  double final_dist2_C_average = std::numeric_limits<double>::quiet_NaN();
};

struct RunTrace {
  RunHeader header;
  std::vector<TraceRow> rows;
  RunSummary summary;
  Vector x_initial;
  Vector x_final;
  Vector x_average_final;
};

/// An iterate left the trust region (norm above 1e12) or turned non-finite.
/// Carries the last completed state; run() attaches the partial trace.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, IterateState last)
      : std::runtime_error(what), last_state(std::move(last)) {}
  IterateState last_state;
  std::shared_ptr<RunTrace> partial_trace;
};

namespace detail {

inline constexpr double kDivergenceNorm = 1e12;

inline void check_iterate(const Vector& x_new, IterateState* state) {
  if (x_new.allFinite() && x_new.norm() <= kDivergenceNorm) return;
  throw DivergenceError("solver: iterate diverged at iteration " + std::to_string(state->k),
                        std::move(*state));
}

// Named sub-streams of the run seed.
inline constexpr std::uint64_t kInitStream = 0;
inline constexpr std::uint64_t kSummandStream = 1;
inline constexpr std::uint64_t kConstraintStream = 2;

}  // namespace detail

/// Initial state for the effective (already grouped) instance: x0 uniform on
/// [0,1]^d projected onto the simple set, estimator seeded per algorithm, and
/// the three RNG roles split into independent streams so constraint draws
/// match across algorithms with different summand consumption.
inline IterateState make_initial_state(const ProblemInstance& instance, const SolverConfig& config) {
  const int n = instance.num_summands();
  const Eigen::Index d = instance.dimension();
  if (instance.num_constraints() < 1) {
    throw std::invalid_argument("make_initial_state: instance has no constraints to sample");
  }
  if (config.batch_size < 1 || config.batch_size > n) {
    throw std::invalid_argument("make_initial_state: batch size must lie in [1, n]");
  }
  if (!config.constraint_weights.empty() &&
      static_cast<int>(config.constraint_weights.size()) != instance.num_constraints()) {
    throw std::invalid_argument("make_initial_state: constraint weights must match the constraint count");
  }

  std::mt19937_64 init_rng(derive_stream_seed(config.seed, detail::kInitStream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector x0(d);
  for (Eigen::Index i = 0; i < d; ++i) x0[i] = unit(init_rng);
  x0 = project_simple_set(instance.simple_set(), x0).point;

  IndexSampler summands = IndexSampler::uniform(n, derive_stream_seed(config.seed, detail::kSummandStream));
  const std::uint64_t cseed = derive_stream_seed(config.seed, detail::kConstraintStream);
  const int m_effective = instance.num_constraints();
  IndexSampler constraints = config.constraint_weights.empty()
                                 ? IndexSampler::uniform(m_effective, cseed)
                                 : IndexSampler::weighted(config.constraint_weights, cseed);

  EstimatorState estimator;
  long initial_evals = 0;
  switch (config.algorithm) {
    case Algorithm::vr3pm:
      if (config.batch_size == n) {
        // Full batch makes the correction vanish identically; the step then
        // uses the exact gradient and skips snapshot bookkeeping.
        estimator = make_plain_state(EstimatorKind::full, n);
      } else {
        estimator = make_svrg_state(instance, x0, config.batch_size,
                                    static_cast<int>(resolved_epoch_length(config, n)));
        initial_evals = n;
      }
      break;
    case Algorithm::r2pm_1: estimator = make_plain_state(EstimatorKind::single_sample, 1); break;
    case Algorithm::r2pm_b: estimator = make_plain_state(EstimatorKind::minibatch, config.batch_size); break;
    case Algorithm::r2pm_n: estimator = make_plain_state(EstimatorKind::full, n); break;
    case Algorithm::rpm_n:
    case Algorithm::rpm_wb: estimator = make_plain_state(EstimatorKind::single_sample, 1); break;
  }

  IterateState state(std::move(x0), std::move(estimator), std::move(summands), std::move(constraints));
  state.grad_evals = initial_evals;
  return state;
}

namespace detail {

inline long epoch_of(const SolverConfig& config, int n, long k) {
  if (config.algorithm == Algorithm::vr3pm ||
      config.schedule.kind() == StepSchedule::Kind::epoch_constant) {
    return k / resolved_epoch_length(config, n);
  }
  return 0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Step functions.  Each consumes a state, draws what it needs, and returns
// the state advanced by one iteration.
// ---------------------------------------------------------------------------

/// Variance-reduced step: refresh the snapshot at epoch starts, estimate the
/// gradient on a fresh batch, take the gradient step, project onto the
/// half-space cut of a sampled constraint built at the current iterate, then
/// onto the simple set.
inline IterateState vr3pm_step(IterateState state, const ProblemInstance& instance,
                               const SolverConfig& config) {
  const int n = instance.num_summands();
  const long r = resolved_epoch_length(config, n);
  const double alpha = config.schedule.at(state.k, detail::epoch_of(config, n, state.k));

  Vector v;
  if (state.estimator.kind == EstimatorKind::svrg) {
    if (state.k > 0 && state.k % r == 0) {
      state.estimator = refresh_snapshot(state.estimator, instance, state.x);
      state.grad_evals += n;
    }
    const std::vector<int> batch =
        draw_summand_batch(state.summand_sampler, n, state.estimator.batch_size);
    v = svrg_estimate(state.estimator, instance, state.x, batch);
    state.grad_evals += 2 * static_cast<long>(batch.size());
  } else {
    // full-batch collapse (b = n)
    v = evaluate_full_gradient(instance, state.x);
    state.grad_evals += n;
  }

  const int j = state.constraint_sampler.draw();
  const auto [phi, xi] = instance.constraint(j).value_and_subgradient(state.x);
  const HalfSpace cut = build_halfspace(phi, state.x, xi);
  const Vector y = project_halfspace(cut, state.x - alpha * v).point;
  Vector x_new = project_simple_set(instance.simple_set(), y).point;
  state.projections += 2;

  detail::check_iterate(x_new, &state);
  state.x = std::move(x_new);
  state.k += 1;
  return state;
}

/// Plain stochastic baseline sharing the vr3pm geometry: gradient estimate
/// from a fresh batch (size 1, b, or n), half-space cut at the iterate,
/// simple-set projection.
inline IterateState r2pm_step(IterateState state, const ProblemInstance& instance,
                              const SolverConfig& config) {
  const int n = instance.num_summands();
  const double alpha = config.schedule.at(state.k, detail::epoch_of(config, n, state.k));

  Vector v;
  if (state.estimator.kind == EstimatorKind::full) {
    v = evaluate_full_gradient(instance, state.x);
    state.grad_evals += n;
  } else {
    const std::vector<int> batch =
        draw_summand_batch(state.summand_sampler, n, state.estimator.batch_size);
    v = plain_estimate(state.estimator, instance, state.x, batch);
    state.grad_evals += static_cast<long>(batch.size());
  }

  const int j = state.constraint_sampler.draw();
  const auto [phi, xi] = instance.constraint(j).value_and_subgradient(state.x);
  const HalfSpace cut = build_halfspace(phi, state.x, xi);
  const Vector y = project_halfspace(cut, state.x - alpha * v).point;
  Vector x_new = project_simple_set(instance.simple_set(), y).point;
  state.projections += 2;

  detail::check_iterate(x_new, &state);
  state.x = std::move(x_new);
  state.k += 1;
  return state;
}

/// Norm-fair baseline: single-sample gradient step projected onto the simple
/// set first, then a half-space cut built at that intermediate point (not at
/// the pre-step iterate), then the simple set again.
inline IterateState rpm_n_step(IterateState state, const ProblemInstance& instance,
                               const SolverConfig& config) {
  const int n = instance.num_summands();
  const double alpha = config.schedule.at(state.k, detail::epoch_of(config, n, state.k));

  const int i = state.summand_sampler.draw();
  const Vector g = instance.objective().summand(i).gradient(state.x);
  state.grad_evals += 1;
  const Vector z = project_simple_set(instance.simple_set(), state.x - alpha * g).point;

  const int j = state.constraint_sampler.draw();
  const auto [phi, xi] = instance.constraint(j).value_and_subgradient(z);
  const HalfSpace cut = build_halfspace(phi, z, xi);
  const Vector y = project_halfspace(cut, z).point;
  Vector x_new = project_simple_set(instance.simple_set(), y).point;
  state.projections += 3;

  detail::check_iterate(x_new, &state);
  state.x = std::move(x_new);
  state.k += 1;
  return state;
}

/// Relaxed direct-projection baseline: single-sample gradient step, then a
/// relaxed exact projection onto the sampled constraint set,
/// x+ = z - beta (z - P_j(z)), then the simple set.
inline IterateState rpm_wb_step(IterateState state, const ProblemInstance& instance,
                                const SolverConfig& config) {
  const int n = instance.num_summands();
  const double alpha = config.schedule.at(state.k, detail::epoch_of(config, n, state.k));
  const double beta = config.relaxation;

  const int i = state.summand_sampler.draw();
  const Vector g = instance.objective().summand(i).gradient(state.x);
  state.grad_evals += 1;
  const Vector z = state.x - alpha * g;

  const int j = state.constraint_sampler.draw();
  const Vector projected = project_constraint_set(instance.constraint(j), z).point;
  const Vector y = z - beta * (z - projected);
  Vector x_new = project_simple_set(instance.simple_set(), y).point;
  state.projections += 2;

  detail::check_iterate(x_new, &state);
  state.x = std::move(x_new);
  state.k += 1;
  return state;
}

/// Dispatch on the configured algorithm.
inline IterateState advance_state(IterateState state, const ProblemInstance& instance,
                                  const SolverConfig& config) {
  switch (config.algorithm) {
    case Algorithm::vr3pm: return vr3pm_step(std::move(state), instance, config);
    case Algorithm::r2pm_1:
    case Algorithm::r2pm_b:
    case Algorithm::r2pm_n: return r2pm_step(std::move(state), instance, config);
    case Algorithm::rpm_n: return rpm_n_step(std::move(state), instance, config);
    case Algorithm::rpm_wb: return rpm_wb_step(std::move(state), instance, config);
  }
  throw std::invalid_argument("advance_state: unknown algorithm");
}

// ---------------------------------------------------------------------------
// Full run with metric tracing.
// ---------------------------------------------------------------------------

/// Runs the configured algorithm and records one row per iteration.  Row k
/// describes the state before step k acts: the iterate x^k and the running
/// average xbar^k = (x^0 + ... + x^{k-1})/k (xbar^0 = x^0).  Objective gaps
/// are NaN when the instance carries no reference solution; the distance to
/// the feasible set is evaluated every `full_metric_stride` rows (and on the
/// final row) and is NaN elsewhere.
inline RunTrace run(const ProblemInstance& instance, const SolverConfig& config) {
  validate_config(config, instance);
  const ProblemInstance effective = apply_grouping(instance, config.constraint_grouping);
  IterateState state = make_initial_state(effective, config);

  const int n = effective.num_summands();
  const long K = config.iterations;
  long stride = config.full_metric_stride;
  if (stride <= 0) {
    long steps_estimate = K;
    if (steps_estimate == 0) {
      // budget-driven run: estimate the step count from the per-step cost
      long per_step = 1;
      switch (config.algorithm) {
        case Algorithm::vr3pm: per_step = std::max(1, 3 * config.batch_size); break;
        case Algorithm::r2pm_b: per_step = config.batch_size; break;
        case Algorithm::r2pm_n: per_step = n; break;
        default: per_step = 1; break;
      }
      steps_estimate = config.grad_eval_budget / per_step;
    }
    stride = std::max<long>(1, (steps_estimate + 499) / 500);
  }

  RunTrace trace;
  trace.header.algorithm = to_string(config.algorithm);
  trace.header.schedule = config.schedule.describe();
  trace.header.family = instance.metadata().family;
  trace.header.seed = config.seed;
  trace.header.n = n;
  trace.header.m = instance.num_constraints();
  trace.header.d = static_cast<int>(instance.dimension());
  trace.header.batch_size = config.batch_size;
  trace.header.epoch_length = resolved_epoch_length(config, n);
  trace.header.constraint_grouping = config.constraint_grouping;
  trace.header.relaxation = config.relaxation;
  trace.header.iterations = config.iterations;
  trace.header.grad_eval_budget = config.grad_eval_budget;
  trace.x_initial = state.x;

  const AggregateQuadratic fast_f(effective.objective());
  const std::optional<ReferenceSolution>& reference = instance.metadata().reference;
  const double f_star = reference ? reference->f_star : std::numeric_limits<double>::quiet_NaN();
  FeasibilityProjector feasible_set(effective);

  Vector sum_before = Vector::Zero(effective.dimension());  // x^0 + ... + x^{k-1}
  const auto t0 = std::chrono::steady_clock::now();
  auto seconds_since_start = [&t0]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  long k = 0;
  while (true) {
    const bool iteration_stop = K > 0 && k >= K;
    const bool budget_stop = config.grad_eval_budget > 0 && state.grad_evals >= config.grad_eval_budget;
    const bool final_row = iteration_stop || budget_stop;

    const Vector average = (k == 0) ? state.x : Vector(sum_before / static_cast<double>(k));
    TraceRow row;
    row.iter = k;
    row.epoch = detail::epoch_of(config, n, k);
    row.time_s = seconds_since_start();
    row.grad_evals = state.grad_evals;
    row.f_gap_iterate = fast_f.value(state.x) - f_star;
    row.f_gap_average = fast_f.value(average) - f_star;
    row.max_violation_average = max_violation(effective, average);
    if (final_row || k % stride == 0) {
      try {
        const double dist = feasible_set.project(average).distance;
        row.dist2_C_average = dist * dist;
      } catch (const DykstraError& e) {
        row.dist2_C_average = e.report.distance * e.report.distance;  // best available estimate
      }
    }
    trace.rows.push_back(row);

    if (final_row) {
      trace.x_final = state.x;
      trace.x_average_final = average;
      break;
    }

    sum_before += state.x;
    try {
      state = advance_state(std::move(state), effective, config);
    } catch (DivergenceError& e) {
      e.partial_trace = std::make_shared<RunTrace>(trace);
      throw;
    }
    k = state.k;
  }

  const TraceRow& last = trace.rows.back();
  trace.summary.iterations_completed = last.iter;
  trace.summary.grad_evals = last.grad_evals;
  trace.summary.time_s = last.time_s;
  trace.summary.final_f_gap_iterate = last.f_gap_iterate;
  trace.summary.final_f_gap_average = last.f_gap_average;
  trace.summary.final_max_violation_average = last.max_violation_average;
  trace.summary.final_dist2_C_average = last.dist2_C_average;
  return trace;
}

}  // namespace rrpm
