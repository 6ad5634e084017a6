#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rrpm/generators.hpp"
#include "rrpm/metrics.hpp"
#include "rrpm/reference.hpp"
#include "rrpm/schedule.hpp"
#include "rrpm/serialize.hpp"
#include "rrpm/solvers.hpp"

namespace rrpm {

// ---------------------------------------------------------------------------
// Schedule specs that may depend on the instance.
// ---------------------------------------------------------------------------

/// A schedule request: either one of the concrete kinds, "default" (the
/// per-algorithm default), or "theorem" (sqrt decay sized from the problem
/// constants, with kappa and rho supplied by the caller).
struct ScheduleSpec {
  std::string kind = "default";
  double base = 0.0;
  double exponent = 0.0;
  double kappa = 1.0;
  double rho = 1.0;
};

inline StepSchedule resolve_schedule(const ScheduleSpec& spec, Algorithm algorithm,
                                     const ProblemInstance& instance) {
  if (spec.kind == "default") return default_schedule(algorithm);
  if (spec.kind == "constant") return StepSchedule::constant(spec.base);
  if (spec.kind == "power") return StepSchedule::power(spec.base, spec.exponent);
  if (spec.kind == "epoch_constant") return StepSchedule::epoch_constant(spec.base, spec.exponent);
  if (spec.kind == "theorem") {
    return sqrt_decay_from_constants(instance.objective().lipschitz_aggregate(),
                                     instance.num_constraints(), spec.kappa, spec.rho);
  }
  throw std::invalid_argument("schedule: unknown kind '" + spec.kind + "'");
}

inline json schedule_spec_to_json(const ScheduleSpec& s) {
  json out{{"kind", s.kind}};
  if (s.kind == "constant" || s.kind == "power" || s.kind == "epoch_constant") {
    out["base"] = s.base;
    if (s.kind != "constant") out["exponent"] = s.exponent;
  }
  if (s.kind == "theorem") {
    out["kappa"] = s.kappa;
    out["rho"] = s.rho;
  }
  return out;
}

inline ScheduleSpec schedule_spec_from_json(const json& j) {
  ScheduleSpec s;
  s.kind = j.at("kind").get<std::string>();
  s.base = j.value("base", 0.0);
  s.exponent = j.value("exponent", 0.0);
  s.kappa = j.value("kappa", 1.0);
  s.rho = j.value("rho", 1.0);
  return s;
}

// ---------------------------------------------------------------------------
// Experiment configuration.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::optional<GeneratorSpec> generator;     // exactly one instance source
  std::optional<std::string> instance_file;
  std::vector<Algorithm> algorithms = {Algorithm::vr3pm, Algorithm::r2pm_1, Algorithm::r2pm_b,
                                       Algorithm::r2pm_n};
  int batch_size = 5;
  int epoch_length = 0;       // 0 = ceil(n/b)
  int constraint_grouping = 5;
  double relaxation = 1.0;
  std::map<std::string, ScheduleSpec> schedules;  // keyed by algorithm name
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  long iterations = 0;
  long budget_grads = 0;
  std::string out_dir;        // empty = keep results in memory only
  long full_metric_stride = 0;
  double reference_tol = 1e-8;
  bool with_reference = true;
  int workers = 0;            // 0 = RRPM_WORKERS env, then hardware concurrency
};

inline json experiment_config_to_json(const ExperimentConfig& c) {
  json out;
  if (c.generator.has_value()) out["instance"] = json{{"generator", generator_spec_to_json(*c.generator)}};
  if (c.instance_file.has_value()) out["instance"] = json{{"file", *c.instance_file}};
  json algs = json::array();
  for (Algorithm a : c.algorithms) algs.push_back(to_string(a));
  out["algorithms"] = algs;
  out["b"] = c.batch_size;
  out["r"] = c.epoch_length;
  out["grouping"] = c.constraint_grouping;
  out["beta"] = c.relaxation;
  if (!c.schedules.empty()) {
    json sched;
    for (const auto& [name, spec] : c.schedules) sched[name] = schedule_spec_to_json(spec);
    out["schedules"] = sched;
  }
  out["seeds"] = c.seeds;
  out["iterations"] = c.iterations;
  out["budget_grads"] = c.budget_grads;
  out["out"] = c.out_dir;
  out["full_metric_stride"] = c.full_metric_stride;
  out["reference_tol"] = c.reference_tol;
  out["reference"] = c.with_reference;
  out["workers"] = c.workers;
  return out;
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("instance")) {
    const json& src = j.at("instance");
    if (src.contains("generator")) c.generator = generator_spec_from_json(src.at("generator"));
    if (src.contains("file")) c.instance_file = src.at("file").get<std::string>();
  }
  if (j.contains("algorithms")) {
    c.algorithms.clear();
    for (const auto& name : j.at("algorithms")) {
      c.algorithms.push_back(algorithm_from_string(name.get<std::string>()));
    }
  }
  c.batch_size = j.value("b", c.batch_size);
  c.epoch_length = j.value("r", c.epoch_length);
  c.constraint_grouping = j.value("grouping", c.constraint_grouping);
  c.relaxation = j.value("beta", c.relaxation);
  if (j.contains("schedules")) {
    for (const auto& [name, spec] : j.at("schedules").items()) {
      c.schedules[name] = schedule_spec_from_json(spec);
    }
  }
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.iterations = j.value("iterations", c.iterations);
  c.budget_grads = j.value("budget_grads", c.budget_grads);
  c.out_dir = j.value("out", c.out_dir);
  c.full_metric_stride = j.value("full_metric_stride", c.full_metric_stride);
  c.reference_tol = j.value("reference_tol", c.reference_tol);
  c.with_reference = j.value("reference", c.with_reference);
  c.workers = j.value("workers", c.workers);
  return c;
}

// ---------------------------------------------------------------------------
// Execution.
// ---------------------------------------------------------------------------

struct ExperimentRun {
  Algorithm algorithm = Algorithm::vr3pm;
  std::uint64_t seed = 0;
  RunTrace trace;
  bool diverged = false;
  std::string trace_file;  // relative to out_dir when written
};

struct ExperimentResult {
  ProblemInstance instance;
  std::vector<ExperimentRun> runs;
  json summary;
};

namespace detail {

inline int resolve_workers(int configured) {
  if (configured > 0) return configured;
  if (const char* env = std::getenv("RRPM_WORKERS")) {
    char* end = nullptr;
    const long parsed = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || parsed < 1) {
      throw std::invalid_argument("RRPM_WORKERS must be a positive integer");
    }
    return static_cast<int>(parsed);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline double median_ignoring_nan(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return std::isnan(v); }),
               values.end());
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

inline SolverConfig solver_config_for(const ExperimentConfig& config, Algorithm algorithm,
                                      std::uint64_t seed, const ProblemInstance& instance) {
  SolverConfig sc;
  sc.algorithm = algorithm;
  const auto it = config.schedules.find(to_string(algorithm));
  sc.schedule = it != config.schedules.end() ? resolve_schedule(it->second, algorithm, instance)
                                             : default_schedule(algorithm);
  sc.batch_size = config.batch_size;
  sc.epoch_length = config.epoch_length;
  // Direct set projections admit no subgradient grouping; run that baseline
  // on the ungrouped constraints.
  sc.constraint_grouping = algorithm == Algorithm::rpm_wb ? 1 : config.constraint_grouping;
  sc.relaxation = config.relaxation;
  sc.seed = seed;
  sc.iterations = config.iterations;
  sc.grad_eval_budget = config.budget_grads;
  sc.full_metric_stride = config.full_metric_stride;
  return sc;
}

}  // namespace detail

/// Loads or generates the instance, attaches a certified reference solution
/// when requested and affordable, then runs every (algorithm, seed) pair.
/// Results are assembled in job order regardless of the worker pool size, so
/// output does not depend on scheduling.  A diverged run is recorded with its
/// partial trace instead of aborting the experiment.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.generator.has_value() == config.instance_file.has_value()) {
    throw std::invalid_argument("experiment: exactly one of generator or instance file required");
  }
  if (config.algorithms.empty()) throw std::invalid_argument("experiment: no algorithms");
  if (config.seeds.empty()) throw std::invalid_argument("experiment: no seeds");

  ProblemInstance instance = config.generator.has_value() ? generate(*config.generator)
                                                          : load_instance(*config.instance_file);
  if (config.with_reference && !instance.metadata().reference.has_value()) {
    ReferenceOptions opts;
    opts.tol = config.reference_tol;
    if (instance.dimension() <= opts.max_dimension) {
      instance = instance.with_reference(solve_reference(instance, opts));
    }
  }

  std::vector<std::pair<Algorithm, std::uint64_t>> jobs;
  for (Algorithm a : config.algorithms) {
    for (std::uint64_t seed : config.seeds) jobs.emplace_back(a, seed);
  }

  std::vector<ExperimentRun> runs(jobs.size());
  std::vector<std::exception_ptr> failures(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t idx; (idx = next.fetch_add(1)) < jobs.size();) {
      const auto [algorithm, seed] = jobs[idx];
      ExperimentRun& slot = runs[idx];
      slot.algorithm = algorithm;
      slot.seed = seed;
      try {
        slot.trace = run(instance, detail::solver_config_for(config, algorithm, seed, instance));
      } catch (const DivergenceError& e) {
        slot.diverged = true;
        if (e.partial_trace) slot.trace = *e.partial_trace;
      } catch (...) {
        failures[idx] = std::current_exception();
      }
    }
  };

  const int workers = std::min<int>(detail::resolve_workers(config.workers),
                                    static_cast<int>(jobs.size()));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }

  // Summary: per-run records plus per-algorithm medians over seeds.
  json run_records = json::array();
  std::map<std::string, std::vector<double>> gap_by_alg, dist_by_alg, viol_by_alg;
  for (const auto& r : runs) {
    json record{{"header", run_header_to_json(r.trace.header)},
                {"summary", run_summary_to_json(r.trace.summary)},
                {"diverged", r.diverged}};
    run_records.push_back(record);
    const std::string name = to_string(r.algorithm);
    gap_by_alg[name].push_back(r.diverged ? std::numeric_limits<double>::quiet_NaN()
                                          : r.trace.summary.final_f_gap_average);
    dist_by_alg[name].push_back(r.diverged ? std::numeric_limits<double>::quiet_NaN()
                                           : r.trace.summary.final_dist2_C_average);
    viol_by_alg[name].push_back(r.diverged ? std::numeric_limits<double>::quiet_NaN()
                                           : r.trace.summary.final_max_violation_average);
  }
  auto number_or_null = [](double v) { return std::isnan(v) ? json() : json(v); };
  json medians;
  for (const auto& [name, gaps] : gap_by_alg) {
    medians[name] = json{
        {"final_f_gap_average", number_or_null(detail::median_ignoring_nan(gaps))},
        {"final_dist2_C_average", number_or_null(detail::median_ignoring_nan(dist_by_alg[name]))},
        {"final_max_violation_average",
         number_or_null(detail::median_ignoring_nan(viol_by_alg[name]))}};
  }

  json instance_info{{"family", instance.metadata().family},
                     {"n", instance.num_summands()},
                     {"m", instance.num_constraints()},
                     {"d", instance.dimension()},
                     {"seed", instance.metadata().seed}};
  if (instance.metadata().reference.has_value()) {
    instance_info["f_star"] = instance.metadata().reference->f_star;
    instance_info["reference_tol"] = instance.metadata().reference->tol;
  }

  ExperimentResult result{std::move(instance), std::move(runs), json()};
  result.summary = json{{"instance", instance_info},
                        {"config", experiment_config_to_json(config)},
                        {"runs", run_records},
                        {"medians", medians}};

  if (!config.out_dir.empty()) {
    const std::filesystem::path dir(config.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    save_instance(result.instance, dir / "instance.json");
    for (std::size_t i = 0; i < result.runs.size(); ++i) {
      auto& r = result.runs[i];
      r.trace_file = to_string(r.algorithm) + "_seed" + std::to_string(r.seed) + ".csv";
      save_trace_csv(r.trace, dir / r.trace_file);
      result.summary["runs"][i]["file"] = r.trace_file;
    }
    std::ofstream out(dir / "summary.json");
    if (!out) throw std::runtime_error("cannot open for writing: " + (dir / "summary.json").string());
    out << result.summary.dump(2) << '\n';
  }
  return result;
}

// ---------------------------------------------------------------------------
// Rate-verification experiment.
// ---------------------------------------------------------------------------

struct RateExperimentConfig {
  std::optional<GeneratorSpec> generator;
  std::optional<std::string> instance_file;
  Algorithm algorithm = Algorithm::vr3pm;
  ScheduleSpec schedule{"power", 0.01, 0.5, 1.0, 1.0};
  int batch_size = 5;
  int epoch_length = 0;
  int constraint_grouping = 5;
  std::uint64_t seed = 1;
  long iterations = 100000;
  long window_lo = 1000;   // fit window in iterations
  long window_hi = 0;      // 0 = last iteration
  double reference_tol = 1e-8;
  std::string out_dir;
};

inline json rate_config_to_json(const RateExperimentConfig& c) {
  json out;
  if (c.generator.has_value()) out["instance"] = json{{"generator", generator_spec_to_json(*c.generator)}};
  if (c.instance_file.has_value()) out["instance"] = json{{"file", *c.instance_file}};
  out["algorithm"] = to_string(c.algorithm);
  out["schedule"] = schedule_spec_to_json(c.schedule);
  out["b"] = c.batch_size;
  out["r"] = c.epoch_length;
  out["grouping"] = c.constraint_grouping;
  out["seed"] = c.seed;
  out["iterations"] = c.iterations;
  out["window_lo"] = c.window_lo;
  out["window_hi"] = c.window_hi;
  out["reference_tol"] = c.reference_tol;
  out["out"] = c.out_dir;
  return out;
}

inline RateExperimentConfig rate_config_from_json(const json& j) {
  RateExperimentConfig c;
  if (j.contains("instance")) {
    const json& src = j.at("instance");
    if (src.contains("generator")) c.generator = generator_spec_from_json(src.at("generator"));
    if (src.contains("file")) c.instance_file = src.at("file").get<std::string>();
  }
  if (j.contains("algorithm")) c.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  if (j.contains("schedule")) c.schedule = schedule_spec_from_json(j.at("schedule"));
  c.batch_size = j.value("b", c.batch_size);
  c.epoch_length = j.value("r", c.epoch_length);
  c.constraint_grouping = j.value("grouping", c.constraint_grouping);
  c.seed = j.value("seed", c.seed);
  c.iterations = j.value("iterations", c.iterations);
  c.window_lo = j.value("window_lo", c.window_lo);
  c.window_hi = j.value("window_hi", c.window_hi);
  c.reference_tol = j.value("reference_tol", c.reference_tol);
  c.out_dir = j.value("out", c.out_dir);
  return c;
}

struct RateExperimentResult {
  RunTrace trace;
  // A fit is absent when its metric has no positive samples in the window,
  // e.g. the averaged iterate stays exactly feasible on an easy instance.
  std::optional<RateFit> f_gap_fit;
  std::optional<RateFit> dist2_fit;
  json summary;
};

/// One long run plus log-log slope fits of the averaged-iterate metrics.
inline RateExperimentResult run_rate_experiment(const RateExperimentConfig& config) {
  if (config.generator.has_value() == config.instance_file.has_value()) {
    throw std::invalid_argument("rates: exactly one of generator or instance file required");
  }
  ProblemInstance instance = config.generator.has_value() ? generate(*config.generator)
                                                          : load_instance(*config.instance_file);
  if (!instance.metadata().reference.has_value()) {
    ReferenceOptions opts;
    opts.tol = config.reference_tol;
    instance = instance.with_reference(solve_reference(instance, opts));
  }

  SolverConfig sc;
  sc.algorithm = config.algorithm;
  sc.schedule = resolve_schedule(config.schedule, config.algorithm, instance);
  sc.batch_size = config.batch_size;
  sc.epoch_length = config.epoch_length;
  sc.constraint_grouping =
      config.algorithm == Algorithm::rpm_wb ? 1 : config.constraint_grouping;
  sc.seed = config.seed;
  sc.iterations = config.iterations;

  RateExperimentResult result;
  result.trace = run(instance, sc);
  const long hi = config.window_hi > 0 ? config.window_hi : config.iterations;
  if (config.window_lo < 1 || hi < config.window_lo) {
    throw std::invalid_argument("rates: invalid fit window");
  }
  // The averaged iterate can sit slightly infeasible with objective below
  // f*, so the gap decays through zero noise; fit its absolute value.
  RunTrace gap_trace;
  gap_trace.rows = result.trace.rows;
  for (auto& row : gap_trace.rows) row.f_gap_average = std::abs(row.f_gap_average);
  auto try_fit = [&](const RunTrace& t, const char* metric) -> std::optional<RateFit> {
    try {
      return fit_rate(t, metric, config.window_lo, hi);
    } catch (const std::invalid_argument&) {
      return std::nullopt;  // metric never left zero in the window
    }
  };
  result.f_gap_fit = try_fit(gap_trace, "f_gap_average");
  result.dist2_fit = try_fit(result.trace, "dist2_C_average");

  auto fit_to_json = [](const std::optional<RateFit>& f) {
    if (!f.has_value()) return json{{"defined", false}};
    return json{{"defined", true},
                {"slope", f->slope},
                {"ci_lower", f->ci_lower},
                {"ci_upper", f->ci_upper},
                {"points", f->points}};
  };
  result.summary = json{{"header", run_header_to_json(result.trace.header)},
                        {"window", json{{"lo", config.window_lo}, {"hi", hi}}},
                        {"f_gap_average", fit_to_json(result.f_gap_fit)},
                        {"dist2_C_average", fit_to_json(result.dist2_fit)},
                        {"final", run_summary_to_json(result.trace.summary)}};

  if (!config.out_dir.empty()) {
    const std::filesystem::path dir(config.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    save_trace_csv(result.trace, dir / "trace.csv");
    std::ofstream out(dir / "rates.json");
    if (!out) throw std::runtime_error("cannot open for writing: " + (dir / "rates.json").string());
    out << result.summary.dump(2) << '\n';
  }
  return result;
}

}  // namespace rrpm
