#include "rrpm/experiment.hpp"
#include "rrpm/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace {

using rrpm::Matrix;
using rrpm::Vector;

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::error_code ec; std::filesystem::remove_all(path, ec); }
};

rrpm::ProblemInstance halfplane_instance() {
  std::vector<rrpm::QuadraticSummand> summands;
  summands.emplace_back(Matrix::Identity(2, 2), Vector::Zero(2));
  std::vector<rrpm::ConstraintFunction> constraints;
  constraints.push_back(rrpm::ConstraintFunction::affine(vec2(1.0, 0.0), 0.0));  // x1 <= 0
  return rrpm::ProblemInstance(std::move(summands), std::move(constraints),
                               rrpm::SimpleSet::box(vec2(-2.0, -2.0), vec2(2.0, 2.0)),
                               rrpm::InstanceMetadata{});
}

TEST(Metrics, GapViolationAndDistance) {
  rrpm::ProblemInstance inst = halfplane_instance();
  rrpm::MetricRecord rec = rrpm::compute_metrics(inst, vec2(0.5, 0.0));
  EXPECT_TRUE(std::isnan(rec.f_gap));  // no reference attached
  EXPECT_DOUBLE_EQ(rec.max_violation, 0.5);
  EXPECT_NEAR(rec.dist2_C, 0.25, 1e-10);
  EXPECT_FALSE(rec.dist2_is_estimate);

  rrpm::ReferenceSolution ref;
  ref.x_star = vec2(0.0, 0.0);
  ref.f_star = 0.0;
  ref.max_violation = 0.0;
  ref.residual = 0.0;
  ref.iterations = 1;
  ref.tol = 1e-10;
  rrpm::ProblemInstance with = inst.with_reference(ref);
  rrpm::MetricRecord rec2 = rrpm::compute_metrics(with, vec2(0.5, 0.0));
  EXPECT_DOUBLE_EQ(rec2.f_gap, 0.25);
}

TEST(RateFit, RecoversExactPowerLaw) {
  rrpm::RunTrace trace;
  for (long k = 0; k <= 500; ++k) {
    rrpm::TraceRow row;
    row.iter = k;
    if (k >= 1) {
      row.f_gap_average = 3.0 * std::pow(static_cast<double>(k), -0.8);
      row.dist2_C_average = 0.5 * std::pow(static_cast<double>(k), -1.1);
    }
    trace.rows.push_back(row);
  }
  rrpm::RateFit fit = rrpm::fit_rate(trace, "f_gap_average", 10, 500);
  EXPECT_NEAR(fit.slope, -0.8, 1e-9);
  EXPECT_NEAR(fit.intercept, std::log(3.0), 1e-9);
  // Residuals are pure rounding noise, so the bootstrap interval collapses
  // onto the slope up to that noise.
  EXPECT_LE(fit.ci_lower, fit.slope + 1e-9);
  EXPECT_GE(fit.ci_upper, fit.slope - 1e-9);
  EXPECT_NEAR(fit.ci_lower, -0.8, 1e-6);
  EXPECT_EQ(fit.points, 491);

  rrpm::RateFit dfit = rrpm::fit_rate(trace, "dist2_C_average", 10, 500);
  EXPECT_NEAR(dfit.slope, -1.1, 1e-9);
}

TEST(RateFit, RejectsBadWindowsAndThinData) {
  rrpm::RunTrace trace;
  for (long k = 0; k <= 30; ++k) {
    rrpm::TraceRow row;
    row.iter = k;
    row.f_gap_average = (k >= 1 && k <= 10) ? 1.0 / k : std::nan("");
    trace.rows.push_back(row);
  }
  EXPECT_THROW(rrpm::fit_rate(trace, "f_gap_average", 0, 10), std::invalid_argument);
  EXPECT_THROW(rrpm::fit_rate(trace, "f_gap_average", 5, 4), std::invalid_argument);
  EXPECT_THROW(rrpm::fit_rate(trace, "f_gap_average", 1, 30), std::invalid_argument);
  EXPECT_THROW(rrpm::fit_rate(trace, "no_such_metric", 1, 30), std::invalid_argument);
}

TEST(RegularityProbe, SingleHalfspaceHasUnitConstant) {
  rrpm::ProblemInstance inst = halfplane_instance();
  rrpm::RegularityEstimate est = rrpm::probe_regularity(inst, 200, 3);
  ASSERT_TRUE(est.defined);
  EXPECT_EQ(est.total_samples, 200);
  EXPECT_GT(est.infeasible_samples, 0);
  EXPECT_NEAR(est.kappa_hat, 1.0, 1e-9);  // dist equals phi / |xi| exactly
  EXPECT_GE(est.kappa_hat, 1.0 - 1e-12);
  EXPECT_GT(est.witness[0], 0.0);
}

TEST(RegularityProbe, CornerIntersectionExceedsOne) {
  std::vector<rrpm::QuadraticSummand> summands;
  summands.emplace_back(Matrix::Identity(2, 2), Vector::Zero(2));
  std::vector<rrpm::ConstraintFunction> constraints;
  constraints.push_back(rrpm::ConstraintFunction::affine(vec2(1.0, 0.0), 0.0));
  constraints.push_back(rrpm::ConstraintFunction::affine(vec2(0.0, 1.0), 0.0));
  rrpm::ProblemInstance inst(std::move(summands), std::move(constraints),
                             rrpm::SimpleSet::box(vec2(-2.0, -2.0), vec2(2.0, 2.0)),
                             rrpm::InstanceMetadata{});
  rrpm::RegularityEstimate est = rrpm::probe_regularity(inst, 500, 7);
  ASSERT_TRUE(est.defined);
  // Points near the diagonal give dist/denominator close to sqrt(2).
  EXPECT_GT(est.kappa_hat, 1.2);
  EXPECT_LT(est.kappa_hat, std::sqrt(2.0) + 1e-9);

  rrpm::RegularityEstimate boxed = rrpm::probe_regularity(
      inst, 100, 7, std::make_pair(vec2(-1.0, -1.0), vec2(-0.5, -0.5)));
  EXPECT_FALSE(boxed.defined);  // sample box entirely feasible
  EXPECT_EQ(boxed.infeasible_samples, 0);

  EXPECT_THROW(rrpm::probe_regularity(inst, 0, 1), std::invalid_argument);
  EXPECT_THROW(rrpm::probe_regularity(inst, 10, 1, std::make_pair(vec2(1.0, 1.0), vec2(0.0, 0.0))),
               std::invalid_argument);
}

TEST(ScheduleResolution, DefaultTheoremAndConcrete) {
  rrpm::GeneratorSpec spec;
  spec.family = "lcqp";
  spec.n = 4;
  spec.m = 2;
  spec.d = 3;
  spec.p = 2;
  spec.seed = 1;
  rrpm::ProblemInstance inst = rrpm::generate(spec);

  rrpm::ScheduleSpec dflt;  // kind = "default"
  rrpm::StepSchedule s1 = rrpm::resolve_schedule(dflt, rrpm::Algorithm::vr3pm, inst);
  EXPECT_EQ(s1.describe(), rrpm::default_schedule(rrpm::Algorithm::vr3pm).describe());
  rrpm::StepSchedule s2 = rrpm::resolve_schedule(dflt, rrpm::Algorithm::rpm_n, inst);
  EXPECT_EQ(s2.describe(), rrpm::default_schedule(rrpm::Algorithm::rpm_n).describe());

  rrpm::ScheduleSpec thm;
  thm.kind = "theorem";
  thm.kappa = 2.0;
  thm.rho = 0.5;
  rrpm::StepSchedule s3 = rrpm::resolve_schedule(thm, rrpm::Algorithm::vr3pm, inst);
  const double L = inst.objective().lipschitz_aggregate();
  EXPECT_NEAR(s3.at(0), 0.5 / (16.0 * L * 2.0 * 4.0), 1e-15);
  EXPECT_NEAR(s3.at(3) * 2.0, s3.at(0), 1e-15);  // 1/sqrt(k+1) decay

  rrpm::ScheduleSpec pow;
  pow.kind = "power";
  pow.base = 0.7;
  pow.exponent = 0.6;
  EXPECT_EQ(rrpm::resolve_schedule(pow, rrpm::Algorithm::r2pm_1, inst).describe(), "power(0.7,0.6)");

  rrpm::ScheduleSpec bad;
  bad.kind = "mystery";
  EXPECT_THROW(rrpm::resolve_schedule(bad, rrpm::Algorithm::r2pm_1, inst), std::invalid_argument);
}

TEST(Experiment, RunsGridAndWritesArtifacts) {
  TempDir dir("rrpm_experiment_test");
  rrpm::ExperimentConfig cfg;
  rrpm::GeneratorSpec spec;
  spec.family = "lcqp";
  spec.n = 8;
  spec.m = 4;
  spec.d = 5;
  spec.p = 2;
  spec.seed = 3;
  cfg.generator = spec;
  cfg.algorithms = {rrpm::Algorithm::vr3pm, rrpm::Algorithm::r2pm_1};
  cfg.batch_size = 2;
  cfg.constraint_grouping = 2;
  cfg.seeds = {1, 2};
  cfg.iterations = 60;
  cfg.out_dir = dir.path.string();
  cfg.workers = 2;

  rrpm::ExperimentResult result = rrpm::run_experiment(cfg);
  ASSERT_EQ(result.runs.size(), 4u);
  EXPECT_TRUE(result.instance.metadata().reference.has_value());
  for (const auto& r : result.runs) {
    EXPECT_FALSE(r.diverged);
    EXPECT_EQ(r.trace.summary.iterations_completed, 60);
    EXPECT_FALSE(std::isnan(r.trace.summary.final_f_gap_average));
  }
  // Jobs are ordered algorithm-major regardless of worker scheduling.
  EXPECT_EQ(result.runs[0].algorithm, rrpm::Algorithm::vr3pm);
  EXPECT_EQ(result.runs[0].seed, 1u);
  EXPECT_EQ(result.runs[3].algorithm, rrpm::Algorithm::r2pm_1);
  EXPECT_EQ(result.runs[3].seed, 2u);

  EXPECT_TRUE(std::filesystem::exists(dir.path / "instance.json"));
  EXPECT_TRUE(std::filesystem::exists(dir.path / "summary.json"));
  EXPECT_TRUE(std::filesystem::exists(dir.path / "vr3pm_seed1.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir.path / "r2pm-1_seed2.csv"));

  ASSERT_TRUE(result.summary.contains("medians"));
  ASSERT_TRUE(result.summary["medians"].contains("vr3pm"));
  EXPECT_TRUE(result.summary["medians"]["vr3pm"].contains("final_f_gap_average"));

  // Single worker reproduces the same numbers in the same slots.
  cfg.out_dir.clear();
  cfg.workers = 1;
  rrpm::ExperimentResult serial = rrpm::run_experiment(cfg);
  for (std::size_t i = 0; i < serial.runs.size(); ++i) {
    EXPECT_EQ(serial.runs[i].trace.summary.final_f_gap_average,
              result.runs[i].trace.summary.final_f_gap_average);
    EXPECT_EQ(serial.runs[i].trace.x_final, result.runs[i].trace.x_final);
  }
}

TEST(Experiment, ConfigSourceValidation) {
  rrpm::ExperimentConfig cfg;
  cfg.iterations = 10;
  EXPECT_THROW(rrpm::run_experiment(cfg), std::invalid_argument);  // no source
  rrpm::GeneratorSpec spec;
  cfg.generator = spec;
  cfg.instance_file = "also.json";
  EXPECT_THROW(rrpm::run_experiment(cfg), std::invalid_argument);  // two sources
}

TEST(Experiment, ConfigJsonRoundTrip) {
  rrpm::ExperimentConfig cfg;
  rrpm::GeneratorSpec spec;
  spec.family = "qcqp";
  spec.n = 5;
  spec.seed = 10;
  cfg.generator = spec;
  cfg.algorithms = {rrpm::Algorithm::rpm_n, rrpm::Algorithm::rpm_wb};
  cfg.batch_size = 3;
  cfg.seeds = {4, 5, 6};
  cfg.budget_grads = 1234;
  rrpm::ScheduleSpec sched;
  sched.kind = "power";
  sched.base = 0.4;
  sched.exponent = 0.9;
  cfg.schedules["rpm-n"] = sched;

  const auto j = rrpm::experiment_config_to_json(cfg);
  rrpm::ExperimentConfig back = rrpm::experiment_config_from_json(j);
  ASSERT_TRUE(back.generator.has_value());
  EXPECT_EQ(back.generator->family, "qcqp");
  EXPECT_EQ(back.generator->seed, 10u);
  ASSERT_EQ(back.algorithms.size(), 2u);
  EXPECT_EQ(back.algorithms[1], rrpm::Algorithm::rpm_wb);
  EXPECT_EQ(back.seeds, (std::vector<std::uint64_t>{4, 5, 6}));
  EXPECT_EQ(back.budget_grads, 1234);
  ASSERT_EQ(back.schedules.count("rpm-n"), 1u);
  EXPECT_DOUBLE_EQ(back.schedules["rpm-n"].base, 0.4);
}

TEST(Experiment, RateRunFitsBothMetrics) {
  TempDir dir("rrpm_rate_test");
  // min (x1^2 - 4 x1 + x2^2)/2 over {x1 <= 0, x2 <= 5}: the gradient pulls
  // toward x1 = 2, the cuts push back, so iterates hover slightly infeasible
  // and both the averaged gap and the averaged distance stay measurable.
  std::vector<rrpm::QuadraticSummand> summands;
  Matrix a1(1, 2), a2(1, 2);
  a1 << 1.0, 0.0;
  a2 << 0.0, 1.0;
  Vector l1(2), l2(2);
  l1 << -4.0, 0.0;
  l2 << 0.0, 0.0;
  summands.emplace_back(a1, l1);
  summands.emplace_back(a2, l2);
  std::vector<rrpm::ConstraintFunction> constraints;
  constraints.push_back(rrpm::ConstraintFunction::affine(vec2(1.0, 0.0), 0.0));
  constraints.push_back(rrpm::ConstraintFunction::affine(vec2(0.0, 1.0), 5.0));
  rrpm::InstanceMetadata meta;
  meta.reference = rrpm::ReferenceSolution{vec2(0.0, 0.0), 0.0, 0.0, 0.0};
  rrpm::ProblemInstance inst(std::move(summands), std::move(constraints),
                             rrpm::SimpleSet::whole_space(), std::move(meta));
  std::filesystem::create_directories(dir.path);
  const std::filesystem::path inst_file = dir.path / "instance.json";
  rrpm::save_instance(inst, inst_file);

  rrpm::RateExperimentConfig cfg;
  cfg.instance_file = inst_file.string();
  cfg.algorithm = rrpm::Algorithm::vr3pm;
  cfg.schedule = rrpm::ScheduleSpec{"power", 0.05, 0.5, 1.0, 1.0};
  cfg.batch_size = 2;
  cfg.constraint_grouping = 1;
  cfg.iterations = 3000;
  cfg.window_lo = 100;
  cfg.out_dir = dir.path.string();

  rrpm::RateExperimentResult result = rrpm::run_rate_experiment(cfg);
  ASSERT_TRUE(result.f_gap_fit.has_value());
  ASSERT_TRUE(result.dist2_fit.has_value());
  EXPECT_TRUE(std::isfinite(result.f_gap_fit->slope));
  EXPECT_LT(result.f_gap_fit->slope, 0.0);  // averaged gap decays on this instance
  EXPECT_GE(result.f_gap_fit->points, 20);
  EXPECT_TRUE(std::filesystem::exists(dir.path / "trace.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir.path / "rates.json"));

  std::ifstream in(dir.path / "rates.json");
  rrpm::json j;
  in >> j;
  EXPECT_TRUE(j.contains("f_gap_average"));
  EXPECT_TRUE(j.contains("dist2_C_average"));
  EXPECT_TRUE(j["f_gap_average"]["defined"].get<bool>());
  EXPECT_DOUBLE_EQ(j["f_gap_average"]["slope"].get<double>(), result.f_gap_fit->slope);
}

TEST(Experiment, WorkerEnvParsing) {
  EXPECT_EQ(rrpm::detail::resolve_workers(3), 3);
  setenv("RRPM_WORKERS", "2", 1);
  EXPECT_EQ(rrpm::detail::resolve_workers(0), 2);
  setenv("RRPM_WORKERS", "junk", 1);
  EXPECT_THROW(rrpm::detail::resolve_workers(0), std::invalid_argument);
  unsetenv("RRPM_WORKERS");
  EXPECT_GE(rrpm::detail::resolve_workers(0), 1);
}

}  // namespace
