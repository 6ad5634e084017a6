// Command-line harness: instance generation, certified reference solutions,
// single solver runs, multi-seed comparisons, rate fits, and regularity
// probes.  All failures surface as one JSON object on stderr and a nonzero
// exit code so scripted pipelines can branch on them.

#include "rrpm/rrpm.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

using rrpm::json;

struct ScheduleFlags {
  std::string kind = "default";
  double base = 0.0;
  double exponent = 0.0;
  double kappa = 1.0;
  double rho = 1.0;

  rrpm::ScheduleSpec spec() const { return {kind, base, exponent, kappa, rho}; }

  void attach(CLI::App* cmd) {
    cmd->add_option("--schedule", kind,
                    "step schedule kind: default, constant, power, epoch_constant, theorem");
    cmd->add_option("--base", base, "schedule base step");
    cmd->add_option("--exponent", exponent, "schedule decay exponent");
    cmd->add_option("--kappa", kappa, "regularity constant for the theorem schedule");
    cmd->add_option("--rho", rho, "safety factor for the theorem schedule");
  }
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    if (token.empty()) continue;
    seeds.push_back(std::stoull(token));
  }
  if (seeds.empty()) throw std::invalid_argument("seed list is empty: '" + text + "'");
  return seeds;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed config file " + path + ": " + e.what());
  }
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

// generate: draw an instance, optionally certify it, write it to a file.
struct GenerateCommand {
  rrpm::GeneratorSpec spec;
  std::string out;
  bool with_reference = false;
  double reference_tol = 1e-8;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("generate", "generate a random problem instance");
    cmd->add_option("--family", spec.family, "instance family: lcqp or qcqp");
    cmd->add_option("--n", spec.n, "number of objective summands");
    cmd->add_option("--m", spec.m, "number of constraints");
    cmd->add_option("--d", spec.d, "ambient dimension");
    cmd->add_option("--p", spec.p, "rows in each summand's quadratic block");
    cmd->add_option("--q", spec.q, "rows in each quadratic constraint's block");
    cmd->add_option("--seed", spec.seed, "generator seed");
    cmd->add_option("--w-lower", spec.w_lower, "lower bound of the offset draw");
    cmd->add_option("--w-upper", spec.w_upper, "upper bound of the offset draw");
    cmd->add_option("--box-halfwidth", spec.box_halfwidth, "half-width of the qcqp box");
    cmd->add_option("--out", out, "output instance file")->required();
    cmd->add_flag("--reference", with_reference, "attach a certified reference solution");
    cmd->add_option("--reference-tol", reference_tol, "reference certification tolerance");
    cmd->callback([this]() { run(); });
  }

  void run() const {
    rrpm::ProblemInstance instance = rrpm::generate(spec);
    if (with_reference) {
      rrpm::ReferenceOptions opts;
      opts.tol = reference_tol;
      instance = instance.with_reference(rrpm::solve_reference(instance, opts));
    }
    rrpm::save_instance(instance, out);
    json info{{"file", out},
              {"family", instance.metadata().family},
              {"n", instance.num_summands()},
              {"m", instance.num_constraints()},
              {"d", instance.dimension()},
              {"seed", instance.metadata().seed}};
    if (instance.metadata().reference.has_value()) {
      info["f_star"] = instance.metadata().reference->f_star;
    }
    std::cout << info.dump(2) << '\n';
  }
};

// reference: certify an existing instance file.
struct ReferenceCommand {
  std::string instance_file;
  std::string out;
  double tol = 1e-8;
  long max_iterations = 1000000;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("reference", "attach a certified reference solution");
    cmd->add_option("--instance", instance_file, "instance file")->required();
    cmd->add_option("--tol", tol, "certification tolerance");
    cmd->add_option("--max-iterations", max_iterations, "iteration cap");
    cmd->add_option("--out", out, "output file (default: rewrite the instance in place)");
    cmd->callback([this]() { run(); });
  }

  void run() const {
    rrpm::ProblemInstance instance = rrpm::load_instance(instance_file);
    rrpm::ReferenceOptions opts;
    opts.tol = tol;
    opts.max_iterations = max_iterations;
    const rrpm::ReferenceSolution ref = rrpm::solve_reference(instance, opts);
    instance = instance.with_reference(ref);
    rrpm::save_instance(instance, out.empty() ? instance_file : out);
    std::cout << rrpm::reference_to_json(ref).dump(2) << '\n';
  }
};

// solve: one algorithm, one seed, one trace.
struct SolveCommand {
  std::string instance_file;
  std::string algorithm = "vr3pm";
  ScheduleFlags schedule;
  rrpm::SolverConfig config;
  std::string trace_out;
  std::string summary_out;
  CLI::Option* iterations_option = nullptr;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("solve", "run one algorithm on an instance");
    cmd->add_option("--instance", instance_file, "instance file")->required();
    cmd->add_option("--algorithm", algorithm,
                    "vr3pm, r2pm-1, r2pm-b, r2pm-n, rpm-n, or rpm-wb");
    schedule.attach(cmd);
    cmd->add_option("--b", config.batch_size, "summand batch size");
    cmd->add_option("--r", config.epoch_length, "epoch length (0 = ceil(n/b))");
    cmd->add_option("--grouping", config.constraint_grouping, "constraint group size");
    cmd->add_option("--beta", config.relaxation, "relaxation parameter for rpm-wb");
    cmd->add_option("--seed", config.seed, "run seed");
    iterations_option = cmd->add_option("--iterations", config.iterations, "iteration count");
    cmd->add_option("--budget-grads", config.grad_eval_budget,
                    "stop after this many summand gradient evaluations");
    cmd->add_option("--stride", config.full_metric_stride,
                    "rows between exact feasibility distances (0 = auto)");
    cmd->add_option("--trace", trace_out, "trace CSV output file");
    cmd->add_option("--summary", summary_out, "summary JSON output file");
    cmd->callback([this]() { run(); });
  }

  void run() {
    const rrpm::ProblemInstance instance = rrpm::load_instance(instance_file);
    config.algorithm = rrpm::algorithm_from_string(algorithm);
    config.schedule = rrpm::resolve_schedule(schedule.spec(), config.algorithm, instance);
    if (config.grad_eval_budget > 0 && iterations_option->count() == 0) config.iterations = 0;
    const rrpm::RunTrace trace = rrpm::run(instance, config);
    if (!trace_out.empty()) rrpm::save_trace_csv(trace, trace_out);
    json summary{{"header", rrpm::run_header_to_json(trace.header)},
                 {"summary", rrpm::run_summary_to_json(trace.summary)}};
    if (!summary_out.empty()) write_text(summary_out, summary.dump(2) + "\n");
    std::cout << summary.dump(2) << '\n';
  }
};

// compare: config-driven grid of algorithms x seeds on one instance.
struct CompareCommand {
  std::string config_file;
  std::string seeds_text;
  long budget = -1;
  std::string out_dir;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("compare", "run several algorithms across seeds");
    cmd->add_option("--config", config_file, "experiment config JSON")->required();
    cmd->add_option("--seeds", seeds_text, "comma-separated seed list override");
    cmd->add_option("--budget-grads", budget, "gradient-evaluation budget override");
    cmd->add_option("--out", out_dir, "output directory override");
    cmd->callback([this]() { run(); });
  }

  void run() const {
    rrpm::ExperimentConfig config = rrpm::experiment_config_from_json(load_json_file(config_file));
    if (!seeds_text.empty()) config.seeds = parse_seed_list(seeds_text);
    if (budget >= 0) {
      config.budget_grads = budget;
      if (budget > 0) config.iterations = 0;
    }
    if (!out_dir.empty()) config.out_dir = out_dir;
    const rrpm::ExperimentResult result = rrpm::run_experiment(config);
    std::cout << result.summary.dump(2) << '\n';
  }
};

// rates: one long run plus log-log slope fits.
struct RatesCommand {
  std::string config_file;
  std::string instance_file;
  std::string algorithm = "vr3pm";
  ScheduleFlags schedule;
  rrpm::RateExperimentConfig config;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("rates", "fit decay rates over a long run");
    cmd->add_option("--config", config_file, "rate config JSON");
    cmd->add_option("--instance", instance_file, "instance file (alternative to --config)");
    cmd->add_option("--algorithm", algorithm, "algorithm to run");
    schedule.attach(cmd);
    cmd->add_option("--b", config.batch_size, "summand batch size");
    cmd->add_option("--r", config.epoch_length, "epoch length (0 = ceil(n/b))");
    cmd->add_option("--grouping", config.constraint_grouping, "constraint group size");
    cmd->add_option("--seed", config.seed, "run seed");
    cmd->add_option("--iterations", config.iterations, "iteration count");
    cmd->add_option("--window-lo", config.window_lo, "first iteration of the fit window");
    cmd->add_option("--window-hi", config.window_hi, "last iteration of the fit window (0 = end)");
    cmd->add_option("--reference-tol", config.reference_tol, "reference tolerance");
    cmd->add_option("--out", config.out_dir, "output directory");
    cmd->callback([this]() { run(); });
  }

  void run() {
    if (!config_file.empty()) {
      const std::string out_override = config.out_dir;
      config = rrpm::rate_config_from_json(load_json_file(config_file));
      if (!out_override.empty()) config.out_dir = out_override;
    } else {
      if (instance_file.empty()) {
        throw std::invalid_argument("rates: provide --config or --instance");
      }
      config.instance_file = instance_file;
      config.algorithm = rrpm::algorithm_from_string(algorithm);
      config.schedule = schedule.spec();
    }
    const rrpm::RateExperimentResult result = rrpm::run_rate_experiment(config);
    std::cout << result.summary.dump(2) << '\n';
  }
};

// probe: sample-based lower bound on the regularity constant.
struct ProbeCommand {
  std::string instance_file;
  int samples = 1000;
  std::uint64_t seed = 0;
  std::vector<double> box;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("probe", "estimate the set-regularity constant by sampling");
    cmd->add_option("--instance", instance_file, "instance file")->required();
    cmd->add_option("--samples", samples, "number of accepted samples");
    cmd->add_option("--seed", seed, "sampling seed");
    cmd->add_option("--box", box, "sampling box as lo,hi scalars applied per coordinate")
        ->expected(2);
    cmd->callback([this]() { run(); });
  }

  void run() const {
    const rrpm::ProblemInstance instance = rrpm::load_instance(instance_file);
    std::optional<std::pair<rrpm::Vector, rrpm::Vector>> sample_box;
    if (box.size() == 2) {
      sample_box = std::make_pair(rrpm::Vector::Constant(instance.dimension(), box[0]),
                                  rrpm::Vector::Constant(instance.dimension(), box[1]));
    }
    const rrpm::RegularityEstimate est =
        rrpm::probe_regularity(instance, samples, seed, sample_box);
    json out{{"defined", est.defined},
             {"kappa_hat", est.defined ? json(est.kappa_hat) : json()},
             {"infeasible_samples", est.infeasible_samples},
             {"total_samples", est.total_samples}};
    if (est.defined) {
      json witness = json::array();
      for (Eigen::Index i = 0; i < est.witness.size(); ++i) witness.push_back(est.witness[i]);
      out["witness"] = witness;
    }
    std::cout << out.dump(2) << '\n';
  }
};

json error_json(const std::string& kind, const std::string& message) {
  return json{{"error", kind}, {"message", message}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic projection methods for finite sums over constraint intersections"};
  app.require_subcommand(1);

  GenerateCommand generate;
  ReferenceCommand reference;
  SolveCommand solve;
  CompareCommand compare;
  RatesCommand rates;
  ProbeCommand probe;
  generate.attach(app);
  reference.attach(app);
  solve.attach(app);
  compare.attach(app);
  rates.attach(app);
  probe.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const rrpm::InfeasibleSetError& e) {
    std::cerr << error_json("infeasible_set", e.what()).dump() << '\n';
    return 1;
  } catch (const rrpm::NonCertifiedError& e) {
    std::cerr << error_json("not_certified", e.what()).dump() << '\n';
    return 1;
  } catch (const rrpm::DivergenceError& e) {
    std::cerr << error_json("divergence", e.what()).dump() << '\n';
    return 1;
  } catch (const rrpm::DykstraError& e) {
    std::cerr << error_json("projection_failure", e.what()).dump() << '\n';
    return 1;
  } catch (const rrpm::StateError& e) {
    std::cerr << error_json("state_error", e.what()).dump() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << error_json("invalid_argument", e.what()).dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << error_json("runtime_error", e.what()).dump() << '\n';
    return 1;
  }
  return 0;
}
