#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrpm/generators.hpp"
#include "rrpm/problem.hpp"
#include "rrpm/schedule.hpp"
#include "rrpm/solvers.hpp"

namespace rrpm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Dense blocks as nested row-major arrays.
// ---------------------------------------------------------------------------

inline json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline json to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

inline Vector vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw std::invalid_argument(what + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::invalid_argument(what + ": expected numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument(what + ": expected a nested array");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw std::invalid_argument(what + ": expected nonempty rows");
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw std::invalid_argument(what + ": ragged rows");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw std::invalid_argument(what + ": expected numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Constraints and simple sets.
// ---------------------------------------------------------------------------

inline json constraint_to_json(const ConstraintFunction& c) {
  if (const auto* a = std::get_if<AffineConstraint>(&c.node())) {
    return json{{"type", "affine"}, {"q", to_json(a->q)}, {"w", a->w}};
  }
  if (const auto* q = std::get_if<QuadraticConstraint>(&c.node())) {
    return json{{"type", "quadratic"}, {"B", to_json(q->B)}, {"b", to_json(q->b)}, {"w", q->w}};
  }
  json members = json::array();
  for (const auto& m : std::get<MaxGroupConstraint>(c.node()).members) {
    members.push_back(constraint_to_json(m));
  }
  return json{{"type", "max_group"}, {"members", members}};
}

inline ConstraintFunction constraint_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "affine") {
    return ConstraintFunction(AffineConstraint{vector_from_json(j.at("q"), "constraint q"),
                                               j.at("w").get<double>()});
  }
  if (type == "quadratic") {
    return ConstraintFunction(QuadraticConstraint{matrix_from_json(j.at("B"), "constraint B"),
                                                  vector_from_json(j.at("b"), "constraint b"),
                                                  j.at("w").get<double>()});
  }
  if (type == "max_group") {
    MaxGroupConstraint group;
    for (const auto& member : j.at("members")) group.members.push_back(constraint_from_json(member));
    return ConstraintFunction(std::move(group));
  }
  throw std::invalid_argument("constraint: unknown type '" + type + "'");
}

inline json simple_set_to_json(const SimpleSet& set) {
  if (set.is_whole_space()) return json{{"type", "whole_space"}};
  if (const auto* b = std::get_if<Box>(&set.node())) {
    return json{{"type", "box"}, {"lower", to_json(b->lower)}, {"upper", to_json(b->upper)}};
  }
  const auto& s = std::get<Ball>(set.node());
  return json{{"type", "ball"}, {"center", to_json(s.center)}, {"radius", s.radius}};
}

inline SimpleSet simple_set_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "whole_space") return SimpleSet::whole_space();
  if (type == "box") {
    return SimpleSet::box(vector_from_json(j.at("lower"), "simple_set lower"),
                          vector_from_json(j.at("upper"), "simple_set upper"));
  }
  if (type == "ball") {
    return SimpleSet::ball(vector_from_json(j.at("center"), "simple_set center"),
                           j.at("radius").get<double>());
  }
  throw std::invalid_argument("simple_set: unknown type '" + type + "'");
}

// ---------------------------------------------------------------------------
// Whole instances.
// ---------------------------------------------------------------------------

inline json reference_to_json(const ReferenceSolution& ref) {
  return json{{"x_star", to_json(ref.x_star)}, {"f_star", ref.f_star},
              {"max_violation", ref.max_violation}, {"residual", ref.residual},
              {"iterations", ref.iterations}, {"tol", ref.tol}};
}

inline ReferenceSolution reference_from_json(const json& j) {
  ReferenceSolution ref;
  ref.x_star = vector_from_json(j.at("x_star"), "reference x_star");
  ref.f_star = j.at("f_star").get<double>();
  ref.max_violation = j.at("max_violation").get<double>();
  ref.residual = j.at("residual").get<double>();
  ref.iterations = j.at("iterations").get<long>();
  ref.tol = j.at("tol").get<double>();
  return ref;
}

inline json instance_to_json(const ProblemInstance& instance) {
  json summands = json::array();
  for (int i = 0; i < instance.num_summands(); ++i) {
    const auto& s = instance.objective().summand(i);
    summands.push_back(json{{"A", to_json(s.matrix())}, {"a", to_json(s.linear())}});
  }
  json constraints = json::array();
  for (const auto& c : instance.constraints()) constraints.push_back(constraint_to_json(c));

  json out{{"d", instance.dimension()},
           {"n", instance.num_summands()},
           {"m", instance.num_constraints()},
           {"family", instance.metadata().family},
           {"seed", instance.metadata().seed},
           {"summands", summands},
           {"constraints", constraints},
           {"simple_set", simple_set_to_json(instance.simple_set())}};
  if (instance.metadata().interior_point.has_value()) {
    out["interior_point"] = *instance.metadata().interior_point;
  }
  if (instance.metadata().reference.has_value()) {
    out["reference"] = reference_to_json(*instance.metadata().reference);
  }
  return out;
}

inline ProblemInstance instance_from_json(const json& j) {
  std::vector<QuadraticSummand> summands;
  for (const auto& s : j.at("summands")) {
    summands.emplace_back(matrix_from_json(s.at("A"), "summand A"),
                          vector_from_json(s.at("a"), "summand a"));
  }
  std::vector<ConstraintFunction> constraints;
  for (const auto& c : j.at("constraints")) constraints.push_back(constraint_from_json(c));

  InstanceMetadata meta;
  meta.family = j.value("family", std::string("custom"));
  meta.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("interior_point")) meta.interior_point = j.at("interior_point").get<bool>();
  if (j.contains("reference")) meta.reference = reference_from_json(j.at("reference"));

  ProblemInstance instance(SmoothSumObjective(std::move(summands)), std::move(constraints),
                           simple_set_from_json(j.at("simple_set")), std::move(meta));
  // Declared sizes must agree with the payload.
  if (j.contains("d") && j.at("d").get<Eigen::Index>() != instance.dimension()) {
    throw std::invalid_argument("instance: field 'd' disagrees with the summands");
  }
  if (j.contains("n") && j.at("n").get<int>() != instance.num_summands()) {
    throw std::invalid_argument("instance: field 'n' disagrees with the summands");
  }
  if (j.contains("m") && j.at("m").get<int>() != instance.num_constraints()) {
    throw std::invalid_argument("instance: field 'm' disagrees with the constraints");
  }
  return instance;
}

inline void save_instance(const ProblemInstance& instance, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << instance_to_json(instance).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline ProblemInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  json j;
  try {
    in >> j;
    return instance_from_json(j);
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed instance file " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Generator specs and schedules.
// ---------------------------------------------------------------------------

inline json generator_spec_to_json(const GeneratorSpec& spec) {
  return json{{"family", spec.family}, {"n", spec.n},       {"m", spec.m},
              {"d", spec.d},           {"p", spec.p},       {"q", spec.q},
              {"seed", spec.seed},     {"w_lower", spec.w_lower}, {"w_upper", spec.w_upper},
              {"box_halfwidth", spec.box_halfwidth}};
}

inline GeneratorSpec generator_spec_from_json(const json& j) {
  GeneratorSpec spec;
  spec.family = j.value("family", spec.family);
  spec.n = j.value("n", spec.n);
  spec.m = j.value("m", spec.m);
  spec.d = j.value("d", spec.d);
  spec.p = j.value("p", spec.p);
  spec.q = j.value("q", spec.q);
  spec.seed = j.value("seed", spec.seed);
  spec.w_lower = j.value("w_lower", spec.w_lower);
  spec.w_upper = j.value("w_upper", spec.w_upper);
  spec.box_halfwidth = j.value("box_halfwidth", spec.box_halfwidth);
  return spec;
}

inline json schedule_to_json(const StepSchedule& s) {
  switch (s.kind()) {
    case StepSchedule::Kind::constant: return json{{"kind", "constant"}, {"base", s.base()}};
    case StepSchedule::Kind::power:
      return json{{"kind", "power"}, {"base", s.base()}, {"exponent", s.exponent()}};
    case StepSchedule::Kind::epoch_constant:
      return json{{"kind", "epoch_constant"}, {"base", s.base()}, {"exponent", s.exponent()}};
  }
  throw std::invalid_argument("schedule_to_json: unknown kind");
}

inline StepSchedule schedule_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") return StepSchedule::constant(j.at("base").get<double>());
  if (kind == "power") {
    return StepSchedule::power(j.at("base").get<double>(), j.at("exponent").get<double>());
  }
  if (kind == "epoch_constant") {
    return StepSchedule::epoch_constant(j.at("base").get<double>(), j.at("exponent").get<double>());
  }
  throw std::invalid_argument("schedule: unknown kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Trace CSV.
// ---------------------------------------------------------------------------

inline constexpr const char* kTraceCsvHeader =
    "iter,epoch,time_s,grad_evals,f_gap_iterate,f_gap_average,max_violation_average,"
    "dist2_C_average";

namespace detail {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace detail

inline void write_trace_csv(const RunTrace& trace, std::ostream& out) {
  out << kTraceCsvHeader << '\n';
  for (const auto& row : trace.rows) {
    out << row.iter << ',' << row.epoch << ',' << detail::format_double(row.time_s) << ','
        << row.grad_evals << ',' << detail::format_double(row.f_gap_iterate) << ','
        << detail::format_double(row.f_gap_average) << ','
        << detail::format_double(row.max_violation_average) << ','
        << detail::format_double(row.dist2_C_average) << '\n';
  }
}

inline void save_trace_csv(const RunTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  write_trace_csv(trace, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline json run_header_to_json(const RunHeader& h) {
  return json{{"algorithm", h.algorithm},
              {"schedule", h.schedule},
              {"prng", h.prng},
              {"family", h.family},
              {"seed", h.seed},
              {"n", h.n},
              {"m", h.m},
              {"d", h.d},
              {"batch_size", h.batch_size},
              {"epoch_length", h.epoch_length},
              {"constraint_grouping", h.constraint_grouping},
              {"relaxation", h.relaxation},
              {"iterations", h.iterations},
              {"grad_eval_budget", h.grad_eval_budget}};
}

inline json run_summary_to_json(const RunSummary& s) {
  auto number_or_null = [](double v) { return std::isnan(v) ? json() : json(v); };
  return json{{"iterations_completed", s.iterations_completed},
              {"grad_evals", s.grad_evals},
              {"time_s", s.time_s},
              {"final_f_gap_iterate", number_or_null(s.final_f_gap_iterate)},
              {"final_f_gap_average", number_or_null(s.final_f_gap_average)},
              {"final_max_violation_average", number_or_null(s.final_max_violation_average)},
              {"final_dist2_C_average", number_or_null(s.final_dist2_C_average)}};
}

}  // namespace rrpm
