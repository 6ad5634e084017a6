#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrpm/linalg.hpp"
#include "rrpm/problem.hpp"

namespace rrpm {

/// Recipe for a random instance.  `p` is the row count of each summand's
/// matrix block, `q` the row count of each quadratic constraint's block
/// (qcqp only).  Offsets w are drawn uniformly from [w_lower, w_upper];
/// keeping w_lower >= 0 guarantees the origin is feasible.
struct GeneratorSpec {
  std::string family = "lcqp";  // "lcqp" or "qcqp"
  int n = 200;
  int m = 50;
  int d = 20;
  int p = 5;
  int q = 5;
  std::uint64_t seed = 0;
  double w_lower = 0.0;
  double w_upper = 0.5;
  double box_halfwidth = 10.0;  // qcqp simple set [-h, h]^d
};

namespace detail {

inline void validate_generator_spec(const GeneratorSpec& spec) {
  if (spec.n < 1 || spec.m < 1 || spec.d < 1 || spec.p < 1) {
    throw std::invalid_argument("GeneratorSpec: n, m, d, p must be positive");
  }
  if (spec.family == "qcqp" && spec.q < 1) {
    throw std::invalid_argument("GeneratorSpec: q must be positive for qcqp");
  }
  if (!(spec.w_lower >= 0.0) || !(spec.w_upper >= spec.w_lower)) {
    throw std::invalid_argument("GeneratorSpec: need 0 <= w_lower <= w_upper");
  }
  if (!(spec.box_halfwidth > 0.0)) {
    throw std::invalid_argument("GeneratorSpec: box halfwidth must be positive");
  }
}

/// (rows x cols) standard normal block filled row-major, rescaled to unit
/// operator norm.
inline Matrix normalized_gaussian_block(int rows, int cols, std::mt19937_64& rng,
                                        std::normal_distribution<double>& gauss) {
  Matrix block(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) block(r, c) = gauss(rng);
  }
  const double sigma = spectral_norm(block);
  if (!(sigma > 0.0)) throw std::runtime_error("generator: degenerate gaussian block");
  return block / sigma;
}

/// Summands shared by both families: split a normalized (p+1) x d block into
/// the p-row quadratic part and the last row as the linear term.
inline std::vector<QuadraticSummand> generate_summands(const GeneratorSpec& spec,
                                                       std::mt19937_64& rng,
                                                       std::normal_distribution<double>& gauss) {
  std::vector<QuadraticSummand> summands;
  summands.reserve(static_cast<std::size_t>(spec.n));
  for (int i = 0; i < spec.n; ++i) {
    const Matrix block = normalized_gaussian_block(spec.p + 1, spec.d, rng, gauss);
    summands.emplace_back(Matrix(block.topRows(spec.p)), Vector(block.row(spec.p).transpose()));
  }
  return summands;
}

}  // namespace detail

/// Linearly constrained family: unit-norm random half-spaces q.x <= w over
/// the whole space.
inline ProblemInstance generate_lcqp(const GeneratorSpec& spec) {
  detail::validate_generator_spec(spec);
  if (spec.family != "lcqp") throw std::invalid_argument("generate_lcqp: spec family mismatch");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> offset(spec.w_lower, spec.w_upper);

  auto summands = detail::generate_summands(spec, rng, gauss);

  std::vector<ConstraintFunction> constraints;
  constraints.reserve(static_cast<std::size_t>(spec.m));
  bool all_offsets_positive = true;
  for (int j = 0; j < spec.m; ++j) {
    Vector q(spec.d);
    for (int c = 0; c < spec.d; ++c) q[c] = gauss(rng);
    const double norm = q.norm();
    if (!(norm > 0.0)) throw std::runtime_error("generator: degenerate constraint normal");
    const double w = offset(rng);
    all_offsets_positive = all_offsets_positive && w > 0.0;
    constraints.emplace_back(AffineConstraint{q / norm, w});
  }

  InstanceMetadata meta;
  meta.seed = spec.seed;
  meta.family = "lcqp";
  meta.interior_point = all_offsets_positive;
  return ProblemInstance(SmoothSumObjective(std::move(summands)), std::move(constraints),
                         SimpleSet::whole_space(), std::move(meta));
}

/// Quadratically constrained family: x.(B'B)x + b.x <= w from normalized
/// gaussian blocks, over the box [-h, h]^d.
inline ProblemInstance generate_qcqp(const GeneratorSpec& spec) {
  detail::validate_generator_spec(spec);
  if (spec.family != "qcqp") throw std::invalid_argument("generate_qcqp: spec family mismatch");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> offset(spec.w_lower, spec.w_upper);

  auto summands = detail::generate_summands(spec, rng, gauss);

  std::vector<ConstraintFunction> constraints;
  constraints.reserve(static_cast<std::size_t>(spec.m));
  bool all_offsets_positive = true;
  for (int j = 0; j < spec.m; ++j) {
    const Matrix block = detail::normalized_gaussian_block(spec.q + 1, spec.d, rng, gauss);
    const double w = offset(rng);
    all_offsets_positive = all_offsets_positive && w > 0.0;
    constraints.emplace_back(QuadraticConstraint{Matrix(block.topRows(spec.q)),
                                                 Vector(block.row(spec.q).transpose()), w});
  }

  InstanceMetadata meta;
  meta.seed = spec.seed;
  meta.family = "qcqp";
  meta.interior_point = all_offsets_positive;
  const Vector half = Vector::Constant(spec.d, spec.box_halfwidth);
  return ProblemInstance(SmoothSumObjective(std::move(summands)), std::move(constraints),
                         SimpleSet::box(-half, half), std::move(meta));
}

inline ProblemInstance generate(const GeneratorSpec& spec) {
  if (spec.family == "lcqp") return generate_lcqp(spec);
  if (spec.family == "qcqp") return generate_qcqp(spec);
  throw std::invalid_argument("generate: unknown family '" + spec.family + "'");
}

}  // namespace rrpm
