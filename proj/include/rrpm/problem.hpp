#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rrpm/linalg.hpp"

namespace rrpm {

// ---------------------------------------------------------------------------
// Objective: f(x) = (1/n) sum_i f_i(x) with quadratic summands.
// ---------------------------------------------------------------------------

/// One summand f_i(x) = ||A x||^2 + a.x = x.(A'A)x + a.x.
class QuadraticSummand {
 public:
  QuadraticSummand(Matrix A, Vector a) : A_(std::move(A)), a_(std::move(a)) {
    if (A_.rows() < 1 || A_.cols() < 1) {
      throw std::invalid_argument("QuadraticSummand: A must be nonempty");
    }
    check_dimension(a_.size(), A_.cols(), "QuadraticSummand linear term");
    if (!A_.allFinite()) throw std::invalid_argument("QuadraticSummand: A has non-finite entries");
    check_finite(a_, "QuadraticSummand linear term");
    const double sigma = spectral_norm(A_);
    lipschitz_ = 2.0 * sigma * sigma;  // = 2 ||A'A||_2
  }

  Eigen::Index dimension() const { return A_.cols(); }

  double value(const Vector& x) const { return (A_ * x).squaredNorm() + a_.dot(x); }

  Vector gradient(const Vector& x) const { return 2.0 * (A_.transpose() * (A_ * x)) + a_; }

  /// Smoothness constant 2 ||A'A||_2, valid for the gradient growth bound.
  double lipschitz() const { return lipschitz_; }

  const Matrix& matrix() const { return A_; }
  const Vector& linear() const { return a_; }

 private:
  Matrix A_;
  Vector a_;
  double lipschitz_ = 0.0;
};

/// Finite-sum objective (1/n) sum_i f_i.
class SmoothSumObjective {
 public:
  explicit SmoothSumObjective(std::vector<QuadraticSummand> summands)
      : summands_(std::move(summands)) {
    if (summands_.empty()) throw std::invalid_argument("SmoothSumObjective: no summands");
    const Eigen::Index d = summands_.front().dimension();
    for (const auto& s : summands_) {
      check_dimension(s.dimension(), d, "SmoothSumObjective summand");
    }
  }

  int size() const { return static_cast<int>(summands_.size()); }
  Eigen::Index dimension() const { return summands_.front().dimension(); }

  const QuadraticSummand& summand(int i) const {
    if (i < 0 || i >= size()) throw std::invalid_argument("SmoothSumObjective: summand index out of range");
    return summands_[static_cast<std::size_t>(i)];
  }

  double value(const Vector& x) const {
    double acc = 0.0;
    for (const auto& s : summands_) acc += s.value(x);
    return acc / static_cast<double>(size());
  }

  Vector gradient(const Vector& x) const {
    Vector g = Vector::Zero(dimension());
    for (const auto& s : summands_) g += s.gradient(x);
    return g / static_cast<double>(size());
  }

  /// Root-mean-square of the per-summand constants: sqrt((1/n) sum L_i^2).
  double lipschitz_aggregate() const {
    double acc = 0.0;
    for (const auto& s : summands_) acc += s.lipschitz() * s.lipschitz();
    return std::sqrt(acc / static_cast<double>(size()));
  }

 private:
  std::vector<QuadraticSummand> summands_;
};

/// Collapsed form of a SmoothSumObjective: f(x) = x.Px + p.x with
/// P = (1/n) sum_i A_i'A_i.  Evaluations cost O(d^2) regardless of n, at the
/// price of a different floating-point association than the summand path.
class AggregateQuadratic {
 public:
  explicit AggregateQuadratic(const SmoothSumObjective& objective)
      : P_(Matrix::Zero(objective.dimension(), objective.dimension())),
        p_(Vector::Zero(objective.dimension())) {
    for (int i = 0; i < objective.size(); ++i) {
      const auto& s = objective.summand(i);
      P_ += s.matrix().transpose() * s.matrix();
      p_ += s.linear();
    }
    P_ /= static_cast<double>(objective.size());
    p_ /= static_cast<double>(objective.size());
  }

  double value(const Vector& x) const { return x.dot(P_ * x) + p_.dot(x); }
  Vector gradient(const Vector& x) const { return 2.0 * (P_ * x) + p_; }

  const Matrix& quadratic() const { return P_; }
  const Vector& linear() const { return p_; }

 private:
  Matrix P_;
  Vector p_;
};

// ---------------------------------------------------------------------------
// Constraints: phi_j convex with C_j = {x : phi_j(x) <= 0}.
// ---------------------------------------------------------------------------

class ConstraintFunction;

/// phi(x) = q.x - w.
struct AffineConstraint {
  Vector q;
  double w = 0.0;
};

/// phi(x) = x.(B'B)x + b.x - w.
struct QuadraticConstraint {
  Matrix B;
  Vector b;
  double w = 0.0;
};

/// phi(x) = max over members; the feasible set is the intersection of the
/// members' sets.
struct MaxGroupConstraint {
  std::vector<ConstraintFunction> members;
};

class ConstraintFunction {
 public:
  using Node = std::variant<AffineConstraint, QuadraticConstraint, MaxGroupConstraint>;

  ConstraintFunction(AffineConstraint c) : node_(std::move(c)) { validate(); }
  ConstraintFunction(QuadraticConstraint c) : node_(std::move(c)) { validate(); }
  ConstraintFunction(MaxGroupConstraint c) : node_(std::move(c)) { validate(); }

  /// phi(x) = q.x - w.
  static ConstraintFunction affine(Vector q, double w) {
    return ConstraintFunction(AffineConstraint{std::move(q), w});
  }
  /// phi(x) = |Bx|^2 + b.x - w.
  static ConstraintFunction quadratic(Matrix B, Vector b, double w) {
    return ConstraintFunction(QuadraticConstraint{std::move(B), std::move(b), w});
  }
  /// phi(x) = max over members.
  static ConstraintFunction max_group(std::vector<ConstraintFunction> members) {
    return ConstraintFunction(MaxGroupConstraint{std::move(members)});
  }

  Eigen::Index dimension() const {
    if (const auto* a = std::get_if<AffineConstraint>(&node_)) return a->q.size();
    if (const auto* q = std::get_if<QuadraticConstraint>(&node_)) return q->b.size();
    return std::get<MaxGroupConstraint>(node_).members.front().dimension();
  }

  double value(const Vector& x) const {
    if (const auto* a = std::get_if<AffineConstraint>(&node_)) {
      return a->q.dot(x) - a->w;
    }
    if (const auto* q = std::get_if<QuadraticConstraint>(&node_)) {
      return (q->B * x).squaredNorm() + q->b.dot(x) - q->w;
    }
    const auto& members = std::get<MaxGroupConstraint>(node_).members;
    double best = members.front().value(x);
    for (std::size_t t = 1; t < members.size(); ++t) {
      const double v = members[t].value(x);
      if (v > best) best = v;
    }
    return best;
  }

  /// Value together with one subgradient.  For a max group the subgradient
  /// comes from the first member attaining the max (lowest index on ties).
  std::pair<double, Vector> value_and_subgradient(const Vector& x) const {
    if (const auto* a = std::get_if<AffineConstraint>(&node_)) {
      return {a->q.dot(x) - a->w, a->q};
    }
    if (const auto* q = std::get_if<QuadraticConstraint>(&node_)) {
      const Vector bx = q->B * x;
      return {bx.squaredNorm() + q->b.dot(x) - q->w, 2.0 * (q->B.transpose() * bx) + q->b};
    }
    const auto& members = std::get<MaxGroupConstraint>(node_).members;
    std::size_t arg = 0;
    double best = members.front().value(x);
    for (std::size_t t = 1; t < members.size(); ++t) {
      const double v = members[t].value(x);
      if (v > best) best = v, arg = t;
    }
    return {best, members[arg].value_and_subgradient(x).second};
  }

  const Node& node() const { return node_; }
  bool is_max_group() const { return std::holds_alternative<MaxGroupConstraint>(node_); }

 private:
  void validate() const {
    if (const auto* a = std::get_if<AffineConstraint>(&node_)) {
      if (a->q.size() < 1) throw std::invalid_argument("AffineConstraint: empty normal");
      check_finite(a->q, "AffineConstraint normal");
      if (!std::isfinite(a->w)) throw std::invalid_argument("AffineConstraint: non-finite offset");
      return;
    }
    if (const auto* q = std::get_if<QuadraticConstraint>(&node_)) {
      if (q->B.rows() < 1 || q->B.cols() < 1) {
        throw std::invalid_argument("QuadraticConstraint: B must be nonempty");
      }
      check_dimension(q->b.size(), q->B.cols(), "QuadraticConstraint linear term");
      if (!q->B.allFinite()) throw std::invalid_argument("QuadraticConstraint: B has non-finite entries");
      check_finite(q->b, "QuadraticConstraint linear term");
      if (!std::isfinite(q->w)) throw std::invalid_argument("QuadraticConstraint: non-finite offset");
      return;
    }
    const auto& members = std::get<MaxGroupConstraint>(node_).members;
    if (members.empty()) throw std::invalid_argument("MaxGroupConstraint: no members");
    const Eigen::Index d = members.front().dimension();
    for (const auto& m : members) {
      check_dimension(m.dimension(), d, "MaxGroupConstraint member");
    }
  }

  Node node_;
};

// ---------------------------------------------------------------------------
// Simple set C_0 with a cheap exact projection.
// ---------------------------------------------------------------------------

struct WholeSpace {};

struct Box {
  Vector lower;
  Vector upper;
};

struct Ball {
  Vector center;
  double radius = 1.0;
};

class SimpleSet {
 public:
  using Node = std::variant<WholeSpace, Box, Ball>;

  static SimpleSet whole_space() { return SimpleSet(WholeSpace{}); }

  static SimpleSet box(Vector lower, Vector upper) {
    if (lower.size() != upper.size() || lower.size() < 1) {
      throw std::invalid_argument("SimpleSet box: bound dimensions disagree");
    }
    check_finite(lower, "SimpleSet box lower");
    check_finite(upper, "SimpleSet box upper");
    if ((lower.array() > upper.array()).any()) {
      throw std::invalid_argument("SimpleSet box: lower bound exceeds upper bound");
    }
    return SimpleSet(Box{std::move(lower), std::move(upper)});
  }

  static SimpleSet ball(Vector center, double radius) {
    if (center.size() < 1) throw std::invalid_argument("SimpleSet ball: empty center");
    check_finite(center, "SimpleSet ball center");
    if (!(radius > 0.0) || !std::isfinite(radius)) {
      throw std::invalid_argument("SimpleSet ball: radius must be positive");
    }
    return SimpleSet(Ball{std::move(center), radius});
  }

  bool is_whole_space() const { return std::holds_alternative<WholeSpace>(node_); }

  /// -1 for the whole space (compatible with any dimension).
  Eigen::Index dimension() const {
    if (const auto* b = std::get_if<Box>(&node_)) return b->lower.size();
    if (const auto* s = std::get_if<Ball>(&node_)) return s->center.size();
    return -1;
  }

  bool is_bounded() const { return !is_whole_space(); }

  /// Membership test.  The ball allows a few ulps of slack so that points
  /// produced by the radial rescale in the projection always pass.
  bool contains(const Vector& x, double tol = 0.0) const {
    if (is_whole_space()) return true;
    check_dimension(x.size(), dimension(), "SimpleSet::contains");
    if (const auto* b = std::get_if<Box>(&node_)) {
      return ((x.array() >= b->lower.array() - tol) && (x.array() <= b->upper.array() + tol)).all();
    }
    const auto& s = std::get<Ball>(node_);
    const double slack = 8.0 * std::numeric_limits<double>::epsilon() * s.radius;
    return (x - s.center).norm() <= s.radius + slack + tol;
  }

  /// Smallest box containing the set; only valid for bounded sets.
  std::pair<Vector, Vector> bounding_box() const {
    if (const auto* b = std::get_if<Box>(&node_)) return {b->lower, b->upper};
    if (const auto* s = std::get_if<Ball>(&node_)) {
      return {s->center.array() - s->radius, s->center.array() + s->radius};
    }
    throw std::invalid_argument("SimpleSet::bounding_box: set is unbounded");
  }

  const Node& node() const { return node_; }

 private:
  explicit SimpleSet(Node node) : node_(std::move(node)) {}
  Node node_;
};

// ---------------------------------------------------------------------------
// Problem instance.
// ---------------------------------------------------------------------------

/// Certified near-solution produced by the reference solver.
struct ReferenceSolution {
  Vector x_star;
  double f_star = 0.0;
  double max_violation = 0.0;  // max_j (phi_j(x*))_+
  double residual = 0.0;       // projected-gradient residual at x*
  long iterations = 0;
  double tol = 0.0;            // certification tolerance
};

struct InstanceMetadata {
  std::uint64_t seed = 0;
  std::string family = "custom";
  std::optional<bool> interior_point = {};  // strictly feasible point known to exist
  std::optional<ReferenceSolution> reference = {};
};

/// Immutable problem: minimize f over the intersection of C_0 and the
/// constraint sets {phi_j <= 0}.
class ProblemInstance {
 public:
  ProblemInstance(SmoothSumObjective objective, std::vector<ConstraintFunction> constraints,
                  SimpleSet simple_set, InstanceMetadata metadata = {})
      : objective_(std::move(objective)),
        constraints_(std::move(constraints)),
        simple_set_(std::move(simple_set)),
        metadata_(std::move(metadata)) {
    const Eigen::Index d = objective_.dimension();
    for (const auto& c : constraints_) check_dimension(c.dimension(), d, "ProblemInstance constraint");
    if (!simple_set_.is_whole_space()) {
      check_dimension(simple_set_.dimension(), d, "ProblemInstance simple set");
    }
    if (metadata_.reference.has_value()) validate_reference(*metadata_.reference);
  }

  ProblemInstance(std::vector<QuadraticSummand> summands,
                  std::vector<ConstraintFunction> constraints, SimpleSet simple_set,
                  InstanceMetadata metadata = {})
      : ProblemInstance(SmoothSumObjective(std::move(summands)), std::move(constraints),
                        std::move(simple_set), std::move(metadata)) {}

  Eigen::Index dimension() const { return objective_.dimension(); }
  int num_summands() const { return objective_.size(); }
  int num_constraints() const { return static_cast<int>(constraints_.size()); }

  const SmoothSumObjective& objective() const { return objective_; }
  const std::vector<ConstraintFunction>& constraints() const { return constraints_; }
  const SimpleSet& simple_set() const { return simple_set_; }
  const InstanceMetadata& metadata() const { return metadata_; }

  const ConstraintFunction& constraint(int j) const {
    if (j < 0 || j >= num_constraints()) {
      throw std::invalid_argument("ProblemInstance: constraint index out of range");
    }
    return constraints_[static_cast<std::size_t>(j)];
  }

  /// Copy with the reference solution attached (validated on attach).
  ProblemInstance with_reference(ReferenceSolution reference) const {
    ProblemInstance out = *this;
    out.validate_reference(reference);
    out.metadata_.reference = std::move(reference);
    return out;
  }

 private:
  void validate_reference(const ReferenceSolution& ref) const {
    check_dimension(ref.x_star.size(), dimension(), "reference solution");
    check_finite(ref.x_star, "reference solution");
    if (!simple_set_.contains(ref.x_star, ref.tol)) {
      throw std::invalid_argument("reference solution: x* leaves the simple set");
    }
    double violation = 0.0;
    for (const auto& c : constraints_) violation = std::max(violation, c.value(ref.x_star));
    if (violation > ref.tol + 1e-15) {
      throw std::invalid_argument("reference solution: x* violates constraints beyond tolerance");
    }
  }

  SmoothSumObjective objective_;
  std::vector<ConstraintFunction> constraints_;
  SimpleSet simple_set_;
  InstanceMetadata metadata_;
};

// ---------------------------------------------------------------------------
// Core operations.
// ---------------------------------------------------------------------------

inline double evaluate_objective(const ProblemInstance& instance, const Vector& x) {
  check_dimension(x.size(), instance.dimension(), "evaluate_objective");
  check_finite(x, "evaluate_objective");
  return instance.objective().value(x);
}

inline Vector evaluate_full_gradient(const ProblemInstance& instance, const Vector& x) {
  check_dimension(x.size(), instance.dimension(), "evaluate_full_gradient");
  check_finite(x, "evaluate_full_gradient");
  return instance.objective().gradient(x);
}

/// phi_j(x) and one subgradient, 0-based constraint index.
inline std::pair<double, Vector> constraint_value_and_subgradient(const ProblemInstance& instance,
                                                                  int j, const Vector& x) {
  check_dimension(x.size(), instance.dimension(), "constraint_value_and_subgradient");
  check_finite(x, "constraint_value_and_subgradient");
  return instance.constraint(j).value_and_subgradient(x);
}

/// max_j phi_j(x); -inf when there are no constraints.
inline double max_constraint_value(const ProblemInstance& instance, const Vector& x) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& c : instance.constraints()) {
    const double v = c.value(x);
    if (v > best) best = v;
  }
  return best;
}

/// max_j (phi_j(x))_+, the worst constraint violation.
inline double max_violation(const ProblemInstance& instance, const Vector& x) {
  return std::max(0.0, max_constraint_value(instance, x));
}

}  // namespace rrpm
