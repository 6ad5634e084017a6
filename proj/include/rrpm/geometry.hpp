#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rrpm/errors.hpp"
#include "rrpm/problem.hpp"

namespace rrpm {

/// Result of a projection: the projected point plus diagnostics.
/// `distance` is always ||input - point||; `kkt_residual` is the
/// operator-specific certificate (0 for closed-form projections).
struct ProjectionReport {
  Vector point;
  double distance = 0.0;
  long iterations = 0;
  double kkt_residual = 0.0;
};

// ---------------------------------------------------------------------------
// Half-space outer approximations.
// ---------------------------------------------------------------------------

/// {y : normal.y <= offset}, or the whole space when degenerate.
struct HalfSpace {
  Vector normal;
  double offset = 0.0;
  bool degenerate = false;

  static HalfSpace whole_space(Eigen::Index dim) {
    return HalfSpace{Vector::Zero(dim), 0.0, true};
  }

  bool contains(const Vector& y, double tol = 0.0) const {
    if (degenerate) return true;
    return normal.dot(y) <= offset + tol;
  }
};

/// Outer approximation of {phi <= 0} by the subgradient inequality at x:
/// phi(x) + xi.(y - x) <= 0.  A zero subgradient yields the whole space
/// (then phi(x) <= 0 must already hold for the set to be approximated).
inline HalfSpace build_halfspace(double phi_value, const Vector& x, const Vector& xi) {
  check_dimension(xi.size(), x.size(), "build_halfspace");
  check_finite(x, "build_halfspace point");
  check_finite(xi, "build_halfspace subgradient");
  if (!std::isfinite(phi_value)) throw std::invalid_argument("build_halfspace: non-finite value");
  if (xi.squaredNorm() == 0.0) return HalfSpace::whole_space(x.size());
  return HalfSpace{xi, xi.dot(x) - phi_value, false};
}

/// Closed-form projection: u - (normal.u - offset)_+ / ||normal||^2 * normal.
inline ProjectionReport project_halfspace(const HalfSpace& h, const Vector& u) {
  check_finite(u, "project_halfspace");
  if (h.degenerate) return {u, 0.0, 1, 0.0};
  check_dimension(u.size(), h.normal.size(), "project_halfspace");
  const double excess = h.normal.dot(u) - h.offset;
  if (excess <= 0.0) return {u, 0.0, 1, 0.0};
  const Vector point = u - (excess / h.normal.squaredNorm()) * h.normal;
  return {point, (u - point).norm(), 1, 0.0};
}

// ---------------------------------------------------------------------------
// Simple sets.
// ---------------------------------------------------------------------------

inline ProjectionReport project_simple_set(const SimpleSet& set, const Vector& u) {
  check_finite(u, "project_simple_set");
  if (set.is_whole_space()) return {u, 0.0, 1, 0.0};
  check_dimension(u.size(), set.dimension(), "project_simple_set");
  if (const auto* b = std::get_if<Box>(&set.node())) {
    const Vector point = u.cwiseMax(b->lower).cwiseMin(b->upper);
    return {point, (u - point).norm(), 1, 0.0};
  }
  const auto& s = std::get<Ball>(set.node());
  const Vector v = u - s.center;
  const double nv = v.norm();
  if (nv <= s.radius) return {u, 0.0, 1, 0.0};
  const Vector point = s.center + (s.radius / nv) * v;
  return {point, (u - point).norm(), 1, 0.0};
}

// ---------------------------------------------------------------------------
// Projection onto {x : x.Mx + b.x <= w} for symmetric PSD M.
// ---------------------------------------------------------------------------

/// Caches the eigendecomposition of M so repeated projections onto the same
/// set cost O(d) per multiplier evaluation plus two dense products.  The
/// multiplier from the previous call seeds the next root-find.  Not safe to
/// share across threads.
class QuadraticSetProjector {
 public:
  QuadraticSetProjector(Matrix M, Vector b, double w) : b_(std::move(b)), w_(w) {
    if (M.rows() != M.cols() || M.rows() < 1) {
      throw std::invalid_argument("QuadraticSetProjector: M must be square");
    }
    check_dimension(b_.size(), M.rows(), "QuadraticSetProjector linear term");
    if (!M.allFinite()) throw std::invalid_argument("QuadraticSetProjector: M has non-finite entries");
    check_finite(b_, "QuadraticSetProjector linear term");
    if (!std::isfinite(w_)) throw std::invalid_argument("QuadraticSetProjector: non-finite offset");
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
      throw std::invalid_argument("QuadraticSetProjector: M is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
    if (eig.info() != Eigen::Success) {
      throw std::invalid_argument("QuadraticSetProjector: eigendecomposition failed");
    }
    eigenvalues_ = eig.eigenvalues();
    basis_ = eig.eigenvectors();
    const double emax = std::max(1.0, eigenvalues_.cwiseAbs().maxCoeff());
    if (eigenvalues_.minCoeff() < -1e-10 * emax) {
      throw std::invalid_argument("QuadraticSetProjector: M is not positive semidefinite");
    }
    eigenvalues_ = eigenvalues_.cwiseMax(0.0);  // clear rounding noise
    b_eig_ = basis_.transpose() * b_;
  }

  Eigen::Index dimension() const { return b_.size(); }

  double constraint_value(const Vector& x) const {
    check_dimension(x.size(), dimension(), "QuadraticSetProjector::constraint_value");
    return value_eig(basis_.transpose() * x);
  }

  ProjectionReport project(const Vector& u) {
    check_dimension(u.size(), dimension(), "QuadraticSetProjector::project");
    check_finite(u, "QuadraticSetProjector::project");
    const Vector u_eig = basis_.transpose() * u;
    const double q_at_u = value_eig(u_eig);
    if (q_at_u <= 0.0) return {u, 0.0, 1, 0.0};

    // g(t) = q(x(t)) with x(t) = (I + 2tM)^{-1}(u - t b) is strictly
    // decreasing in t >= 0, g(0) > 0.  Bracket by doubling, then safeguarded
    // Newton on the bracket.
    long evals = 0;
    auto g = [&](double t) {
      ++evals;
      return value_eig(point_eig(u_eig, t));
    };
    const double tol = 1e-10;
    double lo = 0.0;
    double hi = 1.0;
    double g_hi = g(hi);
    while (g_hi > tol) {
      lo = hi;
      if (hi >= std::ldexp(1.0, 60)) {
        throw InfeasibleSetError("QuadraticSetProjector: no multiplier found; set appears empty");
      }
      hi *= 2.0;
      g_hi = g(hi);
    }

    double t = hi;
    double g_t = g_hi;
    if (std::abs(g_t) > tol) {
      t = (warm_multiplier_ > lo && warm_multiplier_ < hi) ? warm_multiplier_
                                                           : 0.5 * (lo + hi);
      g_t = g(t);
      for (int it = 0; it < 200 && std::abs(g_t) > tol; ++it) {
        if (g_t > 0.0) lo = t;
        else hi = t;
        if (hi - lo <= 1e-16 * std::max(1.0, lo)) break;  // bracket exhausted in fp
        const double slope = derivative_eig(u_eig, t);
        double next = (slope < 0.0) ? t - g_t / slope : lo;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        t = next;
        g_t = g(t);
      }
      warm_multiplier_ = t;
    }

    const Vector point = basis_ * point_eig(u_eig, t);
    return {point, (u - point).norm(), evals, std::abs(g_t)};
  }

 private:
  // coordinates of x(t) in the eigenbasis
  Vector point_eig(const Vector& u_eig, double t) const {
    return ((u_eig.array() - t * b_eig_.array()) / (1.0 + 2.0 * t * eigenvalues_.array())).matrix();
  }

  double value_eig(const Vector& x_eig) const {
    return x_eig.dot(eigenvalues_.cwiseProduct(x_eig)) + b_eig_.dot(x_eig) - w_;
  }

  // g'(t) = -sum_i (2 e_i u_i + b_i)^2 / (1 + 2 t e_i)^3 in eigen coordinates
  double derivative_eig(const Vector& u_eig, double t) const {
    const auto num = (2.0 * eigenvalues_.array() * u_eig.array() + b_eig_.array()).square();
    const auto den = (1.0 + 2.0 * t * eigenvalues_.array()).cube();
    return -(num / den).sum();
  }

  Vector b_;
  double w_ = 0.0;
  Vector eigenvalues_;
  Matrix basis_;
  Vector b_eig_;
  double warm_multiplier_ = 1.0;
};

/// One-shot projection onto {x : x.Mx + b.x <= w}.
inline ProjectionReport project_quadratic_set(const Matrix& M, const Vector& b, double w,
                                              const Vector& u) {
  QuadraticSetProjector projector(M, b, w);
  return projector.project(u);
}

// ---------------------------------------------------------------------------
// Dykstra's algorithm for the intersection of finitely many convex sets.
// ---------------------------------------------------------------------------

using Projector = std::function<Vector(const Vector&)>;

/// Dykstra ran out of sweeps while the iterate still violated some set.
/// `report` carries the best point found.
class DykstraError : public std::runtime_error {
 public:
  DykstraError(const std::string& what, ProjectionReport partial)
      : std::runtime_error(what), report(std::move(partial)) {}
  ProjectionReport report;
};

/// Projection onto an intersection via cyclic Dykstra with correction
/// vectors.  Stops when a full sweep moves the iterate by at most `tol`.
/// `kkt_residual` reports the largest remaining distance to any single set.
inline ProjectionReport dykstra_project(const std::vector<Projector>& sets, const Vector& u,
                                        long max_sweeps = 100000, double tol = 1e-10) {
  check_finite(u, "dykstra_project");
  if (max_sweeps < 1) throw std::invalid_argument("dykstra_project: max_sweeps must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("dykstra_project: tol must be positive");
  if (sets.empty()) return {u, 0.0, 0, 0.0};

  Vector x = u;
  std::vector<Vector> corrections(sets.size(), Vector::Zero(u.size()));
  long sweeps = 0;
  bool converged = false;
  while (sweeps < max_sweeps) {
    ++sweeps;
    const Vector x_before = x;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const Vector shifted = x + corrections[i];
      Vector projected = sets[i](shifted);
      corrections[i] = shifted - projected;
      x = std::move(projected);
    }
    if ((x - x_before).norm() <= tol) {
      converged = true;
      break;
    }
  }

  double violation = 0.0;
  for (const auto& set : sets) violation = std::max(violation, (x - set(x)).norm());
  ProjectionReport report{x, (u - x).norm(), sweeps, violation};
  if (!converged && violation > 100.0 * tol) {
    throw DykstraError("dykstra_project: sweep budget exhausted away from the intersection", report);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Exact projection onto a single constraint set {x : phi(x) <= 0}.
// ---------------------------------------------------------------------------

inline ProjectionReport project_constraint_set(const ConstraintFunction& c, const Vector& u) {
  check_dimension(u.size(), c.dimension(), "project_constraint_set");
  if (const auto* a = std::get_if<AffineConstraint>(&c.node())) {
    if (a->q.squaredNorm() == 0.0) {
      if (a->w < 0.0) throw InfeasibleSetError("project_constraint_set: constant constraint is infeasible");
      return {u, 0.0, 1, 0.0};
    }
    return project_halfspace(HalfSpace{a->q, a->w, false}, u);
  }
  if (const auto* q = std::get_if<QuadraticConstraint>(&c.node())) {
    return project_quadratic_set(Matrix(q->B.transpose() * q->B), q->b, q->w, u);
  }
  // A max group's set is the intersection of its members' sets.
  std::vector<Projector> sets;
  for (const auto& member : std::get<MaxGroupConstraint>(c.node()).members) {
    sets.push_back([&member](const Vector& v) { return project_constraint_set(member, v).point; });
  }
  return dykstra_project(sets, u);
}

// ---------------------------------------------------------------------------
// Projection machinery for a whole problem instance.
// ---------------------------------------------------------------------------

namespace detail {

inline void append_constraint_projectors(const ConstraintFunction& c, std::vector<Projector>* out) {
  if (const auto* a = std::get_if<AffineConstraint>(&c.node())) {
    if (a->q.squaredNorm() == 0.0) {
      if (a->w < 0.0) {
        throw InfeasibleSetError("feasibility projectors: constant constraint is infeasible");
      }
      return;  // the whole space; nothing to project onto
    }
    const HalfSpace h{a->q, a->w, false};
    out->push_back([h](const Vector& u) { return project_halfspace(h, u).point; });
    return;
  }
  if (const auto* q = std::get_if<QuadraticConstraint>(&c.node())) {
    auto projector = std::make_shared<QuadraticSetProjector>(
        Matrix(q->B.transpose() * q->B), q->b, q->w);
    out->push_back([projector](const Vector& u) { return projector->project(u).point; });
    return;
  }
  // A max group's set is the intersection of its members' sets.
  for (const auto& member : std::get<MaxGroupConstraint>(c.node()).members) {
    append_constraint_projectors(member, out);
  }
}

}  // namespace detail

/// Exact projectors whose intersection is the feasible set: the simple set
/// plus one per elementary constraint (max groups are flattened, which leaves
/// the intersection unchanged).
inline std::vector<Projector> feasibility_projectors(const ProblemInstance& instance) {
  std::vector<Projector> sets;
  if (!instance.simple_set().is_whole_space()) {
    const SimpleSet set = instance.simple_set();
    sets.push_back([set](const Vector& u) { return project_simple_set(set, u).point; });
  }
  for (const auto& c : instance.constraints()) detail::append_constraint_projectors(c, &sets);
  return sets;
}

/// Reusable projection onto the feasible set of an instance.  Owns warm-started
/// sub-projectors, so construct once per thread and reuse.
class FeasibilityProjector {
 public:
  explicit FeasibilityProjector(const ProblemInstance& instance)
      : sets_(feasibility_projectors(instance)) {}

  ProjectionReport project(const Vector& u, long max_sweeps = 100000, double tol = 1e-10) const {
    return dykstra_project(sets_, u, max_sweeps, tol);
  }

  double distance(const Vector& u) const { return project(u).distance; }

  std::size_t num_sets() const { return sets_.size(); }

 private:
  std::vector<Projector> sets_;
};

/// One-shot projection onto the feasible set.
inline ProjectionReport project_feasible_set(const ProblemInstance& instance, const Vector& u,
                                             long max_sweeps = 100000, double tol = 1e-10) {
  return FeasibilityProjector(instance).project(u, max_sweeps, tol);
}

}  // namespace rrpm
