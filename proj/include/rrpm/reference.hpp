#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "rrpm/geometry.hpp"
#include "rrpm/linalg.hpp"
#include "rrpm/problem.hpp"

namespace rrpm {

/// The reference solver hit its iteration cap before it could certify the
/// requested tolerance.  Carries the best solution found.
class NonCertifiedError : public std::runtime_error {
 public:
  NonCertifiedError(const std::string& what, ReferenceSolution best)
      : std::runtime_error(what), partial(std::move(best)) {}
  ReferenceSolution partial;
};

struct ReferenceOptions {
  double tol = 1e-8;             // certification target for residual and violation
  long max_iterations = 1000000;
  Eigen::Index max_dimension = 500;  // keeps exact projections affordable
};

/// Certified solve by projected gradient descent with exact feasible-set
/// projections (Dykstra at tol/100) and backtracking on the step.  Stops when
/// the scaled projected-gradient residual ||x - P_C(x - s grad f(x))|| / s
/// falls to `tol`; the constraint violation of the result must also sit
/// within `tol` or the solve does not certify.
inline ReferenceSolution solve_reference(const ProblemInstance& instance,
                                         ReferenceOptions options = {}) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("solve_reference: tol must be positive");
  if (options.max_iterations < 1) {
    throw std::invalid_argument("solve_reference: iteration cap must be positive");
  }
  if (instance.dimension() > options.max_dimension) {
    throw std::invalid_argument("solve_reference: dimension exceeds the exact-projection cap");
  }

  const double projection_tol = std::min(1e-10, options.tol / 100.0);
  FeasibilityProjector feasible_set(instance);
  auto project = [&](const Vector& u) { return feasible_set.project(u, 100000, projection_tol).point; };

  const AggregateQuadratic f(instance.objective());
  // Exact Lipschitz constant of grad f: the Hessian is constant, 2P.
  const double lipschitz = 2.0 * spectral_norm(f.quadratic());
  double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;

  Vector x = project(project_simple_set(instance.simple_set(),
                                        Vector::Zero(instance.dimension())).point);
  long iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (iterations < options.max_iterations) {
    ++iterations;
    const Vector g = f.gradient(x);
    const double fx = f.value(x);
    Vector y;
    for (int halvings = 0;; ++halvings) {
      y = project(x - step * g);
      const Vector dx = y - x;
      const double quad_bound = fx + g.dot(dx) + dx.squaredNorm() / (2.0 * step);
      if (f.value(y) <= quad_bound + 1e-12 * (1.0 + std::abs(fx))) break;
      if (halvings >= 60) break;  // step underflow; accept and let the residual decide
      step *= 0.5;
    }
    residual = (x - y).norm() / step;
    x = std::move(y);
    if (residual <= options.tol) break;
  }

  // Certificate at the final point: re-probe the residual and measure the
  // worst violation with the instance's own constraint evaluations.
  const Vector probe = project(x - step * f.gradient(x));
  residual = (x - probe).norm() / step;
  const double violation = max_violation(instance, x);

  ReferenceSolution solution;
  solution.x_star = x;
  solution.f_star = evaluate_objective(instance, x);
  solution.max_violation = violation;
  solution.residual = residual;
  solution.iterations = iterations;
  solution.tol = options.tol;

  if (residual > options.tol || violation > options.tol) {
    throw NonCertifiedError("solve_reference: could not certify tolerance " +
                                std::to_string(options.tol) + " within the iteration cap",
                            std::move(solution));
  }
  return solution;
}

}  // namespace rrpm
