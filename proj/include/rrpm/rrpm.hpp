#pragma once

// Random relaxed projection methods for finite-sum minimization over
// intersections of convex sets: problem model, projection geometry,
// variance-reduced and plain stochastic solvers, instance generators,
// a certified reference solver, and experiment harness.

#include "rrpm/errors.hpp"
#include "rrpm/estimators.hpp"
#include "rrpm/experiment.hpp"
#include "rrpm/generators.hpp"
#include "rrpm/geometry.hpp"
#include "rrpm/linalg.hpp"
#include "rrpm/metrics.hpp"
#include "rrpm/problem.hpp"
#include "rrpm/reference.hpp"
#include "rrpm/schedule.hpp"
#include "rrpm/serialize.hpp"
#include "rrpm/solvers.hpp"
