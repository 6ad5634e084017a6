#pragma once

#include <stdexcept>
#include <string>

namespace rrpm {

/// Estimator or iterate state used in a way its invariants forbid
/// (stale SVRG snapshot, wrong estimator kind, ...).
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

/// A constraint set turned out to be empty (no feasible point exists).
class InfeasibleSetError : public std::runtime_error {
 public:
  explicit InfeasibleSetError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rrpm
