#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace rrpm {

/// Step-size schedule.  Three kinds:
///   constant:        alpha_k = base
///   power:           alpha_k = base / (k+1)^exponent
///   epoch_constant:  alpha_k = base / (epoch+1)^exponent (constant within an epoch)
class StepSchedule {
 public:
  enum class Kind { constant, power, epoch_constant };

  static StepSchedule constant(double alpha) { return StepSchedule(Kind::constant, alpha, 0.0); }

  static StepSchedule power(double base, double exponent) {
    return StepSchedule(Kind::power, base, exponent);
  }

  static StepSchedule epoch_constant(double base, double exponent) {
    return StepSchedule(Kind::epoch_constant, base, exponent);
  }

  double at(long k, long epoch = 0) const {
    if (k < 0 || epoch < 0) throw std::invalid_argument("StepSchedule::at: negative index");
    switch (kind_) {
      case Kind::constant: return base_;
      case Kind::power: return base_ / std::pow(static_cast<double>(k) + 1.0, exponent_);
      case Kind::epoch_constant:
        return base_ / std::pow(static_cast<double>(epoch) + 1.0, exponent_);
    }
    return base_;
  }

  /// Whether the steps sum to infinity while their squares stay summable
  /// (true exactly for decaying kinds with exponent in (1/2, 1]).
  bool robbins_monro() const {
    if (kind_ == Kind::constant) return false;
    return exponent_ > 0.5 && exponent_ <= 1.0;
  }

  Kind kind() const { return kind_; }
  double base() const { return base_; }
  double exponent() const { return exponent_; }

  std::string describe() const {
    std::ostringstream out;
    switch (kind_) {
      case Kind::constant: out << "constant(" << base_ << ")"; break;
      case Kind::power: out << "power(" << base_ << "," << exponent_ << ")"; break;
      case Kind::epoch_constant: out << "epoch_constant(" << base_ << "," << exponent_ << ")"; break;
    }
    return out.str();
  }

 private:
  StepSchedule(Kind kind, double base, double exponent)
      : kind_(kind), base_(base), exponent_(exponent) {
    if (!(base > 0.0) || !std::isfinite(base)) {
      throw std::invalid_argument("StepSchedule: base step must be positive");
    }
    if (exponent < 0.0 || !std::isfinite(exponent)) {
      throw std::invalid_argument("StepSchedule: exponent must be nonnegative");
    }
  }

  Kind kind_;
  double base_;
  double exponent_;
};

/// Square-root decay sized from the problem constants: base step
/// rho / (16 L m kappa^2), exponent 1/2.
inline StepSchedule sqrt_decay_from_constants(double L, int m, double kappa, double rho) {
  if (!(L > 0.0) || m < 1 || !(kappa >= 1.0) || !(rho > 0.0) || rho > 1.0) {
    throw std::invalid_argument("sqrt_decay_from_constants: need L > 0, m >= 1, kappa >= 1, rho in (0,1]");
  }
  return StepSchedule::power(rho / (16.0 * L * m * kappa * kappa), 0.5);
}

}  // namespace rrpm
