#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>

namespace rrpm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline void check_finite(const Vector& x, const char* what) {
  if (!x.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite entries");
  }
}

inline void check_dimension(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(got) + " vs " + std::to_string(want) + ")");
  }
}

/// Largest singular value of A, computed by power iteration on the smaller
/// of the two Gram matrices.  Deterministic: the start vector comes from a
/// fixed-seed generator, so repeated calls agree bitwise.
inline double spectral_norm(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  const bool tall = A.rows() >= A.cols();
  const Matrix G = tall ? Matrix(A.transpose() * A) : Matrix(A * A.transpose());
  const Eigen::Index n = G.rows();

  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = gauss(rng);
  if (v.norm() == 0.0) v.setOnes();
  v /= v.norm();

  double lambda = 0.0;
  const int max_iters = 10000;
  for (int it = 0; it < max_iters; ++it) {
    Vector w = G * v;
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;  // v is in the null space and so is everything G reaches
    w /= wn;
    Vector gw = G * w;
    lambda = w.dot(gw);
    const double res = (gw - lambda * w).norm();
    v = w;
    if (res <= 1e-13 * std::max(1.0, lambda)) break;
  }
  return std::sqrt(std::max(0.0, lambda));
}

}  // namespace rrpm
