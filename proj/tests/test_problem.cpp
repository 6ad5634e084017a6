#include "rrpm/linalg.hpp"
#include "rrpm/problem.hpp"

#include "oracle_helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace {

using rrpm::Matrix;
using rrpm::Vector;

Matrix random_matrix(int rows, int cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix A(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) A(i, j) = normal(rng);
  return A;
}

TEST(SpectralNorm, MatchesSvdOnRandomMatrices) {
  for (unsigned seed = 1; seed <= 8; ++seed) {
    const int rows = 3 + static_cast<int>(seed % 4);
    const int cols = 2 + static_cast<int>(seed % 5);
    const Matrix A = random_matrix(rows, cols, seed);
    const double expected = Eigen::JacobiSVD<Matrix>(A).singularValues()(0);
    EXPECT_NEAR(rrpm::spectral_norm(A), expected, 1e-10 * std::max(1.0, expected));
  }
}

TEST(SpectralNorm, ZeroAndRankOne) {
  EXPECT_EQ(rrpm::spectral_norm(Matrix::Zero(3, 4)), 0.0);
  Vector u(2), v(3);
  u << 3.0, 4.0;
  v << 0.0, 1.0, 0.0;
  const Matrix A = u * v.transpose();
  EXPECT_NEAR(rrpm::spectral_norm(A), 5.0, 1e-12);
}

TEST(QuadraticSummand, ValueGradientAndLipschitz) {
  Matrix A(2, 3);
  A << 1.0, 0.0, 2.0,
       0.0, -1.0, 1.0;
  Vector a(3);
  a << 0.5, -0.25, 1.0;
  rrpm::QuadraticSummand f(A, a);

  Vector x(3);
  x << 0.3, -0.7, 0.1;
  const double expected = (A * x).squaredNorm() + a.dot(x);
  EXPECT_DOUBLE_EQ(f.value(x), expected);

  const Vector g = f.gradient(x);
  const Vector g_fd = oracle::finite_difference_gradient(
      [&](const Vector& y) { return f.value(y); }, x);
  EXPECT_LT((g - g_fd).norm(), 1e-8);

  const double sigma = Eigen::JacobiSVD<Matrix>(A).singularValues()(0);
  EXPECT_NEAR(f.lipschitz(), 2.0 * sigma * sigma, 1e-10);
}

TEST(QuadraticSummand, RejectsDimensionMismatch) {
  Matrix A(2, 3);
  A.setZero();
  Vector a(2);
  a.setZero();
  EXPECT_THROW(rrpm::QuadraticSummand(A, a), std::invalid_argument);
}

TEST(SmoothSumObjective, AveragesSummandsExactly) {
  // Hand-checked one-dimensional pair: f1 = x^2 + x, f2 = 0.25 x^2 - x.
  Matrix A1(1, 1), A2(1, 1);
  A1 << 1.0;
  A2 << 0.5;
  Vector a1(1), a2(1);
  a1 << 1.0;
  a2 << -1.0;
  std::vector<rrpm::QuadraticSummand> summands;
  summands.emplace_back(A1, a1);
  summands.emplace_back(A2, a2);
  rrpm::SmoothSumObjective f(std::move(summands));

  Vector x(1);
  x << 2.0;
  // f(2) = ((4 + 2) + (1 - 2)) / 2 = 2.5, grad f(2) = (5 + 0) / 2 = 2.5.
  EXPECT_DOUBLE_EQ(f.value(x), 2.5);
  EXPECT_DOUBLE_EQ(f.gradient(x)[0], 2.5);
  EXPECT_DOUBLE_EQ(f.summand(0).gradient(x)[0], 5.0);
  EXPECT_DOUBLE_EQ(f.summand(1).gradient(x)[0], 0.0);
  EXPECT_THROW(f.summand(2), std::invalid_argument);

  const double l1 = f.summand(0).lipschitz();
  const double l2 = f.summand(1).lipschitz();
  EXPECT_NEAR(f.lipschitz_aggregate(), std::sqrt((l1 * l1 + l2 * l2) / 2.0), 1e-14);
}

TEST(AggregateQuadratic, MatchesObjectiveEverywhere) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<rrpm::QuadraticSummand> summands;
  for (int i = 0; i < 4; ++i) {
    Matrix A = random_matrix(3, 5, 100 + static_cast<unsigned>(i));
    Vector a(5);
    for (int j = 0; j < 5; ++j) a[j] = normal(rng);
    summands.emplace_back(A, a);
  }
  rrpm::SmoothSumObjective f(std::move(summands));
  rrpm::AggregateQuadratic agg(f);

  for (int trial = 0; trial < 5; ++trial) {
    Vector x(5);
    for (int j = 0; j < 5; ++j) x[j] = normal(rng);
    EXPECT_NEAR(agg.value(x), f.value(x), 1e-12 * std::max(1.0, std::abs(f.value(x))));
    EXPECT_LT((agg.gradient(x) - f.gradient(x)).norm(), 1e-12 * std::max(1.0, f.gradient(x).norm()));
  }
}

TEST(ConstraintFunction, AffineValueAndSubgradient) {
  Vector q(2);
  q << 1.0, 0.0;
  rrpm::ConstraintFunction c = rrpm::ConstraintFunction::affine(q, 1.0);
  Vector x(2);
  x << 2.0, 7.0;
  EXPECT_DOUBLE_EQ(c.value(x), 1.0);  // x1 - 1 at x1 = 2
  auto [phi, xi] = c.value_and_subgradient(x);
  EXPECT_DOUBLE_EQ(phi, 1.0);
  EXPECT_DOUBLE_EQ(xi[0], 1.0);
  EXPECT_DOUBLE_EQ(xi[1], 0.0);
}

TEST(ConstraintFunction, QuadraticSubgradientMatchesFiniteDifferences) {
  Matrix B(2, 3);
  B << 1.0, 2.0, 0.0,
       0.0, 1.0, -1.0;
  Vector b(3);
  b << 0.1, -0.2, 0.3;
  rrpm::ConstraintFunction c = rrpm::ConstraintFunction::quadratic(B, b, 0.4);
  Vector x(3);
  x << 0.5, -0.1, 0.2;
  auto [phi, xi] = c.value_and_subgradient(x);
  EXPECT_NEAR(phi, (B * x).squaredNorm() + b.dot(x) - 0.4, 1e-14);
  const Vector fd = oracle::finite_difference_gradient(
      [&](const Vector& y) { return c.value(y); }, x);
  EXPECT_LT((xi - fd).norm(), 1e-8);
}

TEST(ConstraintFunction, MaxGroupKeepsFirstAttainingMember) {
  // phi_a(x) = x1, phi_b(x) = 0.5 x2: both equal 2 at x = (2, 4).
  Vector qa(2), qb(2);
  qa << 1.0, 0.0;
  qb << 0.0, 0.5;
  std::vector<rrpm::ConstraintFunction> members;
  members.push_back(rrpm::ConstraintFunction::affine(qa, 0.0));
  members.push_back(rrpm::ConstraintFunction::affine(qb, 0.0));
  rrpm::ConstraintFunction group = rrpm::ConstraintFunction::max_group(std::move(members));

  Vector x(2);
  x << 2.0, 4.0;
  auto [phi, xi] = group.value_and_subgradient(x);
  EXPECT_DOUBLE_EQ(phi, 2.0);
  EXPECT_DOUBLE_EQ(xi[0], 1.0);  // tie resolved to the first member
  EXPECT_DOUBLE_EQ(xi[1], 0.0);

  x << 1.0, 10.0;  // second member now strictly larger
  auto [phi2, xi2] = group.value_and_subgradient(x);
  EXPECT_DOUBLE_EQ(phi2, 5.0);
  EXPECT_DOUBLE_EQ(xi2[0], 0.0);
  EXPECT_DOUBLE_EQ(xi2[1], 0.5);
}

TEST(ConstraintFunction, NestedMaxGroupRecurses) {
  Vector qa(1), qb(1);
  qa << 2.0;
  qb << -3.0;
  std::vector<rrpm::ConstraintFunction> inner;
  inner.push_back(rrpm::ConstraintFunction::affine(qa, 0.0));
  inner.push_back(rrpm::ConstraintFunction::affine(qb, 0.0));
  std::vector<rrpm::ConstraintFunction> outer;
  outer.push_back(rrpm::ConstraintFunction::max_group(std::move(inner)));
  Vector qc(1);
  qc << 0.0;
  outer.push_back(rrpm::ConstraintFunction::affine(qc, 100.0));  // constant -100
  rrpm::ConstraintFunction group = rrpm::ConstraintFunction::max_group(std::move(outer));

  Vector x(1);
  x << -1.0;  // inner max is -3x = 3, attained by the second inner member
  auto [phi, xi] = group.value_and_subgradient(x);
  EXPECT_DOUBLE_EQ(phi, 3.0);
  EXPECT_DOUBLE_EQ(xi[0], -3.0);
}

TEST(ConstraintFunction, EmptyMaxGroupRejected) {
  std::vector<rrpm::ConstraintFunction> members;
  EXPECT_THROW(rrpm::ConstraintFunction::max_group(std::move(members)), std::invalid_argument);
}

TEST(SimpleSet, BoxMembershipAndBoundingBox) {
  Vector lo(2), hi(2);
  lo << -1.0, 0.0;
  hi << 1.0, 2.0;
  rrpm::SimpleSet box = rrpm::SimpleSet::box(lo, hi);
  Vector in(2), out(2);
  in << 0.0, 1.0;
  out << 1.5, 1.0;
  EXPECT_TRUE(box.contains(in));
  EXPECT_FALSE(box.contains(out));
  auto bb = box.bounding_box();
  EXPECT_EQ(bb.first, lo);
  EXPECT_EQ(bb.second, hi);

  Vector bad_hi(2);
  bad_hi << -2.0, 2.0;
  EXPECT_THROW(rrpm::SimpleSet::box(lo, bad_hi), std::invalid_argument);
}

TEST(SimpleSet, BallAndWholeSpace) {
  Vector center(3);
  center << 1.0, 0.0, 0.0;
  rrpm::SimpleSet ball = rrpm::SimpleSet::ball(center, 2.0);
  Vector x(3);
  x << 3.0, 0.0, 0.0;
  EXPECT_TRUE(ball.contains(x));
  x << 3.0 + 1e-6, 0.0, 0.0;
  EXPECT_FALSE(ball.contains(x));
  EXPECT_DOUBLE_EQ(ball.bounding_box().first[0], -1.0);
  EXPECT_DOUBLE_EQ(ball.bounding_box().second[0], 3.0);

  rrpm::SimpleSet all = rrpm::SimpleSet::whole_space();
  EXPECT_TRUE(all.contains(x));
  EXPECT_THROW(all.bounding_box(), std::invalid_argument);
  EXPECT_THROW(rrpm::SimpleSet::ball(center, -1.0), std::invalid_argument);
}

rrpm::ProblemInstance tiny_instance() {
  Matrix A(1, 2);
  A << 1.0, 0.0;
  Vector a(2);
  a << 0.0, 1.0;
  std::vector<rrpm::QuadraticSummand> summands;
  summands.emplace_back(A, a);

  Vector q(2);
  q << 1.0, 0.0;
  std::vector<rrpm::ConstraintFunction> constraints;
  constraints.push_back(rrpm::ConstraintFunction::affine(q, 0.0));

  return rrpm::ProblemInstance(std::move(summands), std::move(constraints),
                               rrpm::SimpleSet::whole_space(), rrpm::InstanceMetadata{});
}

TEST(ProblemInstance, AccessorsAndEvaluation) {
  rrpm::ProblemInstance inst = tiny_instance();
  EXPECT_EQ(inst.dimension(), 2);
  EXPECT_EQ(inst.num_summands(), 1);
  EXPECT_EQ(inst.num_constraints(), 1);

  Vector x(2);
  x << 2.0, 3.0;
  EXPECT_DOUBLE_EQ(rrpm::evaluate_objective(inst, x), 4.0 + 3.0);
  const Vector g = rrpm::evaluate_full_gradient(inst, x);
  EXPECT_DOUBLE_EQ(g[0], 4.0);
  EXPECT_DOUBLE_EQ(g[1], 1.0);
  EXPECT_DOUBLE_EQ(rrpm::max_constraint_value(inst, x), 2.0);
  EXPECT_DOUBLE_EQ(rrpm::max_violation(inst, x), 2.0);
  x << -1.0, 0.0;
  EXPECT_DOUBLE_EQ(rrpm::max_violation(inst, x), 0.0);
}

TEST(ProblemInstance, RejectsInconsistentDimensions) {
  Matrix A(1, 2);
  A << 1.0, 0.0;
  Vector a(2);
  a.setZero();
  std::vector<rrpm::QuadraticSummand> summands;
  summands.emplace_back(A, a);
  Vector q(3);
  q.setZero();
  std::vector<rrpm::ConstraintFunction> constraints;
  constraints.push_back(rrpm::ConstraintFunction::affine(q, 0.0));
  EXPECT_THROW(rrpm::ProblemInstance(std::move(summands), std::move(constraints),
                                     rrpm::SimpleSet::whole_space(), rrpm::InstanceMetadata{}),
               std::invalid_argument);
}

TEST(ProblemInstance, ReferenceMustBeConsistent) {
  rrpm::ProblemInstance inst = tiny_instance();
  rrpm::ReferenceSolution ref;
  ref.x_star = Vector(2);
  ref.x_star << 1.0, 0.0;  // violates x1 <= 0 by a full unit
  ref.f_star = 1.0;
  ref.max_violation = 0.0;
  ref.residual = 0.0;
  ref.iterations = 1;
  ref.tol = 1e-8;
  EXPECT_THROW(inst.with_reference(ref), std::invalid_argument);

  ref.x_star << -1e-12, 0.0;
  ref.f_star = 1e-24;
  rrpm::ProblemInstance with = inst.with_reference(ref);
  ASSERT_TRUE(with.metadata().reference.has_value());
  EXPECT_DOUBLE_EQ(with.metadata().reference->x_star[0], -1e-12);
}

TEST(MaxConstraintValue, EmptyConstraintListIsMinusInfinity) {
  Matrix A(1, 1);
  A << 1.0;
  Vector a(1);
  a << 0.0;
  std::vector<rrpm::QuadraticSummand> summands;
  summands.emplace_back(A, a);
  rrpm::ProblemInstance inst(std::move(summands), {}, rrpm::SimpleSet::whole_space(),
                             rrpm::InstanceMetadata{});
  Vector x(1);
  x << 1.0;
  EXPECT_EQ(rrpm::max_constraint_value(inst, x), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(rrpm::max_violation(inst, x), 0.0);
}

}  // namespace
