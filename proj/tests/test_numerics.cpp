#include <doctest.h>

#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "kssp/numerics.hpp"

using namespace kssp;

namespace {

Matrix random_matrix(int rows, int cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(rng);
  }
  return m;
}

}  // namespace

TEST_CASE("matrix construction rejects non-finite entries") {
  const double good[4] = {1.0, 2.0, 3.0, 4.0};
  CHECK_NOTHROW(matrix_from_rows(2, 2, good));
  const double bad[4] = {1.0, std::nan(""), 3.0, 4.0};
  CHECK_THROWS_AS(matrix_from_rows(2, 2, bad), std::invalid_argument);
  const double wrong_count[3] = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(matrix_from_rows(2, 2, wrong_count), std::invalid_argument);
}

TEST_CASE("svd of identity") {
  const SvdResult dec = svd(Matrix::Identity(3, 3));
  for (int i = 0; i < 3; ++i) CHECK(dec.singular_values(i) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((dec.u * dec.singular_values.asDiagonal() * dec.vt - Matrix::Identity(3, 3)).norm() <
        1e-12);
}

TEST_CASE("svd of diagonal matrix sorts singular values") {
  Matrix d = Matrix::Zero(3, 3);
  d(0, 0) = 3.0;
  d(1, 1) = 2.0;
  const SvdResult dec = svd(d);
  CHECK(dec.singular_values(0) == doctest::Approx(3.0));
  CHECK(dec.singular_values(1) == doctest::Approx(2.0));
  CHECK(dec.singular_values(2) == doctest::Approx(0.0));
  for (int i = 1; i < 3; ++i) CHECK(dec.singular_values(i) <= dec.singular_values(i - 1));
}

TEST_CASE("svd reconstructs a random matrix") {
  const Matrix m = random_matrix(5, 3, 42);
  const SvdResult dec = svd(m);
  const Matrix rebuilt = dec.u * dec.singular_values.asDiagonal() * dec.vt;
  CHECK((rebuilt - m).norm() / m.norm() < 1e-10);
}

TEST_CASE("pseudoinverse basics") {
  CHECK((pseudoinverse(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm() < 1e-12);

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  const Matrix dp = pseudoinverse(d);
  CHECK(dp(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(dp(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("pseudoinverse satisfies the Moore-Penrose conditions") {
  const Matrix m = random_matrix(4, 2, 7);
  const Matrix p = pseudoinverse(m);
  CHECK((p * m - Matrix::Identity(2, 2)).norm() < 1e-10);  // full column rank
  CHECK((m * p * m - m).norm() < 1e-8);
  CHECK((p * m * p - p).norm() < 1e-8);
  CHECK(((m * p).transpose() - m * p).norm() < 1e-8);
  CHECK(((p * m).transpose() - p * m).norm() < 1e-8);
}

TEST_CASE("double pseudoinverse recovers a full-rank matrix") {
  const Matrix m = random_matrix(4, 3, 11);
  CHECK((pseudoinverse(pseudoinverse(m)) - m).norm() < 1e-8);
}

TEST_CASE("pseudoinverse reports the retained rank") {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 0) = 1.0;
  m(1, 1) = 1e-14;  // below the relative cutoff
  Eigen::Index rank = 0;
  pseudoinverse(m, 1e-10, &rank);
  CHECK(rank == 1);
}

TEST_CASE("solve_linear basics") {
  const Matrix b = random_matrix(4, 2, 3);
  const LinearSolve eye = solve_linear(Matrix::Identity(4, 4), b);
  CHECK((eye.solution - b).norm() < 1e-14);
  CHECK(eye.condition == doctest::Approx(1.0));

  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = 4.0;
  Matrix rhs(2, 1);
  rhs << 2.0, 8.0;
  const LinearSolve diag = solve_linear(a, rhs);
  CHECK(diag.solution(0, 0) == doctest::Approx(1.0));
  CHECK(diag.solution(1, 0) == doctest::Approx(2.0));
}

TEST_CASE("solve_linear residual on a random well-conditioned system") {
  const Matrix a = Matrix::Identity(6, 6) + 0.3 * random_matrix(6, 6, 5);
  const Matrix b = random_matrix(6, 3, 6);
  const LinearSolve solved = solve_linear(a, b);
  CHECK((a * solved.solution - b).norm() / b.norm() < 1e-9);
  CHECK(solved.condition < 1e8);
}

TEST_CASE("solve_linear rejects singular and near-singular systems") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  const Matrix b = Matrix::Ones(2, 1);
  CHECK_THROWS_AS(solve_linear(a, b), NearSingularError);

  a(1, 1) = 1e-12;  // cond 1e12 over default limit 1e10
  try {
    solve_linear(a, b);
    FAIL("expected NearSingularError");
  } catch (const NearSingularError& e) {
    CHECK(e.condition > 1e10);
  }
}

TEST_CASE("rk4_step on a zero field leaves the state unchanged") {
  const VectorField zero = [](const Vector& x, const Vector&) {
    return Vector(Vector::Zero(x.size()));
  };
  Vector x(3);
  x << 1.0, -2.0, 0.5;
  const Vector next = rk4_step(zero, x, Vector::Zero(1), 0.1);
  CHECK((next - x).norm() == 0.0);
}

TEST_CASE("rk4_step matches the fourth-order Taylor value for exponential decay") {
  const VectorField decay = [](const Vector& x, const Vector&) { return Vector(-x); };
  Vector x(1);
  x << 1.0;
  const Vector next = rk4_step(decay, x, Vector::Zero(1), 0.1);
  // 1 - h + h^2/2 - h^3/6 + h^4/24 at h = 0.1
  CHECK(next(0) == doctest::Approx(0.90483750).epsilon(1e-9));
}

TEST_CASE("rk4_step flags non-finite stages") {
  const VectorField blowup = [](const Vector& x, const Vector&) {
    Vector dx(1);
    dx << 1.0 / x(0);
    return dx;
  };
  Vector x(1);
  x << 0.0;
  CHECK_THROWS_AS(rk4_step(blowup, x, Vector::Zero(1), 0.1), IntegrationError);
}

TEST_CASE("rk4 empirical convergence order is close to four") {
  const VectorField decay = [](const Vector& x, const Vector&) { return Vector(-x); };
  Vector x0(1);
  x0 << 1.0;
  const InputSignalFn no_input = [](double) { return Vector(Vector::Zero(1)); };
  auto final_error = [&](double dt, int steps) {
    const Trajectory traj = integrate(decay, x0, no_input, dt, steps);
    return std::abs(traj.states.back()(0) - std::exp(-1.0));
  };
  const double order = std::log2(final_error(0.1, 10) / final_error(0.05, 20));
  CHECK(order > 3.7);
  CHECK(order < 4.3);
}

TEST_CASE("integrate keeps a zero field constant and hits the analytic decay limit") {
  const VectorField zero = [](const Vector& x, const Vector&) {
    return Vector(Vector::Zero(x.size()));
  };
  Vector x0(2);
  x0 << 3.0, -1.0;
  const InputSignalFn no_input = [](double) { return Vector(Vector::Zero(1)); };
  const Trajectory constant = integrate(zero, x0, no_input, 0.1, 5);
  CHECK(constant.states.size() == 6);
  CHECK(constant.inputs.size() == 5);
  for (const auto& x : constant.states) CHECK((x - x0).norm() == 0.0);

  const VectorField decay = [](const Vector& x, const Vector&) { return Vector(-x); };
  Vector one(1);
  one << 1.0;
  const Trajectory traj = integrate(decay, one, no_input, 0.1, 10);
  CHECK(std::abs(traj.states.back()(0) - std::exp(-1.0)) < 1e-6);
}

TEST_CASE("integrate matches the matrix-exponential solution for a step input") {
  Matrix a(2, 2);
  a << -1.0, 0.3, 0.2, -0.8;
  Matrix b(2, 1);
  b << 1.0, 0.5;
  Vector u(1);
  u << 2.0;
  const double dt = 0.05;
  const int steps = 20;

  const VectorField field = [&](const Vector& x, const Vector& uu) -> Vector {
    return a * x + b * uu;
  };
  Vector x0(2);
  x0 << 1.0, -1.0;
  const Trajectory traj = integrate(field, x0, [&](double) { return u; }, dt, steps);

  // zero-order-hold discretization via the matrix exponential
  const Matrix ad = (a * dt).exp();
  const Matrix bd = a.inverse() * (ad - Matrix::Identity(2, 2)) * b;
  Vector x = x0;
  for (int k = 1; k <= steps; ++k) {
    x = ad * x + bd * u;
    CHECK((traj.states[static_cast<size_t>(k)] - x).norm() < 1e-6);
  }
}
