#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "kssp/trajectory.hpp"

namespace kssp {

class NumericsError : public std::runtime_error {
 public:
  explicit NumericsError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a linear solve meets a (numerically) singular matrix. Carries
/// the condition estimate so callers can report how close to singular it was.
class NearSingularError : public NumericsError {
 public:
  NearSingularError(const std::string& what, double condition)
      : NumericsError(what), condition(condition) {}
  double condition;
};

/// Thrown when an ODE step produces a non-finite value. Carries the state the
/// integrator was at and the step index (set by integrate()).
class IntegrationError : public NumericsError {
 public:
  IntegrationError(const std::string& what, Vector state, int step = -1)
      : NumericsError(what), state(std::move(state)), step(step) {}
  Vector state;
  int step;
};

bool all_finite(const Matrix& m);

/// Checked construction from row-major entries; rejects NaN/Inf and size
/// mismatches.
Matrix matrix_from_rows(Eigen::Index rows, Eigen::Index cols, std::span<const double> row_major);
Vector vector_from(std::span<const double> entries);

struct SvdResult {
  Matrix u;
  Vector singular_values;  // nonincreasing, nonnegative
  Matrix vt;
};

SvdResult svd(const Matrix& m);

/// Moore-Penrose pseudoinverse. Singular values below rank_tol * sigma_max are
/// treated as zero; the retained rank is written to rank_out when given.
Matrix pseudoinverse(const Matrix& m, double rank_tol = 1e-10, Eigen::Index* rank_out = nullptr);

struct LinearSolve {
  Matrix solution;
  double condition;  // 2-norm condition estimate of the coefficient matrix
};

/// Solves a * x = b for square a. Throws NearSingularError when the condition
/// estimate exceeds cond_limit (the numerical guard for near-unit Koopman
/// eigenvalues).
LinearSolve solve_linear(const Matrix& a, const Matrix& b, double cond_limit = 1e10);

using VectorField = std::function<Vector(const Vector& x, const Vector& u)>;
using InputSignalFn = std::function<Vector(double t)>;

/// Classical fourth-order Runge-Kutta step with the input held constant
/// across the step (zero-order hold).
Vector rk4_step(const VectorField& f, const Vector& x, const Vector& u, double dt);

/// Fixed-step RK4 integration; n_steps + 1 states, inputs sampled at each
/// step start.
Trajectory integrate(const VectorField& f, const Vector& x0, const InputSignalFn& input,
                     double dt, int n_steps);

}  // namespace kssp
