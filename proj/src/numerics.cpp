#include "kssp/numerics.hpp"

#include <cmath>

#include <Eigen/SVD>

namespace kssp {

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix matrix_from_rows(Eigen::Index rows, Eigen::Index cols, std::span<const double> row_major) {
  if (static_cast<Eigen::Index>(row_major.size()) != rows * cols) {
    throw std::invalid_argument("matrix_from_rows: entry count does not match rows*cols");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = row_major[static_cast<size_t>(r * cols + c)];
    }
  }
  if (!m.allFinite()) {
    throw std::invalid_argument("matrix_from_rows: non-finite entry");
  }
  return m;
}

Vector vector_from(std::span<const double> entries) {
  Vector v(static_cast<Eigen::Index>(entries.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = entries[static_cast<size_t>(i)];
  if (!v.allFinite()) {
    throw std::invalid_argument("vector_from: non-finite entry");
  }
  return v;
}

SvdResult svd(const Matrix& m) {
  if (m.size() == 0) {
    throw std::invalid_argument("svd: empty matrix");
  }
  Eigen::JacobiSVD<Matrix> dec(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success) {
    throw NumericsError("svd: Jacobi iteration failed to converge");
  }
  return SvdResult{dec.matrixU(), dec.singularValues(), dec.matrixV().transpose()};
}

Matrix pseudoinverse(const Matrix& m, double rank_tol, Eigen::Index* rank_out) {
  if (rank_tol <= 0.0) {
    throw std::invalid_argument("pseudoinverse: rank_tol must be positive");
  }
  SvdResult dec = svd(m);
  const double smax = dec.singular_values.size() > 0 ? dec.singular_values(0) : 0.0;
  const double cutoff = rank_tol * smax;
  Eigen::Index rank = 0;
  Vector inv = Vector::Zero(dec.singular_values.size());
  for (Eigen::Index i = 0; i < dec.singular_values.size(); ++i) {
    if (dec.singular_values(i) > cutoff && dec.singular_values(i) > 0.0) {
      inv(i) = 1.0 / dec.singular_values(i);
      ++rank;
    }
  }
  if (rank_out != nullptr) *rank_out = rank;
  return dec.vt.transpose() * inv.asDiagonal() * dec.u.transpose();
}

LinearSolve solve_linear(const Matrix& a, const Matrix& b, double cond_limit) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("solve_linear: matrix must be square");
  }
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("solve_linear: dimension mismatch");
  }
  Eigen::JacobiSVD<Matrix> dec(a);
  const double smax = dec.singularValues()(0);
  const double smin = dec.singularValues()(dec.singularValues().size() - 1);
  const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!std::isfinite(cond) || cond > cond_limit) {
    throw NearSingularError("solve_linear: coefficient matrix is singular or near-singular"
                            " (condition estimate " + std::to_string(cond) + ")", cond);
  }
  Eigen::PartialPivLU<Matrix> lu(a);
  Matrix x = lu.solve(b);
  // one step of iterative refinement tightens the residual to machine level
  x += lu.solve(b - a * x);
  return LinearSolve{std::move(x), cond};
}

Vector rk4_step(const VectorField& f, const Vector& x, const Vector& u, double dt) {
  if (dt <= 0.0) {
    throw std::invalid_argument("rk4_step: dt must be positive");
  }
  const Vector k1 = f(x, u);
  const Vector k2 = f(x + 0.5 * dt * k1, u);
  const Vector k3 = f(x + 0.5 * dt * k2, u);
  const Vector k4 = f(x + dt * k3, u);
  Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) {
    throw IntegrationError("rk4_step: non-finite stage value", x);
  }
  return next;
}

Trajectory integrate(const VectorField& f, const Vector& x0, const InputSignalFn& input,
                     double dt, int n_steps) {
  if (n_steps < 1) {
    throw std::invalid_argument("integrate: n_steps must be >= 1");
  }
  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(static_cast<size_t>(n_steps) + 1);
  traj.inputs.reserve(static_cast<size_t>(n_steps));
  traj.states.push_back(x0);
  for (int k = 0; k < n_steps; ++k) {
    const Vector u = input(k * dt);
    try {
      traj.states.push_back(rk4_step(f, traj.states.back(), u, dt));
    } catch (const IntegrationError& e) {
      throw IntegrationError(std::string(e.what()) + " at step " + std::to_string(k),
                             e.state, k);
    }
    traj.inputs.push_back(u);
  }
  return traj;
}

}  // namespace kssp
