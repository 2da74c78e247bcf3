#pragma once

#include <vector>

#include "kssp/systems.hpp"

namespace kssp {

/// Best-fit discrete linear model x_{k+1} = A x_k + B u_k.
struct LinearModel {
  Matrix a;
  Matrix b;
  /// ||X_f - A X_p - B U_p||_F / ||X_f||_F on the training snapshots.
  double fit_residual = 0.0;
  /// Set when the stacked snapshot matrix did not have full row rank; the
  /// fit is then the minimum-norm least-squares solution.
  bool rank_deficient = false;
};

/// DMD with control: [A B] = X_f * pinv([X_p; U_p]).
LinearModel fit_dmdc(const SnapshotSet& snap, double rank_tol = 1e-10);

/// Two-stage variant: A from unforced data (U_p == 0), then B from forced
/// data with A held fixed.
LinearModel fit_two_stage(const SnapshotSet& unforced, const SnapshotSet& forced,
                          double rank_tol = 1e-10);

/// Iterates the linear map from x0 under the given input sequence.
Trajectory predict_linear(const LinearModel& model, const Vector& x0,
                          const std::vector<Vector>& inputs, double dt = 1.0);

}  // namespace kssp
