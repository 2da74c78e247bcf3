#include "kssp/dmdc.hpp"

#include <stdexcept>

namespace kssp {

namespace {

double relative_residual(const LinearModel& model, const SnapshotSet& snap) {
  const double denom = snap.x_future.norm();
  if (denom == 0.0) return 0.0;
  const Matrix r = snap.x_future - model.a * snap.x_past - model.b * snap.u_past;
  return r.norm() / denom;
}

}  // namespace

LinearModel fit_dmdc(const SnapshotSet& snap, double rank_tol) {
  const Eigen::Index n = snap.x_past.rows();
  const Eigen::Index m = snap.u_past.rows();
  const Eigen::Index cols = snap.columns();
  if (cols == 0) throw std::invalid_argument("fit_dmdc: empty snapshot set");
  if (snap.x_future.cols() != cols || snap.u_past.cols() != cols) {
    throw std::invalid_argument("fit_dmdc: snapshot column counts differ");
  }
  Matrix stacked(n + m, cols);
  stacked.topRows(n) = snap.x_past;
  stacked.bottomRows(m) = snap.u_past;
  Eigen::Index rank = 0;
  const Matrix pinv = pseudoinverse(stacked, rank_tol, &rank);
  const Matrix ab = snap.x_future * pinv;
  LinearModel model;
  model.a = ab.leftCols(n);
  model.b = ab.rightCols(m);
  model.rank_deficient = rank < n + m;
  model.fit_residual = relative_residual(model, snap);
  return model;
}

LinearModel fit_two_stage(const SnapshotSet& unforced, const SnapshotSet& forced,
                          double rank_tol) {
  if (unforced.u_past.size() > 0 && unforced.u_past.cwiseAbs().maxCoeff() != 0.0) {
    throw std::invalid_argument("fit_two_stage: unforced snapshots must have zero inputs");
  }
  const Eigen::Index n = unforced.x_past.rows();
  const Eigen::Index m = forced.u_past.rows();
  Eigen::Index rank_a = 0;
  const Matrix a = unforced.x_future * pseudoinverse(unforced.x_past, rank_tol, &rank_a);
  Eigen::Index rank_b = 0;
  const Matrix b =
      (forced.x_future - a * forced.x_past) * pseudoinverse(forced.u_past, rank_tol, &rank_b);
  LinearModel model;
  model.a = a;
  model.b = b;
  model.rank_deficient = rank_a < n || rank_b < m;
  model.fit_residual = relative_residual(model, forced);
  return model;
}

Trajectory predict_linear(const LinearModel& model, const Vector& x0,
                          const std::vector<Vector>& inputs, double dt) {
  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(inputs.size() + 1);
  traj.inputs = inputs;
  traj.states.push_back(x0);
  for (const Vector& u : inputs) {
    traj.states.push_back(model.a * traj.states.back() + model.b * u);
  }
  return traj;
}

}  // namespace kssp
