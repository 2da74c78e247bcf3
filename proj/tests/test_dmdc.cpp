#include <doctest.h>

#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "kssp/dmdc.hpp"
#include "kssp/rng.hpp"

using namespace kssp;

namespace {

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(rng);
  }
  return m;
}

// snapshot set from iterating an exact discrete map under given inputs
SnapshotSet discrete_snapshots(const Matrix& a, const Matrix& b,
                               const std::vector<Vector>& ics, int steps,
                               std::mt19937_64& rng, double input_scale) {
  LinearModel model;
  model.a = a;
  model.b = b;
  std::vector<Trajectory> trajs;
  for (const Vector& x0 : ics) {
    std::vector<Vector> inputs;
    for (int k = 0; k < steps; ++k) {
      inputs.push_back(random_matrix(static_cast<int>(b.cols()), 1, rng, input_scale).col(0));
    }
    trajs.push_back(predict_linear(model, x0, inputs));
  }
  return assemble_snapshots(trajs);
}

}  // namespace

TEST_CASE("identity dynamics with zero input recover A = I") {
  Trajectory traj;
  traj.dt = 1.0;
  for (int k = 0; k < 10; ++k) {
    Vector x(2);
    x << 1.0 + 0.1 * k, 2.0 - 0.2 * k;  // arbitrary states, identity map pairs
    traj.states.push_back(x);
  }
  // make x_{k+1} == x_k by pairing each state with itself
  SnapshotSet snap;
  snap.x_past.resize(2, 9);
  snap.x_future.resize(2, 9);
  snap.u_past = Matrix::Zero(1, 9);
  for (int k = 0; k < 9; ++k) {
    snap.x_past.col(k) = traj.states[static_cast<size_t>(k)];
    snap.x_future.col(k) = traj.states[static_cast<size_t>(k)];
  }
  const LinearModel model = fit_dmdc(snap);
  CHECK((model.a - Matrix::Identity(2, 2)).norm() < 1e-10);
  CHECK(model.rank_deficient);  // zero input rows cannot be excited
  CHECK(model.b.norm() < 1e-10);
}

TEST_CASE("scalar system with exciting input is recovered exactly") {
  std::mt19937_64 rng = make_rng(17);
  Matrix a(1, 1), b(1, 1);
  a << 0.5;
  b << 1.0;
  const SnapshotSet snap =
      discrete_snapshots(a, b, {Vector::Ones(1), -Vector::Ones(1)}, 10, rng, 1.0);
  const LinearModel model = fit_dmdc(snap);
  CHECK(std::abs(model.a(0, 0) - 0.5) < 1e-10);
  CHECK(std::abs(model.b(0, 0) - 1.0) < 1e-10);
  CHECK(model.fit_residual < 1e-12);
  CHECK_FALSE(model.rank_deficient);
}

TEST_CASE("dmdc recovers the matrix exponential of a discretized field") {
  // RK4 data at small dt: the fitted one-step map matches exp(A dt) to the
  // integrator's local accuracy
  std::mt19937_64 rng = make_rng(23);
  Matrix a(3, 3);
  a << -1.0, 0.4, 0.0, 0.1, -0.7, 0.2, 0.0, 0.3, -1.2;
  const Matrix b = random_matrix(3, 2, rng);
  const SystemSpec system = make_linear_test(a, b);
  const double dt = 0.02;

  std::vector<Trajectory> trajs;
  for (int t = 0; t < 8; ++t) {
    const Vector x0 = random_matrix(3, 1, rng).col(0);
    const Vector level = random_matrix(2, 1, rng).col(0);
    trajs.push_back(
        integrate(system.field, x0, [level](double) { return level; }, dt, 30));
  }
  const LinearModel model = fit_dmdc(assemble_snapshots(trajs));
  const Matrix ad = (a * dt).exp();
  CHECK((model.a - ad).norm() < 1e-8);
  const Matrix bd = a.inverse() * (ad - Matrix::Identity(3, 3)) * b;
  CHECK((model.b - bd).norm() < 1e-8);
}

TEST_CASE("exact recovery on random stable systems with persistent excitation") {
  std::mt19937_64 rng = make_rng(41);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 4, m = 2;
    Matrix a = random_matrix(n, n, rng);
    a *= 0.9 / std::max(1e-9, std::abs(a.eigenvalues().cwiseAbs().maxCoeff()));
    const Matrix b = random_matrix(n, m, rng);
    std::vector<Vector> ics;
    for (int i = 0; i < 3; ++i) ics.push_back(random_matrix(n, 1, rng).col(0));
    const SnapshotSet snap = discrete_snapshots(a, b, ics, 12, rng, 1.0);
    const LinearModel model = fit_dmdc(snap);
    CHECK((model.a - a).norm() + (model.b - b).norm() < 1e-8);
  }
}

TEST_CASE("perturbing the fit never lowers the residual") {
  std::mt19937_64 rng = make_rng(53);
  Matrix a = random_matrix(3, 3, rng);
  a *= 0.8 / std::abs(a.eigenvalues().cwiseAbs().maxCoeff());
  const Matrix b = random_matrix(3, 2, rng);
  std::vector<Vector> ics = {random_matrix(3, 1, rng).col(0), random_matrix(3, 1, rng).col(0)};
  const SnapshotSet snap = discrete_snapshots(a, b, ics, 15, rng, 1.0);
  const LinearModel model = fit_dmdc(snap);

  auto residual = [&](const Matrix& aa, const Matrix& bb) {
    return (snap.x_future - aa * snap.x_past - bb * snap.u_past).norm();
  };
  const double base = residual(model.a, model.b);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix da = random_matrix(3, 3, rng);
    Matrix db = random_matrix(3, 2, rng);
    da *= 1e-3 / da.norm();
    db *= 1e-3 / db.norm();
    CHECK(residual(model.a + da, model.b + db) >= base);
    CHECK(residual(model.a + da, model.b) >= base);
    CHECK(residual(model.a, model.b + db) >= base);
  }
}

TEST_CASE("two-stage fit matches the joint fit on identifiable data") {
  std::mt19937_64 rng = make_rng(67);
  Matrix a(2, 2), b(2, 1);
  a << 0.6, 0.1, -0.2, 0.7;
  b << 1.0, 0.5;

  std::vector<Vector> ics = {Vector::Ones(2), (Vector(2) << -1.0, 2.0).finished(),
                             (Vector(2) << 0.3, -0.8).finished()};
  // unforced: zero inputs
  LinearModel truth;
  truth.a = a;
  truth.b = b;
  std::vector<Trajectory> unforced_trajs;
  for (const auto& x0 : ics) {
    unforced_trajs.push_back(
        predict_linear(truth, x0, std::vector<Vector>(12, Vector::Zero(1))));
  }
  const SnapshotSet unforced = assemble_snapshots(unforced_trajs);
  const SnapshotSet forced = discrete_snapshots(a, b, ics, 12, rng, 1.0);

  const LinearModel staged = fit_two_stage(unforced, forced);
  const LinearModel joint = fit_dmdc(forced);
  CHECK((staged.a - joint.a).norm() < 1e-8);
  CHECK((staged.b - joint.b).norm() < 1e-8);
  CHECK((staged.a - a).norm() < 1e-9);
  CHECK((staged.b - b).norm() < 1e-9);

  // degenerate forced stage: zero inputs cannot identify B
  const LinearModel degenerate = fit_two_stage(unforced, unforced);
  CHECK(degenerate.rank_deficient);

  // scalar variant
  Matrix as(1, 1), bs(1, 1);
  as << 0.5;
  bs << 1.0;
  LinearModel scalar_truth;
  scalar_truth.a = as;
  scalar_truth.b = bs;
  std::vector<Trajectory> scalar_unforced = {
      predict_linear(scalar_truth, Vector::Ones(1), std::vector<Vector>(8, Vector::Zero(1)))};
  const SnapshotSet su = assemble_snapshots(scalar_unforced);
  const SnapshotSet sf = discrete_snapshots(as, bs, {Vector::Ones(1)}, 8, rng, 1.0);
  const LinearModel scalar_model = fit_two_stage(su, sf);
  CHECK(std::abs(scalar_model.a(0, 0) - 0.5) < 1e-10);
  CHECK(std::abs(scalar_model.b(0, 0) - 1.0) < 1e-10);
}

TEST_CASE("two-stage fit rejects forced snapshots in the unforced slot") {
  std::mt19937_64 rng = make_rng(3);
  Matrix a(1, 1), b(1, 1);
  a << 0.5;
  b << 1.0;
  const SnapshotSet forced = discrete_snapshots(a, b, {Vector::Ones(1)}, 8, rng, 1.0);
  CHECK_THROWS_AS(fit_two_stage(forced, forced), std::invalid_argument);
}

TEST_CASE("predict_linear iterates the map") {
  LinearModel constant;
  constant.a = Matrix::Identity(2, 2);
  constant.b = Matrix::Zero(2, 1);
  Vector x0(2);
  x0 << 1.0, -2.0;
  const Trajectory fixed =
      predict_linear(constant, x0, std::vector<Vector>(5, Vector::Zero(1)));
  CHECK(fixed.states.size() == 6);
  for (const auto& x : fixed.states) CHECK((x - x0).norm() == 0.0);

  LinearModel halving;
  halving.a = Matrix::Constant(1, 1, 0.5);
  halving.b = Matrix::Zero(1, 1);
  const Trajectory halves =
      predict_linear(halving, Vector::Ones(1), std::vector<Vector>(3, Vector::Zero(1)));
  CHECK(halves.states[0](0) == 1.0);
  CHECK(halves.states[1](0) == 0.5);
  CHECK(halves.states[2](0) == 0.25);
  CHECK(halves.states[3](0) == 0.125);
}

TEST_CASE("linear prediction tracks the true continuous system") {
  std::mt19937_64 rng = make_rng(71);
  Matrix a(2, 2);
  a << -0.9, 0.2, 0.1, -1.1;
  const Matrix b = random_matrix(2, 1, rng);
  const SystemSpec system = make_linear_test(a, b);
  const double dt = 0.02;

  const Matrix ad = (a * dt).exp();
  const Matrix bd = a.inverse() * (ad - Matrix::Identity(2, 2)) * b;
  LinearModel model;
  model.a = ad;
  model.b = bd;

  Vector level(1);
  level << 0.7;
  const Vector x0 = (Vector(2) << 1.0, -0.5).finished();
  const Trajectory truth =
      integrate(system.field, x0, [level](double) { return level; }, dt, 50);
  const Trajectory pred = predict_linear(model, x0, std::vector<Vector>(50, level), dt);
  for (size_t k = 0; k < truth.states.size(); ++k) {
    CHECK((truth.states[k] - pred.states[k]).norm() < 1e-7);
  }
}

TEST_CASE("empty snapshot sets are rejected") {
  SnapshotSet snap;
  snap.x_past.resize(2, 0);
  snap.x_future.resize(2, 0);
  snap.u_past.resize(1, 0);
  CHECK_THROWS_AS(fit_dmdc(snap), std::invalid_argument);
}
