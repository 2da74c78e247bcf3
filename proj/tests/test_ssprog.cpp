#include <doctest.h>

#include <cmath>
#include <random>

#include "kssp/observables.hpp"
#include "kssp/rng.hpp"
#include "kssp/ssprog.hpp"

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

KoopmanModel scalar_model(double k_x, double k_u) {
  KoopmanModel model;
  model.psi_x = ObservableMap::identity(1);
  model.psi_u = ObservableMap::identity(1);
  model.k_x = Matrix::Constant(1, 1, k_x);
  model.k_u = Matrix::Constant(1, 1, k_u);
  return model;
}

/// exact dictionary Koopman model of the discrete bilinear map
/// x+ = a x + b u + c x u, fitted from noiseless trajectories
KoopmanModel bilinear_dictionary_model(double a, double b, double c) {
  auto step = [&](double x, double u) { return a * x + b * u + c * x * u; };
  std::vector<Trajectory> trajs;
  std::mt19937_64 rng = make_rng(71);
  std::uniform_real_distribution<double> u_dist(0.1, 1.0);
  std::uniform_real_distribution<double> x_dist(-1.0, 1.0);
  for (int t = 0; t < 12; ++t) {
    Trajectory traj;
    traj.dt = 1.0;
    const double u = u_dist(rng);
    double x = x_dist(rng);
    traj.states.push_back(Vector::Constant(1, x));
    for (int k = 0; k < 10; ++k) {
      x = step(x, u);
      traj.states.push_back(Vector::Constant(1, x));
      traj.inputs.push_back(Vector::Constant(1, u));
    }
    trajs.push_back(std::move(traj));
  }
  const SnapshotSet snap = assemble_snapshots(trajs);
  return fit_koopman_least_squares(ObservableMap::dictionary(MonomialDictionary(1, 2)),
                                   ObservableMap::dictionary(MonomialDictionary(1, 2)),
                                   MixedTerms::dictionary, snap);
}

double boundary_distance(const Vector& u, const Vector& lo, const Vector& hi) {
  double dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < u.size(); ++c) {
    dist = std::min({dist, u(c) - lo(c), hi(c) - u(c)});
  }
  return dist;
}

}  // namespace

TEST_CASE("steady_state_map scalar cases") {
  const KoopmanModel model = scalar_model(0.5, 1.0);
  const Vector u = Vector::Constant(1, 2.0);
  const Vector z = steady_state_map(model, u, ConstraintForm::no_mixed);
  CHECK(z(0) == doctest::Approx(4.0).epsilon(1e-12));

  const KoopmanModel dead = scalar_model(0.5, 0.0);
  for (double level : {0.0, 1.0, 7.5}) {
    CHECK(steady_state_map(dead, Vector::Constant(1, level), ConstraintForm::no_mixed).norm() ==
          0.0);
  }
}

TEST_CASE("steady_state_map enforces the unit-eigenvalue assumption") {
  KoopmanModel model = scalar_model(1.0, 1.0);  // eigenvalue exactly 1
  CHECK_THROWS_AS(steady_state_map(model, Vector::Ones(1), ConstraintForm::no_mixed),
                  AssumptionViolation);

  model.k_x(0, 0) = 1.0 + 5e-7;  // inside the 1e-6 window
  CHECK_THROWS_AS(steady_state_map(model, Vector::Ones(1), ConstraintForm::no_mixed),
                  AssumptionViolation);
}

TEST_CASE("cross-form consistency on an exactly factorizable bilinear system") {
  const double a = 0.5, b = 0.3, c = 0.1;
  const KoopmanModel model = bilinear_dictionary_model(a, b, c);
  CHECK(model.mixed_dim() == 4);

  for (double level : {0.2, 0.5, 0.8}) {
    const Vector u = Vector::Constant(1, level);
    double cond_u = 0.0, cond_x = 0.0;
    const Vector z_u =
        steady_state_map(model, u, ConstraintForm::separated_in_u, 1e10, &cond_u);
    const Vector z_x =
        steady_state_map(model, u, ConstraintForm::separated_in_x, 1e10, &cond_x);
    CHECK((z_u - z_x).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(cond_u > 0.0);
    CHECK(cond_x > 0.0);

    // analytic equilibrium of the bilinear map
    const double x_e = b * level / (1.0 - a - c * level);
    CHECK(z_u(0) == doctest::Approx(x_e).epsilon(1e-8));
    CHECK(z_u(1) == doctest::Approx(x_e * x_e).epsilon(1e-8));

    // full one-step map fixed-point residual
    const Vector step_u = model.step_lifted(z_u, u);
    CHECK((step_u - z_u).lpNorm<Eigen::Infinity>() < 1e-8);
    const Vector step_x = model.step_lifted(z_x, u);
    CHECK((step_x - z_x).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("objective sign, affinity, and monotonicity") {
  const KoopmanModel model = scalar_model(0.5, 1.0);
  CHECK(objective(model, Vector::Constant(1, 2.0), 0, ConstraintForm::no_mixed) ==
        doctest::Approx(-4.0));

  // strictly decreasing in u for positive gain
  double prev = objective(model, Vector::Constant(1, 0.0), 0, ConstraintForm::no_mixed);
  for (double level = 0.5; level <= 10.0; level += 0.5) {
    const double value = objective(model, Vector::Constant(1, level), 0, ConstraintForm::no_mixed);
    CHECK(value < prev);
    prev = value;
  }

  // affine in u for an identity-observable multi-input model
  std::mt19937_64 rng = make_rng(5);
  KoopmanModel linear;
  linear.psi_x = ObservableMap::identity(3);
  linear.psi_u = ObservableMap::identity(2);
  linear.k_x = 0.5 * random_matrix(3, 3, rng);
  linear.k_u = random_matrix(3, 2, rng);
  for (int rep = 0; rep < 10; ++rep) {
    const Vector u1 = random_matrix(2, 1, rng).col(0);
    const Vector u2 = random_matrix(2, 1, rng).col(0);
    const double mid = objective(linear, 0.5 * (u1 + u2), 0, ConstraintForm::no_mixed);
    const double avg = 0.5 * (objective(linear, u1, 0, ConstraintForm::no_mixed) +
                              objective(linear, u2, 0, ConstraintForm::no_mixed));
    CHECK(mid == doctest::Approx(avg).epsilon(1e-10));
  }
}

TEST_CASE("solve drives a positive-gain scalar model to the upper boundary") {
  const KoopmanModel model = scalar_model(0.5, 1.0);
  SteadyStateProblem problem;
  problem.target_index = 0;
  problem.input_lo = Vector::Zero(1);
  problem.input_hi = Vector::Constant(1, 10.0);
  problem.model = &model;
  SolverConfig cfg;
  cfg.seed = 3;
  const SteadyStateSolution solution = solve(problem, cfg);
  CHECK(solution.u_star(0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(solution.predicted_value == doctest::Approx(20.0).epsilon(1e-9));
  CHECK_FALSE(solution.flat_landscape);

  // monotone improvement: the winner is at least as good as every start point
  for (const auto& record : solution.starts) {
    CHECK(record.ok);
    const double initial =
        objective(model, record.u_initial, 0, ConstraintForm::no_mixed);
    CHECK(-solution.predicted_value <= initial + 1e-12);
  }
}

TEST_CASE("solve flags a flat landscape for a zero-gain model") {
  const KoopmanModel model = scalar_model(0.5, 0.0);
  SteadyStateProblem problem;
  problem.target_index = 0;
  problem.input_lo = Vector::Zero(1);
  problem.input_hi = Vector::Constant(1, 10.0);
  problem.model = &model;
  SolverConfig cfg;
  cfg.seed = 5;
  const SteadyStateSolution solution = solve(problem, cfg);
  CHECK(solution.predicted_value == 0.0);
  CHECK(solution.flat_landscape);
}

TEST_CASE("solve reports unsolvable models") {
  KoopmanModel model = scalar_model(1.0, 1.0);
  SteadyStateProblem problem;
  problem.target_index = 0;
  problem.input_lo = Vector::Zero(1);
  problem.input_hi = Vector::Ones(1);
  problem.model = &model;
  SolverConfig cfg;
  CHECK_THROWS_AS(solve(problem, cfg), UnsolvableError);
}

TEST_CASE("boundary property holds for random identity-observable linear models") {
  std::mt19937_64 rng = make_rng(2024);
  SolverConfig cfg;
  cfg.seed = 8;
  int instances = 0;
  while (instances < 10) {
    const int n = 3, m = 2;
    Matrix a = random_matrix(n, n, rng);
    a *= 0.7 / std::abs(a.eigenvalues().cwiseAbs().maxCoeff());
    const Matrix b = random_matrix(n, m, rng);
    const int target = static_cast<int>(rng() % n);
    // gain row of the affine objective; skip degenerate draws
    const Vector gain =
        (b.transpose() * (Matrix::Identity(n, n) - a).inverse().transpose()).col(target);
    if (gain.cwiseAbs().minCoeff() < 1e-3) continue;
    ++instances;

    KoopmanModel model;
    model.psi_x = ObservableMap::identity(n);
    model.psi_u = ObservableMap::identity(m);
    model.k_x = a;
    model.k_u = b;

    SteadyStateProblem problem;
    problem.target_index = target;
    problem.input_lo = Vector::Zero(m);
    problem.input_hi = Vector::Constant(m, 10.0);
    problem.model = &model;
    const SteadyStateSolution solution = solve(problem, cfg);
    CHECK(boundary_distance(solution.u_star, problem.input_lo, problem.input_hi) < 1e-9);
  }
}

TEST_CASE("brute_force_oracle basics") {
  // constant field: everything is steady immediately, ties break to the
  // lexicographically smallest grid point
  SystemSpec constant;
  constant.name = "constant";
  constant.state_dim = 2;
  constant.input_dim = 2;
  constant.field = [](const Vector& x, const Vector&) {
    return Vector(Vector::Zero(x.size()));
  };
  const Vector lo = Vector::Zero(2);
  const Vector hi = Vector::Constant(2, 1.0);
  const OracleResult tie =
      brute_force_oracle(constant, lo, hi, 3, Vector::Ones(2), 0.1, 100, 0);
  CHECK(tie.u_star(0) == 0.0);
  CHECK(tie.u_star(1) == 0.0);
  CHECK(tie.value == 1.0);

  // scalar relaxation dx = u - x has steady state x = u
  SystemSpec relax;
  relax.name = "relax";
  relax.state_dim = 1;
  relax.input_dim = 1;
  relax.field = [](const Vector& x, const Vector& u) { return Vector(u - x); };
  const OracleResult top = brute_force_oracle(relax, Vector::Zero(1), Vector::Constant(1, 10.0),
                                              11, Vector::Zero(1), 0.05, 2000, 0);
  CHECK(top.u_star(0) == 10.0);
  CHECK(top.value == doctest::Approx(10.0).epsilon(1e-4));
}

TEST_CASE("brute_force_oracle pins the IFFL x0 optimum") {
  const SystemSpec iffl = make_iffl();
  const Vector lo = Vector::Zero(2);
  const Vector hi = Vector::Constant(2, 10.0);
  const OracleResult oracle =
      brute_force_oracle(iffl, lo, hi, 21, Vector::Ones(5), 0.1, 800, 0);
  // cascade steady state: x0 = 2 u0 / (1 + u1), maximized at (10, 0)
  CHECK(oracle.u_star(0) == 10.0);
  CHECK(oracle.u_star(1) == 0.0);
  CHECK(oracle.value == doctest::Approx(20.0).epsilon(1e-4));
}

TEST_CASE("verify compares the programmed input against random ones") {
  SystemSpec relax;
  relax.name = "relax";
  relax.state_dim = 1;
  relax.input_dim = 1;
  relax.field = [](const Vector& x, const Vector& u) { return Vector(u - x); };
  const Vector lo = Vector::Zero(1);
  const Vector hi = Vector::Constant(1, 10.0);
  const OracleResult oracle =
      brute_force_oracle(relax, lo, hi, 11, Vector::Zero(1), 0.05, 2000, 0);

  SteadyStateSolution solution;
  solution.u_star = oracle.u_star;
  solution.predicted_value = oracle.value;
  solution.target_index = 0;

  // no random inputs: only the optimal trajectory is reported
  VerifyReport alone = verify(relax, solution, 0, Vector::Zero(1), 0.05, 2000, 5, lo, hi);
  CHECK(alone.random_values.empty());
  CHECK(alone.beats_fraction == 1.0);
  CHECK(alone.achieved_value == doctest::Approx(10.0).epsilon(1e-4));
  CHECK(solution.achieved_value.has_value());

  // the grid optimum beats every random box input
  VerifyReport report =
      verify(relax, solution, 12, Vector::Zero(1), 0.05, 2000, 6, lo, hi, &oracle);
  CHECK(report.random_values.size() == 12);
  CHECK(report.beats_fraction == 1.0);
  CHECK(report.oracle_value.has_value());
  for (double value : report.random_values) CHECK(value <= report.achieved_value);
  CHECK(report.optimal_trajectory.states.size() >= 2);
  CHECK(report.random_trajectories.size() == 12);
}

TEST_CASE("learned mixed terms reject the u-separated form") {
  KoopmanModel model;
  model.psi_x = ObservableMap::identity(2);
  model.psi_u = ObservableMap::identity(1);
  model.mixed = MixedTerms::learned;
  model.mixed_net = FeedforwardNet({3, 8, 4}, 3);
  std::mt19937_64 rng = make_rng(9);
  model.k_x = 0.3 * random_matrix(2, 2, rng);
  model.k_u = random_matrix(2, 1, rng);
  model.k_xu = 0.1 * random_matrix(2, 4, rng);
  CHECK_THROWS_AS(
      steady_state_map(model, Vector::Ones(1), ConstraintForm::separated_in_u),
      std::invalid_argument);
  // the x-separated fixed point handles the learned network readout
  const Vector z = steady_state_map(model, Vector::Ones(1), ConstraintForm::separated_in_x);
  const Vector step = model.step_lifted(z, Vector::Ones(1));
  CHECK((step - z).lpNorm<Eigen::Infinity>() < 1e-8);
}
