#include "kssp/ssprog.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "kssp/observables.hpp"
#include "kssp/rng.hpp"

namespace kssp {

namespace {

constexpr double kUnitEigTol = 1e-6;
constexpr double kFixedPointTol = 1e-10;
constexpr int kFixedPointMaxIters = 500;
constexpr double kFixedPointDamping = 0.5;

void check_unit_eigenvalues(const Matrix& op, const std::string& label) {
  const Eigen::EigenSolver<Matrix> eig(op, /*computeEigenvectors=*/false);
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    const double dist = std::abs(eig.eigenvalues()(i) - std::complex<double>(1.0, 0.0));
    if (dist < kUnitEigTol) {
      throw AssumptionViolation(label + " has an eigenvalue within " +
                                    std::to_string(kUnitEigTol) + " of 1 (distance " +
                                    std::to_string(dist) + ")",
                                std::numeric_limits<double>::infinity());
    }
  }
}

// lexicographic comparison of inputs, used for deterministic tie-breaking
bool lex_less(const Vector& a, const Vector& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return a(i) < b(i);
  }
  return false;
}

Vector project_to_box(const Vector& u, const Vector& lo, const Vector& hi) {
  return u.cwiseMax(lo).cwiseMin(hi);
}

struct SteadyRun {
  Vector final_state;
  double residual = 0.0;
  Trajectory trajectory;
};

SteadyRun simulate_to_steady(const SystemSpec& system, const Vector& u, const Vector& x0,
                             double dt, int horizon, double residual_tol) {
  SteadyRun run;
  run.trajectory.dt = dt;
  run.trajectory.states.push_back(x0);
  Vector x = x0;
  for (int k = 0; k < horizon; ++k) {
    run.residual = system.field(x, u).lpNorm<Eigen::Infinity>();
    if (run.residual < residual_tol) break;
    x = rk4_step(system.field, x, u, dt);
    run.trajectory.states.push_back(x);
    run.trajectory.inputs.push_back(u);
  }
  run.residual = system.field(x, u).lpNorm<Eigen::Infinity>();
  run.final_state = x;
  return run;
}

}  // namespace

std::string to_string(ConstraintForm form) {
  switch (form) {
    case ConstraintForm::no_mixed: return "no_mixed";
    case ConstraintForm::separated_in_u: return "separated_in_u";
    case ConstraintForm::separated_in_x: return "separated_in_x";
  }
  return "no_mixed";
}

ConstraintForm constraint_form_from_string(const std::string& s) {
  if (s == "no_mixed") return ConstraintForm::no_mixed;
  if (s == "separated_in_u") return ConstraintForm::separated_in_u;
  if (s == "separated_in_x") return ConstraintForm::separated_in_x;
  throw std::invalid_argument("unknown constraint_form value: " + s);
}

void SteadyStateProblem::validate() const {
  if (model == nullptr) throw std::invalid_argument("SteadyStateProblem: missing model");
  if (target_index < 0 || target_index >= model->state_dim()) {
    throw std::invalid_argument("SteadyStateProblem: target_index out of range");
  }
  if (input_lo.size() != model->input_dim() || input_hi.size() != model->input_dim()) {
    throw std::invalid_argument("SteadyStateProblem: input box dimension mismatch");
  }
  for (Eigen::Index i = 0; i < input_lo.size(); ++i) {
    if (!(input_lo(i) < input_hi(i))) {
      throw std::invalid_argument("SteadyStateProblem: need lo < hi per channel");
    }
  }
}

Vector steady_state_map(const KoopmanModel& model, const Vector& u, ConstraintForm form,
                        double cond_limit, double* condition_out) {
  const Eigen::Index n_l = model.state_lift_dim();
  const Matrix identity = Matrix::Identity(n_l, n_l);
  const Vector psi_u = model.lift_input(u);
  const bool has_mixed = model.mixed != MixedTerms::none;

  check_unit_eigenvalues(model.k_x, "K_x");

  if (form == ConstraintForm::separated_in_u && has_mixed) {
    if (model.mixed == MixedTerms::learned) {
      throw std::invalid_argument(
          "steady_state_map: separated_in_u needs factorizable mixed observables");
    }
    const Matrix m_u = input_mixed_factor(psi_u, static_cast<int>(n_l));
    const Matrix op = model.k_x + model.k_xu * m_u;
    check_unit_eigenvalues(op, "K_x + K_xu M_u");
    const LinearSolve solved = solve_linear(identity - op, model.k_u * psi_u, cond_limit);
    if (condition_out != nullptr) *condition_out = solved.condition;
    return solved.solution.col(0);
  }

  if (form == ConstraintForm::separated_in_x && has_mixed) {
    // damped iteration on z = (I-K_x)^-1 [K_xu psi_xu(readout(z), u) + K_u psi_u]
    const Eigen::PartialPivLU<Matrix> lu(identity - model.k_x);
    double condition = 0.0;
    {
      const LinearSolve probe = solve_linear(identity - model.k_x, model.k_u * psi_u, cond_limit);
      condition = probe.condition;
    }
    if (condition_out != nullptr) *condition_out = condition;
    const int n = model.state_dim();
    Vector z = lu.solve(model.k_u * psi_u);  // warm start: mixed terms off
    for (int it = 0; it < kFixedPointMaxIters; ++it) {
      const Vector rhs = model.k_xu * model.lift_mixed(z.head(n), u) + model.k_u * psi_u;
      const Vector z_next = lu.solve(rhs);
      const double residual = (z_next - z).lpNorm<Eigen::Infinity>();
      z = (1.0 - kFixedPointDamping) * z + kFixedPointDamping * z_next;
      if (residual < kFixedPointTol) return z_next;
    }
    throw NumericsError("steady_state_map: fixed-point iteration did not converge in " +
                        std::to_string(kFixedPointMaxIters) + " iterations");
  }

  // no_mixed (K_xu treated as zero), and the degenerate mixed-free cases of
  // the separated forms
  const LinearSolve solved = solve_linear(identity - model.k_x, model.k_u * psi_u, cond_limit);
  if (condition_out != nullptr) *condition_out = solved.condition;
  return solved.solution.col(0);
}

double objective(const KoopmanModel& model, const Vector& u, int target_index,
                 ConstraintForm form, double cond_limit) {
  return -steady_state_map(model, u, form, cond_limit)(target_index);
}

SteadyStateSolution solve(const SteadyStateProblem& problem, const SolverConfig& cfg) {
  problem.validate();
  const KoopmanModel& model = *problem.model;
  const Vector& lo = problem.input_lo;
  const Vector& hi = problem.input_hi;
  const Eigen::Index m = lo.size();
  const Vector width = hi - lo;

  auto f = [&](const Vector& u) {
    return objective(model, u, problem.target_index, problem.form, cfg.cond_limit);
  };

  // Latin hypercube starts (stratified per channel, deterministic)
  std::mt19937_64 rng = make_rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n_starts = std::max(1, cfg.n_starts);
  std::vector<Vector> starts(static_cast<size_t>(n_starts), Vector(m));
  for (Eigen::Index c = 0; c < m; ++c) {
    std::vector<int> strata(static_cast<size_t>(n_starts));
    std::iota(strata.begin(), strata.end(), 0);
    for (size_t i = strata.size() - 1; i > 0; --i) {
      const size_t j = static_cast<size_t>((static_cast<__uint128_t>(rng()) * (i + 1)) >> 64);
      std::swap(strata[i], strata[j]);
    }
    for (int s = 0; s < n_starts; ++s) {
      const double cell = (strata[static_cast<size_t>(s)] + unit(rng)) / n_starts;
      starts[static_cast<size_t>(s)](c) = lo(c) + cell * width(c);
    }
  }

  const Vector h = 1e-6 * width;
  auto numeric_gradient = [&](const Vector& u) {
    Vector g(m);
    for (Eigen::Index c = 0; c < m; ++c) {
      Vector up = u, dn = u;
      up(c) += h(c);
      dn(c) -= h(c);
      g(c) = (f(up) - f(dn)) / (2.0 * h(c));
    }
    return g;
  };

  SteadyStateSolution solution;
  solution.target_index = problem.target_index;
  solution.form = problem.form;
  solution.starts.reserve(static_cast<size_t>(n_starts));

  for (const Vector& u0 : starts) {
    StartRecord record;
    record.u_initial = u0;
    try {
      Vector u = project_to_box(u0, lo, hi);
      double value = f(u);
      record.initial_objective = value;
      for (int it = 0; it < cfg.max_iterations; ++it) {
        const Vector grad = numeric_gradient(u);
        double step = width.maxCoeff();
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt, step *= 0.5) {
          const Vector candidate = project_to_box(u - step * grad, lo, hi);
          const double move = (candidate - u).norm();
          if (move < cfg.step_tolerance) break;
          const double candidate_value = f(candidate);
          if (candidate_value < value) {
            u = candidate;
            value = candidate_value;
            moved = true;
            break;
          }
        }
        if (!moved) break;
      }
      record.u_final = u;
      record.objective = value;
      record.ok = true;
    } catch (const NumericsError& e) {
      record.u_final = record.u_initial;
      record.error = e.what();
    }
    solution.starts.push_back(std::move(record));
  }

  const StartRecord* best = nullptr;
  double best_scale = 1.0;
  for (const StartRecord& record : solution.starts) {
    if (!record.ok) continue;
    if (best == nullptr) {
      best = &record;
      best_scale = std::max(1.0, std::abs(record.objective));
      continue;
    }
    const double tie_tol = 1e-12 * best_scale;
    if (record.objective < best->objective - tie_tol) {
      best = &record;
      best_scale = std::max(1.0, std::abs(record.objective));
    } else if (std::abs(record.objective - best->objective) <= tie_tol &&
               lex_less(record.u_final, best->u_final)) {
      best = &record;
    }
  }
  if (best == nullptr) {
    std::string detail;
    for (const StartRecord& record : solution.starts) {
      if (!record.error.empty() && detail.empty()) detail = record.error;
    }
    throw UnsolvableError("solve: all starts failed the model checks (" + detail + ")");
  }

  solution.u_star = best->u_final;
  solution.lifted_equilibrium =
      steady_state_map(model, solution.u_star, problem.form, cfg.cond_limit,
                       &solution.conditioning);
  solution.predicted_value = solution.lifted_equilibrium(problem.target_index);

  // flat landscape: no start ever saw an objective different from the best
  double worst_initial = best->objective;
  int converged = 0;
  for (const StartRecord& record : solution.starts) {
    if (!record.ok) continue;
    ++converged;
    worst_initial = std::max(worst_initial, record.initial_objective);
  }
  solution.flat_landscape =
      converged >= 2 && (worst_initial - best->objective) <=
                            1e-10 * std::max(1.0, std::abs(best->objective));
  return solution;
}

OracleResult brute_force_oracle(const SystemSpec& system, const Vector& lo, const Vector& hi,
                                int grid_per_dim, const Vector& x0, double dt, int horizon,
                                int target_index, double residual_tol) {
  if (grid_per_dim < 2) throw std::invalid_argument("brute_force_oracle: grid_per_dim >= 2");
  const Eigen::Index m = lo.size();
  std::vector<int> index(static_cast<size_t>(m), 0);
  OracleResult result;
  result.grid_per_dim = grid_per_dim;
  bool first = true;
  while (true) {
    Vector u(m);
    for (Eigen::Index c = 0; c < m; ++c) {
      u(c) = lo(c) + (hi(c) - lo(c)) * index[static_cast<size_t>(c)] / (grid_per_dim - 1);
    }
    const SteadyRun run = simulate_to_steady(system, u, x0, dt, horizon, residual_tol);
    const double value = run.final_state(target_index);
    if (first || value > result.value) {
      result.u_star = u;
      result.value = value;
      first = false;
    }
    // odometer over the grid, channel 0 slowest -> lexicographic order
    Eigen::Index c = m - 1;
    while (c >= 0 && ++index[static_cast<size_t>(c)] == grid_per_dim) {
      index[static_cast<size_t>(c)] = 0;
      --c;
    }
    if (c < 0) break;
  }
  return result;
}

VerifyReport verify(const SystemSpec& system, SteadyStateSolution& solution, int n_random,
                    const Vector& x0, double dt, int horizon, uint64_t seed, const Vector& lo,
                    const Vector& hi, const OracleResult* oracle, double residual_tol) {
  VerifyReport report;
  report.u_star = solution.u_star;
  report.predicted_value = solution.predicted_value;

  const SteadyRun optimal = simulate_to_steady(system, solution.u_star, x0, dt, horizon,
                                               residual_tol);
  report.achieved_value = optimal.final_state(solution.target_index);
  report.optimal_trajectory = optimal.trajectory;
  solution.achieved_value = report.achieved_value;

  IcSampler sampler = uniform_box_sampler(lo, hi);
  std::mt19937_64 rng = make_rng(seed);
  int beaten = 0;
  for (int i = 0; i < n_random; ++i) {
    const Vector u = sampler(rng);
    const SteadyRun run = simulate_to_steady(system, u, x0, dt, horizon, residual_tol);
    report.random_inputs.push_back(u);
    report.random_values.push_back(run.final_state(solution.target_index));
    report.random_trajectories.push_back(run.trajectory);
    if (report.achieved_value >= report.random_values.back()) ++beaten;
  }
  report.beats_fraction = n_random > 0 ? static_cast<double>(beaten) / n_random : 1.0;
  if (oracle != nullptr) {
    report.oracle_value = oracle->value;
    report.oracle_u = oracle->u_star;
  }
  return report;
}

}  // namespace kssp
