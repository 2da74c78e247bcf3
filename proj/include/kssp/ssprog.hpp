#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kssp/deepdmd.hpp"
#include "kssp/systems.hpp"

namespace kssp {

/// Which equilibrium constraint the program uses:
///  no_mixed       - psi_x(xe) = (I - K_x)^-1 K_u psi_u(u)       (K_xu treated as 0)
///  separated_in_u - psi_x(xe) = (I - K_x - K_xu M_u(u))^-1 K_u psi_u(u)
///  separated_in_x - psi_x(xe) = (I - K_x)^-1 [K_xu psi_xu(xe,u) + K_u psi_u(u)],
///                   resolved by damped fixed-point iteration on the lifted state
enum class ConstraintForm { no_mixed, separated_in_u, separated_in_x };

std::string to_string(ConstraintForm form);
ConstraintForm constraint_form_from_string(const std::string& s);

/// Raised when the model violates the invertibility assumption (an eigenvalue
/// of the state operator within 1e-6 of 1, or a near-singular solve).
class AssumptionViolation : public NumericsError {
 public:
  AssumptionViolation(const std::string& what, double condition)
      : NumericsError(what), condition(condition) {}
  double condition;
};

/// Raised when no start of the multi-start solver produced a usable point.
class UnsolvableError : public NumericsError {
 public:
  using NumericsError::NumericsError;
};

struct SteadyStateProblem {
  int target_index = 0;
  Vector input_lo, input_hi;
  ConstraintForm form = ConstraintForm::no_mixed;
  const KoopmanModel* model = nullptr;

  void validate() const;
};

struct SolverConfig {
  int n_starts = 16;
  int max_iterations = 200;
  double step_tolerance = 1e-9;
  double cond_limit = 1e10;
  uint64_t seed = 0;
};

struct StartRecord {
  Vector u_initial;
  Vector u_final;
  double initial_objective = 0.0;
  double objective = 0.0;  // minimized value, i.e. -predicted target
  bool ok = false;
  std::string error;
};

struct SteadyStateSolution {
  Vector u_star;
  Vector lifted_equilibrium;    // psi_x(xe) predicted by the model
  double predicted_value = 0.0; // entry target_index of the lifted equilibrium
  std::optional<double> achieved_value;  // filled in by verify()
  double conditioning = 0.0;
  bool flat_landscape = false;
  std::vector<StartRecord> starts;
  int target_index = 0;
  ConstraintForm form = ConstraintForm::no_mixed;
};

/// Predicted lifted equilibrium psi_x(xe) for a constant input. Checks
/// Assumption 2 numerically and solves the linear system rather than forming
/// an inverse; the separated_in_x form runs a damped fixed-point iteration
/// (damping 0.5, tolerance 1e-10 on the undamped residual, 500 iterations).
Vector steady_state_map(const KoopmanModel& model, const Vector& u, ConstraintForm form,
                        double cond_limit = 1e10, double* condition_out = nullptr);

/// Program objective: minus the predicted equilibrium value of the target
/// state (by inclusiveness, lifted entry i is the physical state).
double objective(const KoopmanModel& model, const Vector& u, int target_index,
                 ConstraintForm form, double cond_limit = 1e10);

/// Multi-start projected gradient over the input box: Latin-hypercube starts,
/// central-difference gradients (h = 1e-6 * box width), backtracking line
/// search, ties broken toward the lexicographically smallest input.
SteadyStateSolution solve(const SteadyStateProblem& problem, const SolverConfig& cfg);

struct OracleResult {
  Vector u_star;
  double value = 0.0;
  int grid_per_dim = 0;
};

/// Exhaustive grid search over constant inputs on the true simulator,
/// simulating each candidate until ||f||_inf < residual_tol or the horizon is
/// exhausted. Ground truth for acceptance checks.
OracleResult brute_force_oracle(const SystemSpec& system, const Vector& lo, const Vector& hi,
                                int grid_per_dim, const Vector& x0, double dt, int horizon,
                                int target_index, double residual_tol = 1e-6);

struct VerifyReport {
  Vector u_star;
  double predicted_value = 0.0;
  double achieved_value = 0.0;            // true-simulator value under u_star
  std::vector<Vector> random_inputs;
  std::vector<double> random_values;
  double beats_fraction = 1.0;            // share of random inputs not exceeding u_star
  std::optional<double> oracle_value;
  std::optional<Vector> oracle_u;
  Trajectory optimal_trajectory;
  std::vector<Trajectory> random_trajectories;
};

/// Applies u_star and n_random box-sampled inputs to the true system from a
/// shared initial condition and compares achieved values. Also writes the
/// achieved value back into the solution.
VerifyReport verify(const SystemSpec& system, SteadyStateSolution& solution, int n_random,
                    const Vector& x0, double dt, int horizon, uint64_t seed, const Vector& lo,
                    const Vector& hi, const OracleResult* oracle = nullptr,
                    double residual_tol = 1e-6);

}  // namespace kssp
