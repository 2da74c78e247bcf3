#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "kssp/numerics.hpp"
#include "kssp/trajectory.hpp"

namespace kssp {

/// A named vector field together with its dimensions and parameter table.
struct SystemSpec {
  std::string name;
  int state_dim = 0;
  int input_dim = 0;
  std::map<std::string, double> params;
  VectorField field;
};

using Params = std::map<std::string, double>;

/// Five-protein incoherent feedforward loop driven by two inducers
/// (Hill-type activation/repression with linear degradation).
/// Parameters: k0..k5, Kd1..Kd4, delta0..delta4.
SystemSpec make_iffl(const Params& overrides = {});

/// Eleven-species combinatorial promoter with repressor/activator inputs
/// (mass-action binding/unbinding). Parameters: k1f..k8f, k1r..k7r, delta.
/// decay_on_x10 switches the final quadratic decay term from x9 (as the
/// equations are usually printed) to x10.
SystemSpec make_comb_promoter(const Params& overrides = {}, bool decay_on_x10 = false);

/// Ground-truth linear system dx/dt = A x + B u.
SystemSpec make_linear_test(const Matrix& a, const Matrix& b);

/// Constant-input step or bounded saturating ramp
/// u(t) = level * (1 - exp(-t / tau)).
struct InputSignal {
  enum class Kind { step, saturating_ramp };
  Kind kind = Kind::step;
  Vector level;
  double ramp_tau = 1.0;

  Vector at(double t) const;
  InputSignalFn fn() const;
};

/// Paired one-step snapshot matrices. Column j of x_future is the successor
/// of column j of x_past within the same source trajectory.
struct SnapshotSet {
  Matrix x_past;   // n x N
  Matrix x_future; // n x N
  Matrix u_past;   // m x N
  /// (trajectory index, [first, last) column range in the assembled matrices)
  std::vector<std::pair<int, std::pair<int, int>>> provenance;

  Eigen::Index columns() const { return x_past.cols(); }
};

using IcSampler = std::function<Vector(std::mt19937_64&)>;
using InputSampler = std::function<InputSignal(std::mt19937_64&)>;

IcSampler uniform_box_sampler(const Vector& lo, const Vector& hi);
InputSampler step_input_sampler(const Vector& lo, const Vector& hi);
InputSampler ramp_input_sampler(const Vector& lo, const Vector& hi, double tau);

/// Simulates n_traj independent trajectories, each with its own initial
/// condition and input signal. Deterministic given the seed; trajectory i
/// uses the seed derived from (seed, i).
std::vector<Trajectory> generate_dataset(const SystemSpec& spec, int n_traj, int n_steps,
                                         double dt, const IcSampler& ic_sampler,
                                         const InputSampler& input_sampler, uint64_t seed);

/// Concatenates per-trajectory shifted pairs columnwise; pairs never straddle
/// trajectory boundaries.
SnapshotSet assemble_snapshots(const std::vector<Trajectory>& trajs);

/// Splits at trajectory granularity; train gets round(fraction * N)
/// trajectories, clamped so neither side is empty.
std::pair<std::vector<Trajectory>, std::vector<Trajectory>> train_test_split(
    const std::vector<Trajectory>& trajs, double fraction, uint64_t seed);

}  // namespace kssp
