#pragma once

#include <vector>

#include <Eigen/Dense>

namespace kssp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One simulation run: states sampled at t = 0, dt, ..., n*dt and the input
/// applied at the start of each step. Always one fewer input than states.
struct Trajectory {
  double dt = 0.0;
  std::vector<Vector> states;
  std::vector<Vector> inputs;

  int state_dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
  int input_dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().size()); }
  int steps() const { return static_cast<int>(inputs.size()); }

  bool well_formed() const {
    return !states.empty() && inputs.size() + 1 == states.size();
  }
};

}  // namespace kssp
