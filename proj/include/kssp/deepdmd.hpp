#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kssp/observable_map.hpp"
#include "kssp/systems.hpp"

namespace kssp {

/// How mixed state-input observables are represented.
///  none       - K_xu is absent (mixed terms assumed zero)
///  dictionary - psi_xu is every pairwise product of psi_x and psi_u entries
///               (psi_x-major), which keeps the M_x / M_u factorizations exact
///  learned    - psi_xu is a separate network over (x, u); no factorization
enum class MixedTerms { none, dictionary, learned };

std::string to_string(MixedTerms mixed);
MixedTerms mixed_terms_from_string(const std::string& s);

struct TrainingInfo {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  uint64_t seed = 0;
  int best_epoch = -1;
  std::vector<double> train_loss;  // index 0 is the initial parameter set
  std::vector<double> val_loss;
  /// count of K_x eigenvalues with |lambda - 1| < 1e-6 (near-unit flags)
  int near_unit_eigenvalues = 0;
};

/// Lifted linear dynamics psi_x(x+) = K_x psi_x(x) + K_xu psi_xu(x,u) + K_u psi_u(u)
/// with state- and input-inclusive observable maps.
struct KoopmanModel {
  ObservableMap psi_x = ObservableMap::identity(1);
  ObservableMap psi_u = ObservableMap::identity(1);
  MixedTerms mixed = MixedTerms::none;
  std::optional<FeedforwardNet> mixed_net;  // learned mode only
  Matrix k_x;                               // n_L x n_L
  Matrix k_u;                               // n_L x m_L
  Matrix k_xu;                              // n_L x M_L; empty when mixed == none
  TrainingInfo info;

  int state_dim() const { return psi_x.base_dim(); }
  int input_dim() const { return psi_u.base_dim(); }
  int state_lift_dim() const { return psi_x.lifted_dim(); }
  int input_lift_dim() const { return psi_u.lifted_dim(); }
  int mixed_dim() const;

  Vector lift_state(const Vector& x) const { return psi_x.lift(x); }
  Vector lift_input(const Vector& u) const { return psi_u.lift(u); }
  Vector lift_mixed(const Vector& x, const Vector& u) const;

  /// One step of the lifted dynamics (the model's one-step map, with the
  /// mixed term rebuilt from the state read-out of z).
  Vector step_lifted(const Vector& z, const Vector& u) const;
};

struct TrainConfig {
  std::vector<int> hidden = {32, 32};
  int state_observables = 20;  // n_L = n + state_observables
  int input_observables = 5;   // m_L = m + input_observables
  int mixed_observables = 0;   // learned mode output width; 0 means n_L
  MixedTerms mixed_terms = MixedTerms::none;
  double lambda1 = 1e-3;
  double lambda2 = 1e-6;
  double learning_rate = 1e-3;
  int epochs = 2000;
  int batch = 256;
  uint64_t seed = 0;
  bool normalize_inputs = true;
  /// Initialize the operators from a closed-form least-squares fit (and allow
  /// a final refit). Disable for marginally stable data, where the exact fit
  /// places eigenvalues on the unit circle and the steady-state map becomes
  /// unusable; first-order training from zero leaves those modes contractive.
  bool operator_least_squares = true;

  void validate(int state_dim, int input_dim) const;
};

/// deepDMD objective: Frobenius norm of the one-step lifted prediction
/// residual over all snapshot columns, plus lambda1 * (spectral norm of the
/// stacked operator [K_x K_xu K_u]) plus lambda2 * (l1 norm of all network
/// weights and biases).
double loss(const KoopmanModel& model, const SnapshotSet& snap);

/// Parameter gradients in the same layout as the model's trainable tensors.
struct ModelGradients {
  std::vector<Matrix> psi_x_weights;
  std::vector<Vector> psi_x_biases;
  std::vector<Matrix> psi_u_weights;
  std::vector<Vector> psi_u_biases;
  std::vector<Matrix> mixed_weights;
  std::vector<Vector> mixed_biases;
  Matrix k_x;
  Matrix k_u;
  Matrix k_xu;
};

/// Exact reverse-mode gradients of loss() on the given batch. The spectral
/// penalty contributes its subgradient u1 v1^T from the leading singular
/// pair; the l1 penalty contributes sign(w) with 0 at 0.
ModelGradients gradients(const KoopmanModel& model, const SnapshotSet& batch);

/// Closed-form operator fit over fixed observable maps:
/// K = Psi_x(X_f) * pinv(stack(Psi_x(X_p), Psi_xu, Psi_u)). Used both as the
/// EDMD-style estimator for dictionary observables and as the operator
/// initialization inside train().
KoopmanModel fit_koopman_least_squares(ObservableMap psi_x, ObservableMap psi_u,
                                       MixedTerms mixed, const SnapshotSet& snap,
                                       double rank_tol = 1e-10,
                                       std::optional<FeedforwardNet> mixed_net = std::nullopt);

/// Joint minibatch optimization of (K_x, K_xu, K_u, theta) with
/// adaptive-moment updates; returns the parameters with the best validation
/// loss (the initial set counts). Deterministic given cfg.seed.
KoopmanModel train(const TrainConfig& cfg, const SnapshotSet& train_snap,
                   const SnapshotSet& val_snap);

/// Rolls the lifted dynamics forward; returns an n x (horizon+1) matrix whose
/// first column is x0. States are read out as the first n lifted coordinates.
Matrix multi_step_predict(const KoopmanModel& model, const Vector& x0,
                          const std::vector<Vector>& inputs, int horizon);

/// Relative Frobenius error ||pred - truth||_F / ||truth||_F.
double prediction_error(const Matrix& pred, const Matrix& truth);

/// Multi-step prediction error against a simulated trajectory (predicts
/// states 1..H from the trajectory's initial state and input sequence).
/// A negative horizon means the full trajectory length.
double trajectory_prediction_error(const KoopmanModel& model, const Trajectory& truth,
                                   int horizon = -1);

}  // namespace kssp
