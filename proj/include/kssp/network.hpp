#pragma once

#include <cstdint>
#include <vector>

#include "kssp/numerics.hpp"

namespace kssp {

/// Dense feedforward network, ReLU on hidden layers, linear output.
/// An optional fixed affine input normalization (set from training data,
/// never trained) is applied before the first layer.
class FeedforwardNet {
 public:
  FeedforwardNet() = default;

  /// widths = [input, hidden..., output]; He-style seeded initialization.
  FeedforwardNet(const std::vector<int>& widths, uint64_t seed);

  const std::vector<int>& widths() const { return widths_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int layer_count() const { return static_cast<int>(weights_.size()); }

  std::vector<Matrix>& weights() { return weights_; }
  std::vector<Vector>& biases() { return biases_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Vector>& biases() const { return biases_; }

  void set_input_normalization(const Vector& shift, const Vector& scale);
  bool has_input_normalization() const { return norm_shift_.size() > 0; }
  const Vector& normalization_shift() const { return norm_shift_; }
  const Vector& normalization_scale() const { return norm_scale_; }

  Vector forward(const Vector& v) const;
  /// Columnwise batch forward.
  Matrix forward(const Matrix& batch) const;

  /// Forward pass that keeps per-layer activations for backprop.
  struct Tape {
    Matrix input;                    // normalized input batch
    std::vector<Matrix> activations; // post-ReLU per hidden layer + linear output
  };
  Matrix forward(const Matrix& batch, Tape& tape) const;

  /// Reverse pass: accumulates parameter gradients (same shapes as
  /// weights/biases) given d(loss)/d(output); returns nothing for the input
  /// side (inputs are data, not parameters).
  void backward(const Tape& tape, const Matrix& output_grad, std::vector<Matrix>& weight_grads,
                std::vector<Vector>& bias_grads) const;

  size_t parameter_count() const;
  /// Sum of absolute values of all weights and biases.
  double l1_norm() const;

 private:
  std::vector<int> widths_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  Vector norm_shift_;
  Vector norm_scale_;

  Matrix normalize(const Matrix& batch) const;
};

}  // namespace kssp
