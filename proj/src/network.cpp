#include "kssp/network.hpp"

#include <cmath>
#include <stdexcept>

#include "kssp/rng.hpp"

namespace kssp {

FeedforwardNet::FeedforwardNet(const std::vector<int>& widths, uint64_t seed)
    : widths_(widths) {
  if (widths.size() < 2) {
    throw std::invalid_argument("FeedforwardNet: need at least input and output widths");
  }
  for (int w : widths) {
    if (w < 0) throw std::invalid_argument("FeedforwardNet: negative layer width");
  }
  std::mt19937_64 rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double std_dev = fan_in > 0 ? std::sqrt(2.0 / fan_in) : 0.0;
    Matrix w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = std_dev * normal(rng);
    }
    weights_.push_back(std::move(w));
    biases_.push_back(Vector::Zero(fan_out));
  }
}

void FeedforwardNet::set_input_normalization(const Vector& shift, const Vector& scale) {
  if (shift.size() != input_dim() || scale.size() != input_dim()) {
    throw std::invalid_argument("set_input_normalization: dimension mismatch");
  }
  if ((scale.array() <= 0.0).any()) {
    throw std::invalid_argument("set_input_normalization: scale must be positive");
  }
  norm_shift_ = shift;
  norm_scale_ = scale;
}

Matrix FeedforwardNet::normalize(const Matrix& batch) const {
  if (norm_shift_.size() == 0) return batch;
  return (batch.colwise() - norm_shift_).array().colwise() / norm_scale_.array();
}

Vector FeedforwardNet::forward(const Vector& v) const {
  return forward(Matrix(v)).col(0);
}

Matrix FeedforwardNet::forward(const Matrix& batch) const {
  Tape tape;
  return forward(batch, tape);
}

Matrix FeedforwardNet::forward(const Matrix& batch, Tape& tape) const {
  if (batch.rows() != input_dim()) {
    throw std::invalid_argument("FeedforwardNet::forward: input dimension mismatch");
  }
  tape.input = normalize(batch);
  tape.activations.clear();
  tape.activations.reserve(weights_.size());
  Matrix h = tape.input;
  for (size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = (weights_[l] * h).colwise() + biases_[l];
    if (l + 1 < weights_.size()) z = z.cwiseMax(0.0);  // ReLU on hidden layers
    tape.activations.push_back(std::move(z));
    h = tape.activations.back();
  }
  return tape.activations.empty() ? tape.input : tape.activations.back();
}

void FeedforwardNet::backward(const Tape& tape, const Matrix& output_grad,
                              std::vector<Matrix>& weight_grads,
                              std::vector<Vector>& bias_grads) const {
  if (weight_grads.size() != weights_.size() || bias_grads.size() != biases_.size()) {
    throw std::invalid_argument("FeedforwardNet::backward: gradient buffers mismatch");
  }
  Matrix grad = output_grad;
  for (size_t l = weights_.size(); l-- > 0;) {
    if (l + 1 < weights_.size()) {
      // ReLU: zero where the post-activation was clamped (subgradient 0 at 0)
      grad = grad.cwiseProduct((tape.activations[l].array() > 0.0).cast<double>().matrix());
    }
    const Matrix& below = l == 0 ? tape.input : tape.activations[l - 1];
    weight_grads[l] += grad * below.transpose();
    bias_grads[l] += grad.rowwise().sum();
    if (l > 0) grad = weights_[l].transpose() * grad;
  }
}

size_t FeedforwardNet::parameter_count() const {
  size_t count = 0;
  for (const auto& w : weights_) count += static_cast<size_t>(w.size());
  for (const auto& b : biases_) count += static_cast<size_t>(b.size());
  return count;
}

double FeedforwardNet::l1_norm() const {
  double sum = 0.0;
  for (const auto& w : weights_) sum += w.cwiseAbs().sum();
  for (const auto& b : biases_) sum += b.cwiseAbs().sum();
  return sum;
}

}  // namespace kssp
