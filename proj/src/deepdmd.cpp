#include "kssp/deepdmd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "kssp/rng.hpp"

namespace kssp {

namespace {

constexpr double kTinyNorm = 1e-300;
constexpr double kNearUnitTol = 1e-6;

using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct SpectralPair {
  double sigma = 0.0;
  Vector left;
  Vector right;
};

// leading singular pair by power iteration on K K^T (deterministic start)
SpectralPair leading_singular_pair(const Matrix& k_stack) {
  SpectralPair pair;
  pair.left = Vector::Zero(k_stack.rows());
  pair.right = Vector::Zero(k_stack.cols());
  if (k_stack.size() == 0 || k_stack.cwiseAbs().maxCoeff() == 0.0) return pair;
  const Matrix gram = k_stack * k_stack.transpose();
  Vector u = Vector::Ones(gram.rows()).normalized();
  for (int it = 0; it < 1000; ++it) {
    Vector w = gram * u;
    const double norm = w.norm();
    if (norm < kTinyNorm) return pair;
    w /= norm;
    const double delta = std::min((w - u).norm(), (w + u).norm());
    u = w;
    if (delta < 1e-15) break;
  }
  Vector ktu = k_stack.transpose() * u;
  const double sigma = ktu.norm();
  if (sigma < kTinyNorm) return pair;
  pair.sigma = sigma;
  pair.left = u;
  pair.right = ktu / sigma;
  return pair;
}

struct BatchEval {
  Matrix zx_p, zx_f, zu, zxu;
  FeedforwardNet::Tape tape_xp, tape_xf, tape_u, tape_xu;
  Matrix residual;
  double data_term = 0.0;
};

Matrix lift_with_tape(const ObservableMap& map, const Matrix& batch, FeedforwardNet::Tape& tape) {
  if (map.kind() != ObservableMap::Kind::network) return map.lift(batch);
  Matrix out(map.lifted_dim(), batch.cols());
  out.topRows(map.base_dim()) = batch;
  out.bottomRows(map.lifted_dim() - map.base_dim()) = map.net().forward(batch, tape);
  return out;
}

Matrix mixed_product_batch(const Matrix& zx, const Matrix& zu) {
  const Eigen::Index n_l = zx.rows();
  const Eigen::Index m_l = zu.rows();
  Matrix out(n_l * m_l, zx.cols());
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    RowMajorMap block(out.col(j).data(), n_l, m_l);
    block = zx.col(j) * zu.col(j).transpose();
  }
  return out;
}

BatchEval evaluate(const KoopmanModel& model, const SnapshotSet& snap, bool with_tapes) {
  BatchEval ev;
  ev.zx_p = with_tapes ? lift_with_tape(model.psi_x, snap.x_past, ev.tape_xp)
                       : model.psi_x.lift(snap.x_past);
  ev.zx_f = with_tapes ? lift_with_tape(model.psi_x, snap.x_future, ev.tape_xf)
                       : model.psi_x.lift(snap.x_future);
  ev.zu = with_tapes ? lift_with_tape(model.psi_u, snap.u_past, ev.tape_u)
                     : model.psi_u.lift(snap.u_past);
  ev.residual = ev.zx_f - model.k_x * ev.zx_p - model.k_u * ev.zu;
  if (model.mixed == MixedTerms::dictionary) {
    ev.zxu = mixed_product_batch(ev.zx_p, ev.zu);
    ev.residual -= model.k_xu * ev.zxu;
  } else if (model.mixed == MixedTerms::learned) {
    Matrix joint(snap.x_past.rows() + snap.u_past.rows(), snap.columns());
    joint.topRows(snap.x_past.rows()) = snap.x_past;
    joint.bottomRows(snap.u_past.rows()) = snap.u_past;
    ev.zxu = model.mixed_net->forward(joint, ev.tape_xu);
    ev.residual -= model.k_xu * ev.zxu;
  }
  ev.data_term = ev.residual.norm();
  return ev;
}

Matrix stack_operator(const KoopmanModel& model) {
  const Eigen::Index n_l = model.k_x.rows();
  const Eigen::Index m_l = model.k_u.cols();
  const Eigen::Index mix = model.k_xu.size() > 0 ? model.k_xu.cols() : 0;
  Matrix stack(n_l, n_l + mix + m_l);
  stack.leftCols(n_l) = model.k_x;
  if (mix > 0) stack.middleCols(n_l, mix) = model.k_xu;
  stack.rightCols(m_l) = model.k_u;
  return stack;
}

double penalty_terms(const KoopmanModel& model) {
  double value = 0.0;
  if (model.info.lambda1 > 0.0) {
    value += model.info.lambda1 * leading_singular_pair(stack_operator(model)).sigma;
  }
  if (model.info.lambda2 > 0.0) {
    double l1 = 0.0;
    if (model.psi_x.kind() == ObservableMap::Kind::network) l1 += model.psi_x.net().l1_norm();
    if (model.psi_u.kind() == ObservableMap::Kind::network) l1 += model.psi_u.net().l1_norm();
    if (model.mixed_net) l1 += model.mixed_net->l1_norm();
    value += model.info.lambda2 * l1;
  }
  return value;
}

void add_l1_subgradient(const FeedforwardNet& net, double lambda2, std::vector<Matrix>& w_grads,
                        std::vector<Vector>& b_grads) {
  if (lambda2 <= 0.0) return;
  for (size_t l = 0; l < net.weights().size(); ++l) {
    w_grads[l] += lambda2 * net.weights()[l].array().sign().matrix();
    b_grads[l] += lambda2 * net.biases()[l].array().sign().matrix();
  }
}

std::vector<Matrix> zero_like(const std::vector<Matrix>& src) {
  std::vector<Matrix> out;
  out.reserve(src.size());
  for (const auto& m : src) out.push_back(Matrix::Zero(m.rows(), m.cols()));
  return out;
}

std::vector<Vector> zero_like(const std::vector<Vector>& src) {
  std::vector<Vector> out;
  out.reserve(src.size());
  for (const auto& v : src) out.push_back(Vector::Zero(v.size()));
  return out;
}

}  // namespace

std::string to_string(MixedTerms mixed) {
  switch (mixed) {
    case MixedTerms::none: return "none";
    case MixedTerms::dictionary: return "dictionary";
    case MixedTerms::learned: return "learned";
  }
  return "none";
}

MixedTerms mixed_terms_from_string(const std::string& s) {
  if (s == "none") return MixedTerms::none;
  if (s == "dictionary") return MixedTerms::dictionary;
  if (s == "learned") return MixedTerms::learned;
  throw std::invalid_argument("unknown mixed_terms value: " + s);
}

int KoopmanModel::mixed_dim() const {
  switch (mixed) {
    case MixedTerms::none: return 0;
    case MixedTerms::dictionary: return state_lift_dim() * input_lift_dim();
    case MixedTerms::learned: return mixed_net ? mixed_net->output_dim() : 0;
  }
  return 0;
}

Vector KoopmanModel::lift_mixed(const Vector& x, const Vector& u) const {
  if (mixed == MixedTerms::dictionary) {
    return pairwise_products(psi_x.lift(x), psi_u.lift(u));
  }
  if (mixed == MixedTerms::learned) {
    Vector joint(x.size() + u.size());
    joint << x, u;
    return mixed_net->forward(joint);
  }
  throw std::logic_error("KoopmanModel::lift_mixed: model has no mixed terms");
}

Vector KoopmanModel::step_lifted(const Vector& z, const Vector& u) const {
  Vector next = k_x * z + k_u * lift_input(u);
  if (mixed != MixedTerms::none) {
    next += k_xu * lift_mixed(z.head(state_dim()), u);
  }
  return next;
}

void TrainConfig::validate(int state_dim, int input_dim) const {
  (void)state_dim;
  (void)input_dim;
  if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (state_observables < 0 || input_observables < 0 || mixed_observables < 0) {
    throw std::invalid_argument("observable counts must be >= 0");
  }
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("hidden widths must be >= 1");
  }
}

double loss(const KoopmanModel& model, const SnapshotSet& snap) {
  const BatchEval ev = evaluate(model, snap, false);
  const double value = ev.data_term + penalty_terms(model);
  if (!std::isfinite(value)) throw NumericsError("loss: non-finite value");
  return value;
}

ModelGradients gradients(const KoopmanModel& model, const SnapshotSet& batch) {
  if (batch.columns() == 0) throw std::invalid_argument("gradients: empty batch");
  const int n = model.state_dim();
  const int n_l = model.state_lift_dim();
  const int m_l = model.input_lift_dim();

  BatchEval ev = evaluate(model, batch, true);

  ModelGradients grads;
  const bool net_x = model.psi_x.kind() == ObservableMap::Kind::network;
  const bool net_u = model.psi_u.kind() == ObservableMap::Kind::network;
  if (net_x) {
    grads.psi_x_weights = zero_like(model.psi_x.net().weights());
    grads.psi_x_biases = zero_like(model.psi_x.net().biases());
  }
  if (net_u) {
    grads.psi_u_weights = zero_like(model.psi_u.net().weights());
    grads.psi_u_biases = zero_like(model.psi_u.net().biases());
  }
  if (model.mixed_net) {
    grads.mixed_weights = zero_like(model.mixed_net->weights());
    grads.mixed_biases = zero_like(model.mixed_net->biases());
  }
  grads.k_x = Matrix::Zero(model.k_x.rows(), model.k_x.cols());
  grads.k_u = Matrix::Zero(model.k_u.rows(), model.k_u.cols());
  grads.k_xu = Matrix::Zero(model.k_xu.rows(), model.k_xu.cols());

  if (ev.data_term > kTinyNorm) {
    const Matrix g = ev.residual / ev.data_term;  // d||R||_F / dR
    grads.k_x -= g * ev.zx_p.transpose();
    grads.k_u -= g * ev.zu.transpose();
    Matrix dzx_p = -model.k_x.transpose() * g;
    Matrix dzu = -model.k_u.transpose() * g;
    if (model.mixed != MixedTerms::none) {
      grads.k_xu -= g * ev.zxu.transpose();
      const Matrix dzxu = -model.k_xu.transpose() * g;
      if (model.mixed == MixedTerms::dictionary) {
        for (Eigen::Index j = 0; j < dzxu.cols(); ++j) {
          ConstRowMajorMap block(dzxu.col(j).data(), n_l, m_l);
          dzx_p.col(j) += block * ev.zu.col(j);
          dzu.col(j) += block.transpose() * ev.zx_p.col(j);
        }
      } else if (model.mixed_net) {
        model.mixed_net->backward(ev.tape_xu, dzxu, grads.mixed_weights, grads.mixed_biases);
      }
    }
    // only the learned (non-inclusive) rows reach the network parameters
    if (net_x) {
      model.psi_x.net().backward(ev.tape_xf, g.bottomRows(n_l - n), grads.psi_x_weights,
                                 grads.psi_x_biases);
      model.psi_x.net().backward(ev.tape_xp, dzx_p.bottomRows(n_l - n), grads.psi_x_weights,
                                 grads.psi_x_biases);
    }
    if (net_u) {
      model.psi_u.net().backward(ev.tape_u, dzu.bottomRows(m_l - model.input_dim()),
                                 grads.psi_u_weights, grads.psi_u_biases);
    }
  }

  if (model.info.lambda1 > 0.0) {
    const SpectralPair pair = leading_singular_pair(stack_operator(model));
    if (pair.sigma > 0.0) {
      const Matrix sub = model.info.lambda1 * pair.left * pair.right.transpose();
      grads.k_x += sub.leftCols(n_l);
      const Eigen::Index mix = grads.k_xu.cols();
      if (mix > 0) grads.k_xu += sub.middleCols(n_l, mix);
      grads.k_u += sub.rightCols(m_l);
    }
  }
  if (net_x) add_l1_subgradient(model.psi_x.net(), model.info.lambda2, grads.psi_x_weights,
                                grads.psi_x_biases);
  if (net_u) add_l1_subgradient(model.psi_u.net(), model.info.lambda2, grads.psi_u_weights,
                                grads.psi_u_biases);
  if (model.mixed_net) add_l1_subgradient(*model.mixed_net, model.info.lambda2,
                                          grads.mixed_weights, grads.mixed_biases);
  return grads;
}

KoopmanModel fit_koopman_least_squares(ObservableMap psi_x, ObservableMap psi_u,
                                       MixedTerms mixed, const SnapshotSet& snap,
                                       double rank_tol,
                                       std::optional<FeedforwardNet> mixed_net) {
  if (mixed == MixedTerms::learned && !mixed_net) {
    throw std::invalid_argument("fit_koopman_least_squares: learned mixed terms need a network");
  }
  KoopmanModel model;
  model.psi_x = std::move(psi_x);
  model.psi_u = std::move(psi_u);
  model.mixed = mixed;
  if (mixed == MixedTerms::learned) model.mixed_net = std::move(mixed_net);

  const BatchEval partial = [&] {
    BatchEval ev;
    ev.zx_p = model.psi_x.lift(snap.x_past);
    ev.zx_f = model.psi_x.lift(snap.x_future);
    ev.zu = model.psi_u.lift(snap.u_past);
    if (mixed == MixedTerms::dictionary) {
      ev.zxu = mixed_product_batch(ev.zx_p, ev.zu);
    } else if (mixed == MixedTerms::learned) {
      Matrix joint(snap.x_past.rows() + snap.u_past.rows(), snap.columns());
      joint.topRows(snap.x_past.rows()) = snap.x_past;
      joint.bottomRows(snap.u_past.rows()) = snap.u_past;
      ev.zxu = model.mixed_net->forward(joint);
    }
    return ev;
  }();

  const Eigen::Index n_l = partial.zx_p.rows();
  const Eigen::Index m_l = partial.zu.rows();
  const Eigen::Index mix = partial.zxu.rows();
  Matrix stacked(n_l + mix + m_l, snap.columns());
  stacked.topRows(n_l) = partial.zx_p;
  if (mix > 0) stacked.middleRows(n_l, mix) = partial.zxu;
  stacked.bottomRows(m_l) = partial.zu;
  const Matrix k = partial.zx_f * pseudoinverse(stacked, rank_tol);
  model.k_x = k.leftCols(n_l);
  if (mix > 0) model.k_xu = k.middleCols(n_l, mix);
  model.k_u = k.rightCols(m_l);
  return model;
}

namespace {

struct ParamSnapshot {
  std::vector<Matrix> wx, wu, wxu;
  std::vector<Vector> bx, bu, bxu;
  Matrix k_x, k_u, k_xu;

  static ParamSnapshot capture(const KoopmanModel& model) {
    ParamSnapshot s;
    if (model.psi_x.kind() == ObservableMap::Kind::network) {
      s.wx = model.psi_x.net().weights();
      s.bx = model.psi_x.net().biases();
    }
    if (model.psi_u.kind() == ObservableMap::Kind::network) {
      s.wu = model.psi_u.net().weights();
      s.bu = model.psi_u.net().biases();
    }
    if (model.mixed_net) {
      s.wxu = model.mixed_net->weights();
      s.bxu = model.mixed_net->biases();
    }
    s.k_x = model.k_x;
    s.k_u = model.k_u;
    s.k_xu = model.k_xu;
    return s;
  }

  void restore(KoopmanModel& model) const {
    if (model.psi_x.kind() == ObservableMap::Kind::network) {
      model.psi_x.net().weights() = wx;
      model.psi_x.net().biases() = bx;
    }
    if (model.psi_u.kind() == ObservableMap::Kind::network) {
      model.psi_u.net().weights() = wu;
      model.psi_u.net().biases() = bu;
    }
    if (model.mixed_net) {
      model.mixed_net->weights() = wxu;
      model.mixed_net->biases() = bxu;
    }
    model.k_x = k_x;
    model.k_u = k_u;
    model.k_xu = k_xu;
  }
};

// adaptive-moment update, one tensor
template <typename T>
void adam_update(T& param, const T& grad, T& m, T& v, double lr, int t) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = (beta2 * v.array() + (1.0 - beta2) * grad.array().square()).matrix();
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

struct AdamState {
  std::vector<Matrix> m_wx, v_wx, m_wu, v_wu, m_wxu, v_wxu;
  std::vector<Vector> m_bx, v_bx, m_bu, v_bu, m_bxu, v_bxu;
  Matrix m_kx, v_kx, m_ku, v_ku, m_kxu, v_kxu;
  int step = 0;

  static AdamState init(const KoopmanModel& model) {
    AdamState st;
    auto zeros_m = [](const std::vector<Matrix>& src) { return zero_like(src); };
    auto zeros_v = [](const std::vector<Vector>& src) { return zero_like(src); };
    if (model.psi_x.kind() == ObservableMap::Kind::network) {
      st.m_wx = zeros_m(model.psi_x.net().weights());
      st.v_wx = zeros_m(model.psi_x.net().weights());
      st.m_bx = zeros_v(model.psi_x.net().biases());
      st.v_bx = zeros_v(model.psi_x.net().biases());
    }
    if (model.psi_u.kind() == ObservableMap::Kind::network) {
      st.m_wu = zeros_m(model.psi_u.net().weights());
      st.v_wu = zeros_m(model.psi_u.net().weights());
      st.m_bu = zeros_v(model.psi_u.net().biases());
      st.v_bu = zeros_v(model.psi_u.net().biases());
    }
    if (model.mixed_net) {
      st.m_wxu = zeros_m(model.mixed_net->weights());
      st.v_wxu = zeros_m(model.mixed_net->weights());
      st.m_bxu = zeros_v(model.mixed_net->biases());
      st.v_bxu = zeros_v(model.mixed_net->biases());
    }
    st.m_kx = Matrix::Zero(model.k_x.rows(), model.k_x.cols());
    st.v_kx = st.m_kx;
    st.m_ku = Matrix::Zero(model.k_u.rows(), model.k_u.cols());
    st.v_ku = st.m_ku;
    st.m_kxu = Matrix::Zero(model.k_xu.rows(), model.k_xu.cols());
    st.v_kxu = st.m_kxu;
    return st;
  }

  void apply(KoopmanModel& model, const ModelGradients& grads, double lr) {
    ++step;
    if (model.psi_x.kind() == ObservableMap::Kind::network) {
      auto& net = model.psi_x.net();
      for (size_t l = 0; l < net.weights().size(); ++l) {
        adam_update(net.weights()[l], grads.psi_x_weights[l], m_wx[l], v_wx[l], lr, step);
        adam_update(net.biases()[l], grads.psi_x_biases[l], m_bx[l], v_bx[l], lr, step);
      }
    }
    if (model.psi_u.kind() == ObservableMap::Kind::network) {
      auto& net = model.psi_u.net();
      for (size_t l = 0; l < net.weights().size(); ++l) {
        adam_update(net.weights()[l], grads.psi_u_weights[l], m_wu[l], v_wu[l], lr, step);
        adam_update(net.biases()[l], grads.psi_u_biases[l], m_bu[l], v_bu[l], lr, step);
      }
    }
    if (model.mixed_net) {
      auto& net = *model.mixed_net;
      for (size_t l = 0; l < net.weights().size(); ++l) {
        adam_update(net.weights()[l], grads.mixed_weights[l], m_wxu[l], v_wxu[l], lr, step);
        adam_update(net.biases()[l], grads.mixed_biases[l], m_bxu[l], v_bxu[l], lr, step);
      }
    }
    adam_update(model.k_x, grads.k_x, m_kx, v_kx, lr, step);
    adam_update(model.k_u, grads.k_u, m_ku, v_ku, lr, step);
    if (model.k_xu.size() > 0) adam_update(model.k_xu, grads.k_xu, m_kxu, v_kxu, lr, step);
  }
};

SnapshotSet gather_columns(const SnapshotSet& snap, const std::vector<Eigen::Index>& idx,
                           size_t first, size_t last) {
  SnapshotSet out;
  const Eigen::Index count = static_cast<Eigen::Index>(last - first);
  out.x_past.resize(snap.x_past.rows(), count);
  out.x_future.resize(snap.x_future.rows(), count);
  out.u_past.resize(snap.u_past.rows(), count);
  for (size_t j = first; j < last; ++j) {
    const Eigen::Index src = idx[j];
    const Eigen::Index dst = static_cast<Eigen::Index>(j - first);
    out.x_past.col(dst) = snap.x_past.col(src);
    out.x_future.col(dst) = snap.x_future.col(src);
    out.u_past.col(dst) = snap.u_past.col(src);
  }
  return out;
}

Vector column_mean(const Matrix& m) { return m.rowwise().mean(); }

Vector column_std(const Matrix& m, const Vector& mean) {
  Vector var = Vector::Zero(m.rows());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    var.array() += (m.col(j) - mean).array().square();
  }
  var /= std::max<double>(1.0, static_cast<double>(m.cols()));
  Vector sd = var.array().sqrt();
  for (Eigen::Index i = 0; i < sd.size(); ++i) sd(i) = std::max(sd(i), 1e-8);
  return sd;
}

int count_near_unit_eigenvalues(const Matrix& k_x) {
  const Eigen::EigenSolver<Matrix> eig(k_x, /*computeEigenvectors=*/false);
  int count = 0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    if (std::abs(eig.eigenvalues()(i) - std::complex<double>(1.0, 0.0)) < kNearUnitTol) ++count;
  }
  return count;
}

}  // namespace

KoopmanModel train(const TrainConfig& cfg, const SnapshotSet& train_snap,
                   const SnapshotSet& val_snap) {
  const int n = static_cast<int>(train_snap.x_past.rows());
  const int m = static_cast<int>(train_snap.u_past.rows());
  cfg.validate(n, m);
  if (train_snap.columns() == 0) throw std::invalid_argument("train: empty training set");

  auto make_map = [&](int base, int extra, const Matrix& data, uint64_t seed) {
    if (extra == 0) return ObservableMap::identity(base);
    std::vector<int> widths;
    widths.push_back(base);
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(extra);
    FeedforwardNet net(widths, seed);
    if (cfg.normalize_inputs) {
      const Vector mean = column_mean(data);
      net.set_input_normalization(mean, column_std(data, mean));
    }
    return ObservableMap::network(base, std::move(net));
  };

  ObservableMap psi_x = make_map(n, cfg.state_observables, train_snap.x_past,
                                 derive_seed(cfg.seed, 1));
  ObservableMap psi_u = make_map(m, cfg.input_observables, train_snap.u_past,
                                 derive_seed(cfg.seed, 2));
  std::optional<FeedforwardNet> mixed_net;
  if (cfg.mixed_terms == MixedTerms::learned) {
    const int out = cfg.mixed_observables > 0 ? cfg.mixed_observables
                                              : psi_x.lifted_dim();
    std::vector<int> widths;
    widths.push_back(n + m);
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(out);
    mixed_net.emplace(widths, derive_seed(cfg.seed, 3));
    if (cfg.normalize_inputs) {
      Matrix joint(n + m, train_snap.columns());
      joint.topRows(n) = train_snap.x_past;
      joint.bottomRows(m) = train_snap.u_past;
      const Vector mean = column_mean(joint);
      mixed_net->set_input_normalization(mean, column_std(joint, mean));
    }
  }

  KoopmanModel model;
  if (cfg.operator_least_squares) {
    // operator initialization: least-squares fit for the initial observables
    model = fit_koopman_least_squares(std::move(psi_x), std::move(psi_u), cfg.mixed_terms,
                                      train_snap, 1e-10, std::move(mixed_net));
  } else {
    model.psi_x = std::move(psi_x);
    model.psi_u = std::move(psi_u);
    model.mixed = cfg.mixed_terms;
    model.mixed_net = std::move(mixed_net);
    const int n_l = model.state_lift_dim();
    model.k_x = Matrix::Zero(n_l, n_l);
    model.k_u = Matrix::Zero(n_l, model.input_lift_dim());
    if (cfg.mixed_terms != MixedTerms::none) {
      model.k_xu = Matrix::Zero(n_l, model.mixed_dim());
    }
  }
  model.info.lambda1 = cfg.lambda1;
  model.info.lambda2 = cfg.lambda2;
  model.info.seed = cfg.seed;

  double train_value = loss(model, train_snap);
  double val_value = loss(model, val_snap);
  model.info.train_loss.push_back(train_value);
  model.info.val_loss.push_back(val_value);
  ParamSnapshot best = ParamSnapshot::capture(model);
  double best_val = val_value;
  model.info.best_epoch = 0;

  AdamState adam = AdamState::init(model);
  std::mt19937_64 shuffle_rng = make_rng(derive_seed(cfg.seed, 4));
  std::vector<Eigen::Index> order(static_cast<size_t>(train_snap.columns()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (size_t i = order.size() - 1; i > 0; --i) {
      const size_t j = static_cast<size_t>((static_cast<__uint128_t>(shuffle_rng()) * (i + 1)) >> 64);
      std::swap(order[i], order[j]);
    }
    const size_t batch_size = static_cast<size_t>(cfg.batch);
    for (size_t first = 0, index = 0; first < order.size(); first += batch_size, ++index) {
      const size_t last = std::min(first + batch_size, order.size());
      const SnapshotSet batch = gather_columns(train_snap, order, first, last);
      const ModelGradients grads = gradients(model, batch);
      adam.apply(model, grads, cfg.learning_rate);
      if (!model.k_x.allFinite() || !model.k_u.allFinite()) {
        throw NumericsError("train: non-finite parameters after batch " +
                            std::to_string(index) + " of epoch " + std::to_string(epoch));
      }
    }
    train_value = loss(model, train_snap);
    val_value = loss(model, val_snap);
    model.info.train_loss.push_back(train_value);
    model.info.val_loss.push_back(val_value);
    if (!std::isfinite(train_value) || train_value > 1e6) {
      throw NumericsError("train: diverged at epoch " + std::to_string(epoch) +
                          " (training loss " + std::to_string(train_value) + ")");
    }
    if (val_value < best_val) {
      best_val = val_value;
      best = ParamSnapshot::capture(model);
      model.info.best_epoch = epoch;
    }
  }

  best.restore(model);

  // closed-form operator refit for the selected observables; kept only if it
  // helps on the validation set
  if (cfg.epochs > 0 && cfg.operator_least_squares) {
    const ParamSnapshot before = ParamSnapshot::capture(model);
    const KoopmanModel refit = fit_koopman_least_squares(
        model.psi_x, model.psi_u, model.mixed, train_snap, 1e-10, model.mixed_net);
    model.k_x = refit.k_x;
    model.k_u = refit.k_u;
    model.k_xu = refit.k_xu;
    const double refit_val = loss(model, val_snap);
    if (refit_val < best_val) {
      best_val = refit_val;
      model.info.val_loss.push_back(refit_val);
      model.info.train_loss.push_back(loss(model, train_snap));
    } else {
      before.restore(model);
    }
  }

  model.info.near_unit_eigenvalues = count_near_unit_eigenvalues(model.k_x);
  return model;
}

Matrix multi_step_predict(const KoopmanModel& model, const Vector& x0,
                          const std::vector<Vector>& inputs, int horizon) {
  if (horizon < 0 || static_cast<size_t>(horizon) > inputs.size()) {
    throw std::invalid_argument("multi_step_predict: horizon exceeds input sequence");
  }
  const int n = model.state_dim();
  Matrix out(n, horizon + 1);
  out.col(0) = x0;
  Vector z = model.lift_state(x0);
  for (int k = 0; k < horizon; ++k) {
    z = model.step_lifted(z, inputs[static_cast<size_t>(k)]);
    out.col(k + 1) = z.head(n);
  }
  return out;
}

double prediction_error(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw std::invalid_argument("prediction_error: shape mismatch");
  }
  const double denom = truth.norm();
  if (denom == 0.0) return pred.norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (pred - truth).norm() / denom;
}

double trajectory_prediction_error(const KoopmanModel& model, const Trajectory& truth,
                                   int horizon) {
  if (horizon < 0 || horizon > truth.steps()) horizon = truth.steps();
  const Matrix pred = multi_step_predict(model, truth.states.front(), truth.inputs, horizon);
  Matrix truth_m(truth.state_dim(), horizon);
  for (int k = 1; k <= horizon; ++k) truth_m.col(k - 1) = truth.states[static_cast<size_t>(k)];
  return prediction_error(pred.rightCols(horizon), truth_m);
}

}  // namespace kssp
