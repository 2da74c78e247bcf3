#include "kssp/observables.hpp"

#include <algorithm>
#include <stdexcept>

#include "kssp/rng.hpp"
#include "kssp/systems.hpp"

namespace kssp {

namespace {

void enumerate_degree(int base_dim, int degree, int position, int remaining,
                      std::vector<int>& current, std::vector<std::vector<int>>& out) {
  if (position == base_dim) {
    if (remaining == 0) out.push_back(current);
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    current[static_cast<size_t>(position)] = e;
    enumerate_degree(base_dim, degree, position + 1, remaining - e, current, out);
  }
  current[static_cast<size_t>(position)] = 0;
}

// within a degree: smaller max exponent first (cross terms before pure
// powers), then lexicographically with larger leading exponents first
bool exponent_order(const std::vector<int>& a, const std::vector<int>& b) {
  const int max_a = *std::max_element(a.begin(), a.end());
  const int max_b = *std::max_element(b.begin(), b.end());
  if (max_a != max_b) return max_a < max_b;
  return a > b;
}

}  // namespace

MonomialDictionary::MonomialDictionary(int base_dim, int max_degree)
    : base_dim_(base_dim), max_degree_(max_degree) {
  if (base_dim < 1 || max_degree < 1) {
    throw std::invalid_argument("MonomialDictionary: base_dim and max_degree must be >= 1");
  }
  for (int degree = 1; degree <= max_degree; ++degree) {
    std::vector<std::vector<int>> of_degree;
    std::vector<int> current(static_cast<size_t>(base_dim), 0);
    enumerate_degree(base_dim, degree, 0, degree, current, of_degree);
    std::sort(of_degree.begin(), of_degree.end(), exponent_order);
    exponents_.insert(exponents_.end(), of_degree.begin(), of_degree.end());
  }
}

Vector MonomialDictionary::lift(const Vector& v) const {
  if (v.size() != base_dim_) {
    throw std::invalid_argument("MonomialDictionary::lift: dimension mismatch");
  }
  Vector out(lifted_dim());
  for (int j = 0; j < lifted_dim(); ++j) {
    const auto& exp = exponents_[static_cast<size_t>(j)];
    double value = 1.0;
    for (int i = 0; i < base_dim_; ++i) {
      for (int e = 0; e < exp[static_cast<size_t>(i)]; ++e) value *= v(i);
    }
    out(j) = value;
  }
  return out;
}

Matrix MonomialDictionary::jacobian(const Vector& v) const {
  if (v.size() != base_dim_) {
    throw std::invalid_argument("MonomialDictionary::jacobian: dimension mismatch");
  }
  Matrix jac = Matrix::Zero(lifted_dim(), base_dim_);
  for (int j = 0; j < lifted_dim(); ++j) {
    const auto& exp = exponents_[static_cast<size_t>(j)];
    for (int i = 0; i < base_dim_; ++i) {
      const int ei = exp[static_cast<size_t>(i)];
      if (ei == 0) continue;
      double value = static_cast<double>(ei);
      for (int k = 0; k < base_dim_; ++k) {
        const int deg = exp[static_cast<size_t>(k)] - (k == i ? 1 : 0);
        for (int e = 0; e < deg; ++e) value *= v(k);
      }
      jac(j, i) = value;
    }
  }
  return jac;
}

Vector pairwise_products(const Vector& px, const Vector& pu) {
  Vector out(px.size() * pu.size());
  for (Eigen::Index i = 0; i < px.size(); ++i) {
    for (Eigen::Index j = 0; j < pu.size(); ++j) {
      out(i * pu.size() + j) = px(i) * pu(j);
    }
  }
  return out;
}

Matrix state_mixed_factor(const Vector& px, int input_lift_dim) {
  const Eigen::Index m_l = input_lift_dim;
  Matrix out = Matrix::Zero(px.size() * m_l, m_l);
  for (Eigen::Index i = 0; i < px.size(); ++i) {
    for (Eigen::Index j = 0; j < m_l; ++j) {
      out(i * m_l + j, j) = px(i);
    }
  }
  return out;
}

Matrix input_mixed_factor(const Vector& pu, int state_lift_dim) {
  const Eigen::Index n_l = state_lift_dim;
  const Eigen::Index m_l = pu.size();
  Matrix out = Matrix::Zero(n_l * m_l, n_l);
  for (Eigen::Index i = 0; i < n_l; ++i) {
    for (Eigen::Index j = 0; j < m_l; ++j) {
      out(i * m_l + j, i) = pu(j);
    }
  }
  return out;
}

Vector lift_mixed(const MonomialDictionary& dict_x, const MonomialDictionary& dict_u,
                  const Vector& x, const Vector& u) {
  return pairwise_products(dict_x.lift(x), dict_u.lift(u));
}

Matrix build_Mx(const MonomialDictionary& dict_x, const MonomialDictionary& dict_u,
                const Vector& x) {
  return state_mixed_factor(dict_x.lift(x), dict_u.lifted_dim());
}

Matrix build_Mu(const MonomialDictionary& dict_x, const MonomialDictionary& dict_u,
                const Vector& u) {
  return input_mixed_factor(dict_u.lift(u), dict_x.lifted_dim());
}

SeparabilityReport generator_separability_check(const Matrix& w, const InputMatrixMap& g,
                                                const StateVectorMap& h,
                                                const MonomialDictionary& dict_x,
                                                const Vector& x_lo, const Vector& x_hi,
                                                const Vector& u_lo, const Vector& u_hi,
                                                int n_samples, uint64_t seed) {
  IcSampler sample_x = uniform_box_sampler(x_lo, x_hi);
  IcSampler sample_u = uniform_box_sampler(u_lo, u_hi);
  std::mt19937_64 rng = make_rng(seed);
  SeparabilityReport report;
  report.samples = n_samples;
  for (int s = 0; s < n_samples; ++s) {
    const Vector x = sample_x(rng);
    const Vector u = sample_u(rng);
    const Matrix jac = dict_x.jacobian(x);
    // direct Koopman-generator image of the lift along the flow
    const Vector direct = jac * (w * (g(u) * h(x)));
    // factored: (matrix in x) times (function of u) times (vector in x)
    const Matrix state_part = jac * w;
    const Vector factored = state_part * (g(u) * h(x));
    const double residual = (direct - factored).lpNorm<Eigen::Infinity>();
    report.max_residual = std::max(report.max_residual, residual);
  }
  return report;
}

}  // namespace kssp
