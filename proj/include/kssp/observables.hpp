#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kssp/numerics.hpp"

namespace kssp {

/// Monomial dictionary over a base space, state-inclusive by construction:
/// the first base_dim entries of every lift are the coordinates themselves.
/// The zeroth-order (constant) term is excluded. Ordering is degree-major,
/// cross terms before pure powers within a degree (for two variables and
/// degree 2 this is [v1, v2, v1*v2, v1^2, v2^2]).
class MonomialDictionary {
 public:
  MonomialDictionary(int base_dim, int max_degree);

  int base_dim() const { return base_dim_; }
  int max_degree() const { return max_degree_; }
  int lifted_dim() const { return static_cast<int>(exponents_.size()); }
  const std::vector<std::vector<int>>& exponent_table() const { return exponents_; }

  Vector lift(const Vector& v) const;

  /// Jacobian of the lift, lifted_dim x base_dim.
  Matrix jacobian(const Vector& v) const;

 private:
  int base_dim_;
  int max_degree_;
  std::vector<std::vector<int>> exponents_;
};

/// All pairwise products of two lifted vectors in psi_x-major order:
/// entry (i * m_L + j) = px[i] * pu[j].
Vector pairwise_products(const Vector& px, const Vector& pu);

/// M_x factor built from the values of a lifted state vector: the block-stack
/// of diagonal blocks D(px[i]), shaped (n_L * m_L) x m_L, such that
/// M_x * psi_u(u) equals pairwise_products(px, psi_u(u)).
Matrix state_mixed_factor(const Vector& px, int input_lift_dim);

/// M_u factor built from the values of a lifted input vector, shaped
/// (n_L * m_L) x n_L, such that M_u * psi_x(x) equals
/// pairwise_products(psi_x(x), pu) in the same psi_x-major order.
Matrix input_mixed_factor(const Vector& pu, int state_lift_dim);

/// psi_xu(x,u) from two dictionaries (psi_x-major ordering).
Vector lift_mixed(const MonomialDictionary& dict_x, const MonomialDictionary& dict_u,
                  const Vector& x, const Vector& u);

Matrix build_Mx(const MonomialDictionary& dict_x, const MonomialDictionary& dict_u,
                const Vector& x);

Matrix build_Mu(const MonomialDictionary& dict_x, const MonomialDictionary& dict_u,
                const Vector& u);

/// Numerical check that dynamics of the multiplicatively separable form
/// f(x,u) = W G(u) h(x) stay separable after lifting through dict_x: the
/// Koopman-generator image J_psi(x) W G(u) h(x) is compared against the
/// factored evaluation (J_psi(x) W) * (G(u) h(x)) over random samples.
struct SeparabilityReport {
  double max_residual = 0.0;
  int samples = 0;
};

using InputMatrixMap = std::function<Matrix(const Vector& u)>;
using StateVectorMap = std::function<Vector(const Vector& x)>;

SeparabilityReport generator_separability_check(const Matrix& w, const InputMatrixMap& g,
                                                const StateVectorMap& h,
                                                const MonomialDictionary& dict_x,
                                                const Vector& x_lo, const Vector& x_hi,
                                                const Vector& u_lo, const Vector& u_hi,
                                                int n_samples, uint64_t seed);

}  // namespace kssp
