#pragma once

#include <memory>
#include <optional>

#include "kssp/network.hpp"
#include "kssp/observables.hpp"

namespace kssp {

/// Inclusive lifting map psi(v) = [v; phi(v)]: the base coordinates always
/// occupy the leading entries, so unit vectors in lifted space read out
/// physical coordinates. phi is empty (identity map), a monomial dictionary
/// tail, or a feedforward network.
class ObservableMap {
 public:
  enum class Kind { identity, dictionary, network };

  static ObservableMap identity(int dim);
  static ObservableMap dictionary(MonomialDictionary dict);
  static ObservableMap network(int base_dim, FeedforwardNet net);

  Kind kind() const { return kind_; }
  int base_dim() const { return base_dim_; }
  int lifted_dim() const { return lifted_dim_; }

  const MonomialDictionary& dict() const { return *dict_; }
  const FeedforwardNet& net() const { return *net_; }
  FeedforwardNet& net() { return *net_; }

  Vector lift(const Vector& v) const;
  /// Columnwise batch lift.
  Matrix lift(const Matrix& batch) const;

 private:
  ObservableMap(Kind kind, int base_dim, int lifted_dim)
      : kind_(kind), base_dim_(base_dim), lifted_dim_(lifted_dim) {}

  Kind kind_;
  int base_dim_;
  int lifted_dim_;
  std::shared_ptr<const MonomialDictionary> dict_;
  std::shared_ptr<FeedforwardNet> net_;
};

}  // namespace kssp
