#include "kssp/observable_map.hpp"

#include <stdexcept>

namespace kssp {

ObservableMap ObservableMap::identity(int dim) {
  if (dim < 1) throw std::invalid_argument("ObservableMap::identity: dim must be >= 1");
  return ObservableMap(Kind::identity, dim, dim);
}

ObservableMap ObservableMap::dictionary(MonomialDictionary dict) {
  ObservableMap map(Kind::dictionary, dict.base_dim(), dict.lifted_dim());
  map.dict_ = std::make_shared<const MonomialDictionary>(std::move(dict));
  return map;
}

ObservableMap ObservableMap::network(int base_dim, FeedforwardNet net) {
  if (net.input_dim() != base_dim) {
    throw std::invalid_argument("ObservableMap::network: net input width must equal base_dim");
  }
  ObservableMap map(Kind::network, base_dim, base_dim + net.output_dim());
  map.net_ = std::make_shared<FeedforwardNet>(std::move(net));
  return map;
}

Vector ObservableMap::lift(const Vector& v) const {
  if (v.size() != base_dim_) {
    throw std::invalid_argument("ObservableMap::lift: dimension mismatch");
  }
  switch (kind_) {
    case Kind::identity:
      return v;
    case Kind::dictionary:
      return dict_->lift(v);
    case Kind::network: {
      Vector out(lifted_dim_);
      out.head(base_dim_) = v;
      out.tail(lifted_dim_ - base_dim_) = net_->forward(v);
      return out;
    }
  }
  throw std::logic_error("ObservableMap::lift: unreachable");
}

Matrix ObservableMap::lift(const Matrix& batch) const {
  if (batch.rows() != base_dim_) {
    throw std::invalid_argument("ObservableMap::lift: dimension mismatch");
  }
  switch (kind_) {
    case Kind::identity:
      return batch;
    case Kind::dictionary: {
      Matrix out(lifted_dim_, batch.cols());
      for (Eigen::Index j = 0; j < batch.cols(); ++j) out.col(j) = dict_->lift(batch.col(j));
      return out;
    }
    case Kind::network: {
      Matrix out(lifted_dim_, batch.cols());
      out.topRows(base_dim_) = batch;
      out.bottomRows(lifted_dim_ - base_dim_) = net_->forward(batch);
      return out;
    }
  }
  throw std::logic_error("ObservableMap::lift: unreachable");
}

}  // namespace kssp
