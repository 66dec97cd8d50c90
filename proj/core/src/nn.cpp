#include "proxytr/nn.hpp"

#include <cmath>

#include "proxytr/errors.hpp"

namespace proxytr {

template <typename T>
Tensor<T> ParamRegistry<T>::add(const std::string& name, NDArray<T> value) {
  for (const auto& p : params_) {
    if (p.name == name) throw UsageError("duplicate parameter name '" + name + "'");
  }
  Tensor<T> t(std::move(value), true);
  params_.push_back({name, t});
  return t;
}

template <typename T>
Tensor<T> ParamRegistry<T>::uniform(const std::string& name, Shape shape, double bound) {
  NDArray<T> v(std::move(shape));
  for (auto& x : v.data()) x = static_cast<T>(rng_.uniform(-bound, bound));
  return add(name, std::move(v));
}

template <typename T>
Tensor<T> ParamRegistry<T>::constant(const std::string& name, Shape shape, T value) {
  return add(name, NDArray<T>(std::move(shape), value));
}

template <typename T>
const Tensor<T>& ParamRegistry<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw UsageError("no parameter named '" + name + "'");
}

template <typename T>
std::size_t ParamRegistry<T>::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParamRegistry<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
Linear<T>::Linear(ParamRegistry<T>& registry, const std::string& name, std::size_t in, std::size_t out, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = registry.uniform(name + ".weight", Shape{in, out}, bound);
  if (bias) this->bias = registry.uniform(name + ".bias", Shape{out}, bound);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParamRegistry<T>& registry, const std::string& name, std::size_t width) {
  gamma = registry.constant(name + ".gamma", Shape{width}, T(1));
  beta = registry.constant(name + ".beta", Shape{width}, T(0));
}

template <typename T>
Tensor<T> constant_matrix(std::size_t rows, std::size_t cols, const std::vector<double>& values) {
  if (values.size() != rows * cols) throw DimensionError("constant_matrix: value count does not match shape");
  return Tensor<T>(NDArray<T>(Shape{rows, cols}, std::vector<T>(values.begin(), values.end())), false);
}

namespace {

template <typename T>
Tensor<T> pool_rows(const Tensor<T>& per_point, const NeighborIndex& neighbors) {
  if (neighbors.k == 0) throw DomainError("neighbor pooling needs k >= 1");
  const Tensor<T> gathered = gather_rows(per_point, neighbors.indices);
  return max(reshape(gathered, Shape{neighbors.queries, neighbors.k, per_point.cols()}), 1);
}

}  // namespace

template <typename T>
Tensor<T> edge_max_pool(const Tensor<T>& feats, const std::vector<std::size_t>& centers,
                        const NeighborIndex& neighbors, const Linear<T>& edge) {
  const std::size_t in = feats.cols();
  if (edge.in_features() != 2 * in) throw DimensionError("edge_max_pool: edge map expects 2x the feature width");
  if (centers.size() != neighbors.queries) throw DimensionError("edge_max_pool: one neighbor row per center");
  const Tensor<T> top = slice_rows(edge.weight, 0, in);
  const Tensor<T> bottom = slice_rows(edge.weight, in, 2 * in);
  const Tensor<T> self_term = linear(gather_rows(feats, centers), sub(top, bottom), edge.bias);
  return add(self_term, pool_rows(matmul(feats, bottom), neighbors));
}

template <typename T>
Tensor<T> neighbor_max_pool(const Tensor<T>& feats, const NeighborIndex& neighbors, const Linear<T>& map) {
  return pool_rows(map(feats), neighbors);
}

template class ParamRegistry<float>;
template class ParamRegistry<double>;
template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template Tensor<float> constant_matrix<float>(std::size_t, std::size_t, const std::vector<double>&);
template Tensor<double> constant_matrix<double>(std::size_t, std::size_t, const std::vector<double>&);

}  // namespace proxytr

namespace proxytr {
#define PROXYTR_INSTANTIATE_POOL(T)                                                                      \
  template Tensor<T> edge_max_pool(const Tensor<T>&, const std::vector<std::size_t>&, const NeighborIndex&, \
                                   const Linear<T>&);                                                    \
  template Tensor<T> neighbor_max_pool(const Tensor<T>&, const NeighborIndex&, const Linear<T>&);
PROXYTR_INSTANTIATE_POOL(float)
PROXYTR_INSTANTIATE_POOL(double)
}  // namespace proxytr
