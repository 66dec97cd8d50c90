#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "proxytr/geometry.hpp"
#include "proxytr/ops.hpp"
#include "proxytr/random.hpp"
#include "proxytr/tensor.hpp"

namespace proxytr {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

/// Owns every learnable tensor of a model under a hierarchical name.
/// Initial values are drawn in double precision, so float and double models
/// built from the same seed agree up to rounding.
template <typename T>
class ParamRegistry {
 public:
  explicit ParamRegistry(std::uint64_t seed) : rng_(seed) {}

  /// Uniform in [-bound, bound].
  Tensor<T> uniform(const std::string& name, Shape shape, double bound);
  Tensor<T> constant(const std::string& name, Shape shape, T value);

  const std::vector<NamedParam<T>>& params() const noexcept { return params_; }
  /// Throws UsageError if no parameter has this name.
  const Tensor<T>& find(const std::string& name) const;
  std::size_t scalar_count() const noexcept;
  void zero_grad();

 private:
  Tensor<T> add(const std::string& name, NDArray<T> value);

  Rng rng_;
  std::vector<NamedParam<T>> params_;
};

/// y = x·W + b, W initialized uniform in ±1/sqrt(fan_in).
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamRegistry<T>& registry, const std::string& name, std::size_t in, std::size_t out, bool bias = true);

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }

  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamRegistry<T>& registry, const std::string& name, std::size_t width);

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }

  Tensor<T> gamma;
  Tensor<T> beta;
};

/// Constant (non-learnable) matrix from double-precision rows.
template <typename T>
Tensor<T> constant_matrix(std::size_t rows, std::size_t cols, const std::vector<double>& values);

/// Max over each neighbor row of Linear([f_i, f_j - f_i]), where i runs over
/// `centers` (rows of `feats`) and j over `neighbors.row(i)`. `edge` maps 2·in → out.
/// Evaluated as f_i·(W_top - W_bottom) + b + max_j f_j·W_bottom, which is exact.
template <typename T>
Tensor<T> edge_max_pool(const Tensor<T>& feats, const std::vector<std::size_t>& centers,
                        const NeighborIndex& neighbors, const Linear<T>& edge);

/// Max over each neighbor row of Linear(f_j) (no center term).
template <typename T>
Tensor<T> neighbor_max_pool(const Tensor<T>& feats, const NeighborIndex& neighbors, const Linear<T>& map);

extern template class ParamRegistry<float>;
extern template class ParamRegistry<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class LayerNorm<float>;
extern template class LayerNorm<double>;

}  // namespace proxytr
