#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "proxytr/tensor.hpp"

namespace proxytr {

// Differentiable operations. Every op records a backward closure when any
// input requires a gradient; all reductions run in a fixed order so forward
// results are bit-reproducible.

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

/// x·w + b for x [n×in], w [in×out], b [out] (b may be undefined).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// Elementwise with numpy-style trailing-dimension broadcasting.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Row-wise softmax of a matrix where entries with allowed[i*cols+j] == 0
/// receive exactly zero probability. A fully blocked row is a DomainError.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x, const std::vector<std::uint8_t>& allowed);

enum class ReduceOp { sum, mean, max };

/// Reduces away `axis`. Max routes its gradient to the lowest-index argmax.
template <typename T>
Tensor<T> reduce(ReduceOp op, const Tensor<T>& x, std::size_t axis);
template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::size_t axis) { return reduce(ReduceOp::sum, x, axis); }
template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis) { return reduce(ReduceOp::mean, x, axis); }
template <typename T>
Tensor<T> max(const Tensor<T>& x, std::size_t axis) { return reduce(ReduceOp::max, x, axis); }
template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

/// out[i] = x[index[i]] over rows of a matrix.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& index);
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

}  // namespace proxytr
