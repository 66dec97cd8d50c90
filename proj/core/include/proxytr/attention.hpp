#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "proxytr/geometry.hpp"
#include "proxytr/nn.hpp"

namespace proxytr {

/// Boolean (query row × key column) matrix; true = attend.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allowed;

  static AttentionMask full(std::size_t rows, std::size_t cols);
  /// Square mask where i attends j iff group[i] == group[j].
  static AttentionMask from_groups(const std::vector<std::size_t>& group);

  bool operator()(std::size_t i, std::size_t j) const { return allowed[i * cols + j] != 0; }
  /// UsageError on a shape mismatch, DomainError on a fully blocked row.
  void validate(std::size_t expected_rows, std::size_t expected_cols) const;

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;
};

/// Coordinates (for the kNN path) paired with one feature row each.
template <typename T>
struct ProxySequenceState {
  std::vector<Point3> coords;
  Tensor<T> features;

  std::size_t size() const { return coords.size(); }
};

/// Coordinates of a row-major [n × 3] tensor.
template <typename T>
std::vector<Point3> to_points(const NDArray<T>& xyz);

/// k nearest rows by coordinate restricted to keys the mask allows. Rows with
/// fewer than k candidates repeat their nearest neighbor. Throws DomainError
/// when there are fewer than k points overall.
NeighborIndex masked_knn(const std::vector<Point3>& coords, const AttentionMask* mask, std::size_t k);

template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamRegistry<T>& registry, const std::string& name, std::size_t width, std::size_t heads);

  /// softmax(Q K^T / sqrt(d_k)) V per head, heads concatenated then projected.
  Tensor<T> operator()(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                       const AttentionMask* mask = nullptr) const;

  std::size_t width() const { return wq.in_features(); }
  std::size_t heads = 1;
  Linear<T> wq, wk, wv, wo;
};

/// kNN edge path: maxpool_j Linear([V_i, V_j - V_i]) fused back with the
/// attention output by Linear(2C → C).
template <typename T>
class GeometryPath {
 public:
  GeometryPath() = default;
  GeometryPath(ParamRegistry<T>& registry, const std::string& name, std::size_t width, std::size_t k);

  Tensor<T> operator()(const Tensor<T>& normed, const Tensor<T>& attended, const std::vector<Point3>& coords,
                       const AttentionMask* mask) const;

  std::size_t k = 1;
  Linear<T> edge;
  Linear<T> merge;
};

template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParamRegistry<T>& registry, const std::string& name, std::size_t width, std::size_t hidden);

  Tensor<T> operator()(const Tensor<T>& x) const { return fc2(relu(fc1(x))); }

  Linear<T> fc1, fc2;
};

struct BlockConfig {
  std::size_t width = 384;
  std::size_t heads = 6;
  std::size_t ffn_hidden = 1536;
  std::size_t k_geo = 8;
  bool geometry = false;

  void validate() const;
};

/// Pre-norm self-attention block, optionally geometry-aware.
template <typename T>
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(ParamRegistry<T>& registry, const std::string& name, const BlockConfig& cfg);

  ProxySequenceState<T> operator()(const ProxySequenceState<T>& state) const;

  BlockConfig config;
  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> attn;
  GeometryPath<T> geo;
  FeedForward<T> ffn;
};

/// Pre-norm masked self-attention → cross-attention → FFN.
template <typename T>
class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(ParamRegistry<T>& registry, const std::string& name, const BlockConfig& cfg);

  ProxySequenceState<T> operator()(const ProxySequenceState<T>& queries, const Tensor<T>& memory,
                                   const AttentionMask& mask) const;

  BlockConfig config;
  LayerNorm<T> norm1, norm2, norm3;
  MultiHeadAttention<T> self_attn, cross_attn;
  GeometryPath<T> geo;
  FeedForward<T> ffn;
};

template <typename T>
class Encoder {
 public:
  Encoder() = default;
  /// The first `geometry_blocks` blocks carry the kNN path.
  Encoder(ParamRegistry<T>& registry, const std::string& name, const BlockConfig& cfg, std::size_t depth,
          std::size_t geometry_blocks);

  /// Depth 0 is the identity.
  ProxySequenceState<T> operator()(const ProxySequenceState<T>& state) const;

  std::vector<EncoderBlock<T>> blocks;
  LayerNorm<T> final_norm;
};

template <typename T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(ParamRegistry<T>& registry, const std::string& name, const BlockConfig& cfg, std::size_t depth,
          std::size_t geometry_blocks);

  ProxySequenceState<T> operator()(const ProxySequenceState<T>& queries, const ProxySequenceState<T>& memory,
                                   const AttentionMask& mask) const;

  std::vector<DecoderBlock<T>> blocks;
  LayerNorm<T> final_norm;
};

}  // namespace proxytr
