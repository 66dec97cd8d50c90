#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "proxytr/config.hpp"
#include "proxytr/geometry.hpp"
#include "proxytr/nn.hpp"

namespace proxytr {

/// Sequence of point proxies: centers p_i and features F_i = F'_i + phi(p_i).
template <typename T>
struct ProxySet {
  std::vector<Point3> centers;
  std::vector<std::size_t> center_indices;  // into the input cloud
  Tensor<T> local_features;                  // F'
  Tensor<T> features;                        // F

  std::size_t size() const { return centers.size(); }
};

/// Points and features produced by one extractor level.
template <typename T>
struct PointLevel {
  std::vector<Point3> points;
  Tensor<T> features;
  std::vector<std::size_t> kept;  // indices into the previous level
};

/// fps-downsample, gather k neighbors from the previous level, then
/// max-pool Linear([f_i, f_j - f_i]) (or Linear(f_j) for the pointlike kind).
template <typename T>
class EdgeConvLayer {
 public:
  EdgeConvLayer() = default;
  EdgeConvLayer(ParamRegistry<T>& registry, const std::string& name, std::size_t in_channels,
                const EdgeConvSpec& spec, ExtractorKind kind = ExtractorKind::edgeconv);

  /// Throws DomainError when there are fewer than k input points.
  PointLevel<T> operator()(const PointLevel<T>& input) const;

  EdgeConvSpec spec;
  ExtractorKind kind = ExtractorKind::edgeconv;
  Linear<T> map;
};

/// phi: 3 → C/2 → C with ReLU.
template <typename T>
class PositionalEmbedding {
 public:
  PositionalEmbedding() = default;
  PositionalEmbedding(ParamRegistry<T>& registry, const std::string& name, std::size_t width);

  Tensor<T> operator()(const std::vector<Point3>& points) const;

  Linear<T> fc1, fc2;
};

template <typename T>
Tensor<T> points_tensor(const std::vector<Point3>& points);
template <typename T>
Tensor<T> points_tensor(std::span<const Point3> points);

template <typename T>
class ProxyExtractor {
 public:
  ProxyExtractor() = default;
  ProxyExtractor(ParamRegistry<T>& registry, const std::string& name, const ModelConfig& config);

  /// Throws DomainError when the cloud has fewer points than the first level keeps.
  ProxySet<T> operator()(const PointCloud& cloud) const;

  Linear<T> embed;
  std::vector<EdgeConvLayer<T>> layers;
  Linear<T> project;
  PositionalEmbedding<T> position;
};

}  // namespace proxytr
