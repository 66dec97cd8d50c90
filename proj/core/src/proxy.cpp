#include "proxytr/proxy.hpp"

#include "proxytr/errors.hpp"

namespace proxytr {

template <typename T>
EdgeConvLayer<T>::EdgeConvLayer(ParamRegistry<T>& registry, const std::string& name, std::size_t in_channels,
                                const EdgeConvSpec& spec_, ExtractorKind kind_)
    : spec(spec_), kind(kind_) {
  if (spec.k == 0) throw DomainError("edge conv needs k >= 1");
  const std::size_t in = kind == ExtractorKind::edgeconv ? 2 * in_channels : in_channels;
  map = Linear<T>(registry, name, in, spec.out_channels);
}

template <typename T>
PointLevel<T> EdgeConvLayer<T>::operator()(const PointLevel<T>& input) const {
  const std::size_t n = input.points.size();
  if (input.features.rows() != n) throw DimensionError("edge conv: one feature row per point required");
  if (n < spec.k) {
    throw DomainError("edge conv needs at least k=" + std::to_string(spec.k) + " points, got " + std::to_string(n));
  }
  if (spec.out_points > n) {
    throw DomainError("edge conv cannot keep " + std::to_string(spec.out_points) + " of " + std::to_string(n) +
                      " points");
  }
  PointLevel<T> out;
  out.kept = fps(input.points, spec.out_points, canonical_start(input.points));
  out.points.reserve(out.kept.size());
  for (std::size_t i : out.kept) out.points.push_back(input.points[i]);
  const NeighborIndex nbrs = knn(input.points, out.points, spec.k);
  out.features = kind == ExtractorKind::edgeconv ? edge_max_pool(input.features, out.kept, nbrs, map)
                                                 : neighbor_max_pool(input.features, nbrs, map);
  return out;
}

template <typename T>
PositionalEmbedding<T>::PositionalEmbedding(ParamRegistry<T>& registry, const std::string& name, std::size_t width)
    : fc1(registry, name + ".fc1", 3, width / 2), fc2(registry, name + ".fc2", width / 2, width) {
  if (width < 2) throw DomainError("positional embedding width must be at least 2");
}

template <typename T>
Tensor<T> PositionalEmbedding<T>::operator()(const std::vector<Point3>& points) const {
  return fc2(relu(fc1(points_tensor<T>(points))));
}

template <typename T>
Tensor<T> points_tensor(std::span<const Point3> points) {
  NDArray<T> a(Shape{points.size(), 3});
  for (std::size_t i = 0; i < points.size(); ++i) {
    a.at(i, 0) = static_cast<T>(points[i].x);
    a.at(i, 1) = static_cast<T>(points[i].y);
    a.at(i, 2) = static_cast<T>(points[i].z);
  }
  return Tensor<T>(std::move(a), false);
}

template <typename T>
Tensor<T> points_tensor(const std::vector<Point3>& points) {
  return points_tensor<T>(std::span<const Point3>(points));
}

template <typename T>
ProxyExtractor<T>::ProxyExtractor(ParamRegistry<T>& registry, const std::string& name, const ModelConfig& config)
    : embed(registry, name + ".embed", 3, config.embed_channels),
      project(registry, name + ".project",
              config.extractor_layers.empty() ? config.embed_channels : config.extractor_layers.back().out_channels,
              config.width),
      position(registry, name + ".pos", config.width) {
  std::size_t in = config.embed_channels;
  for (std::size_t i = 0; i < config.extractor_layers.size(); ++i) {
    layers.emplace_back(registry, name + ".layer" + std::to_string(i), in, config.extractor_layers[i],
                        config.extractor);
    in = config.extractor_layers[i].out_channels;
  }
}

template <typename T>
ProxySet<T> ProxyExtractor<T>::operator()(const PointCloud& cloud) const {
  PointLevel<T> level{std::vector<Point3>(cloud.begin(), cloud.end()), {}, {}};
  level.features = embed(points_tensor<T>(cloud.points()));
  std::vector<std::size_t> origin(cloud.size());
  for (std::size_t i = 0; i < origin.size(); ++i) origin[i] = i;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    level = layers[i](level);
    if (i + 1 < layers.size()) level.features = relu(level.features);
    std::vector<std::size_t> next(level.kept.size());
    for (std::size_t j = 0; j < next.size(); ++j) next[j] = origin[level.kept[j]];
    origin = std::move(next);
  }
  ProxySet<T> out;
  out.centers = level.points;
  out.center_indices = std::move(origin);
  out.local_features = project(level.features);
  out.features = add(out.local_features, position(out.centers));
  return out;
}

#define PROXYTR_INSTANTIATE_PROXY(T)                                  \
  template class EdgeConvLayer<T>;                                    \
  template class PositionalEmbedding<T>;                              \
  template class ProxyExtractor<T>;                                   \
  template Tensor<T> points_tensor(std::span<const Point3>);          \
  template Tensor<T> points_tensor(const std::vector<Point3>&);

PROXYTR_INSTANTIATE_PROXY(float)
PROXYTR_INSTANTIATE_PROXY(double)

}  // namespace proxytr
