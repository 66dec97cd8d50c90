#include "proxytr/rebuild.hpp"

#include <algorithm>
#include <cmath>

#include "proxytr/errors.hpp"
#include "proxytr/proxy.hpp"

namespace proxytr {

std::vector<double> seed_grid(std::size_t cols, std::size_t rows) {
  auto axis = [](std::size_t i, std::size_t n) {
    return n == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  std::vector<double> g;
  g.reserve(cols * rows * 2);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      g.push_back(axis(c, cols));
      g.push_back(axis(r, rows));
    }
  }
  return g;
}

template <typename T>
FoldingHead<T>::FoldingHead(ParamRegistry<T>& registry, const std::string& name, std::size_t width,
                            std::size_t hidden, std::pair<std::size_t, std::size_t> grid)
    : seeds(constant_matrix<T>(grid.first * grid.second, 2, seed_grid(grid.first, grid.second))),
      feature_in(registry, name + ".fc1", width, hidden),
      out(registry, name + ".fc2", hidden, 3) {
  seed_in = registry.uniform(name + ".fc1_seed.weight", Shape{2, hidden}, 1.0 / std::sqrt(double(width + 2)));
}

template <typename T>
Tensor<T> FoldingHead<T>::operator()(const Tensor<T>& features, const Tensor<T>& centers) const {
  const std::size_t n = features.rows(), g = patch_size(), hidden = feature_in.out_features();
  if (centers.rows() != n || centers.cols() != 3) throw DimensionError("folding head needs one center per feature row");
  const Tensor<T> per_proxy = reshape(feature_in(features), Shape{n, 1, hidden});
  const Tensor<T> per_seed = reshape(matmul(seeds, seed_in), Shape{1, g, hidden});
  const Tensor<T> h = relu(add(per_proxy, per_seed));
  const Tensor<T> offsets = reshape(out(reshape(h, Shape{n * g, hidden})), Shape{n, g, 3});
  return reshape(add(offsets, reshape(centers, Shape{n, 1, 3})), Shape{n * g, 3});
}

template <typename T>
Tensor<T> assemble(CompletionMode mode, const PointCloud& input, const Tensor<T>& patches) {
  if (mode == CompletionMode::adapointr) return patches;
  return concat_rows(std::vector<Tensor<T>>{points_tensor<T>(input.points()), patches});
}

template <typename T>
Tensor<T> denoise_patches(const FoldingHead<T>& head, const Tensor<T>& features,
                          const std::vector<Point3>& gt_centers) {
  if (features.rows() != gt_centers.size()) {
    throw UsageError("denoise patches: " + std::to_string(features.rows()) + " features for " +
                     std::to_string(gt_centers.size()) + " centers");
  }
  return head(features, points_tensor<T>(gt_centers));
}

std::vector<std::vector<Point3>> ground_truth_patches(const PointCloud& ground_truth,
                                                      const std::vector<Point3>& centers, std::size_t count) {
  const NeighborIndex nbrs = knn(ground_truth.points(), centers, std::min(count, ground_truth.size()));
  std::vector<std::vector<Point3>> out(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j : nbrs.row(i)) out[i].push_back(ground_truth[j]);
  }
  return out;
}

#define PROXYTR_INSTANTIATE_REBUILD(T)                                                          \
  template class FoldingHead<T>;                                                                \
  template Tensor<T> assemble(CompletionMode, const PointCloud&, const Tensor<T>&);             \
  template Tensor<T> denoise_patches(const FoldingHead<T>&, const Tensor<T>&, const std::vector<Point3>&);

PROXYTR_INSTANTIATE_REBUILD(float)
PROXYTR_INSTANTIATE_REBUILD(double)

}  // namespace proxytr
