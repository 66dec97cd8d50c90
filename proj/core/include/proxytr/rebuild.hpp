#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "proxytr/config.hpp"
#include "proxytr/geometry.hpp"
#include "proxytr/nn.hpp"

namespace proxytr {

/// `cols × rows` points evenly spanning [-1, 1]², row-major; a single
/// column or row sits at 0.
std::vector<double> seed_grid(std::size_t cols, std::size_t rows);

/// Folding head f: [proxy feature ⧺ seed] → 3D offset through one hidden
/// ReLU layer. The first layer is split into a feature part and a seed part.
template <typename T>
class FoldingHead {
 public:
  FoldingHead() = default;
  FoldingHead(ParamRegistry<T>& registry, const std::string& name, std::size_t width, std::size_t hidden,
              std::pair<std::size_t, std::size_t> grid);

  /// [n·g² × 3] patches f(H_i) + c_i, patch i occupying rows [i·g², (i+1)·g²).
  Tensor<T> operator()(const Tensor<T>& features, const Tensor<T>& centers) const;

  std::size_t patch_size() const { return seeds.rows(); }

  Tensor<T> seeds;  // [g² × 2] constant
  Linear<T> feature_in;
  Tensor<T> seed_in;  // [2 × hidden]
  Linear<T> out;
};

template <typename T>
struct CompletionResult {
  Tensor<T> coarse;  // selected centers [M × 3]
  Tensor<T> dense;   // completed cloud
  Tensor<T> denoise_patches;            // [k_dn·g² × 3] when the denoise task ran
  std::vector<Point3> denoise_centers;  // c^gt anchoring each denoise patch
};

/// pointr: input ⧺ patches. adapointr: patches alone.
template <typename T>
Tensor<T> assemble(CompletionMode mode, const PointCloud& input, const Tensor<T>& patches);

/// Patches for the noised queries, anchored at their clean ground-truth centers.
/// Throws UsageError when feature rows and centers disagree.
template <typename T>
Tensor<T> denoise_patches(const FoldingHead<T>& head, const Tensor<T>& features, const std::vector<Point3>& gt_centers);

/// The `count` ground-truth points nearest to each center, one list per center.
std::vector<std::vector<Point3>> ground_truth_patches(const PointCloud& ground_truth,
                                                      const std::vector<Point3>& centers, std::size_t count);

}  // namespace proxytr
