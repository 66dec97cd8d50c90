#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "proxytr/attention.hpp"
#include "proxytr/config.hpp"
#include "proxytr/geometry.hpp"
#include "proxytr/nn.hpp"
#include "proxytr/random.hpp"

namespace proxytr {

enum class QueryOrigin { input, output, noise };

/// Candidate decoder queries. coords [n×3] and features [n×C] stay on the
/// graph; scores [n×1] exist for input/output entries only.
template <typename T>
struct QueryBank {
  Tensor<T> coords;
  Tensor<T> features;
  Tensor<T> scores;
  std::vector<QueryOrigin> origin;

  std::size_t size() const { return origin.size(); }
};

/// Indices of the `m` highest scores (ties to the lower index), ascending.
/// Throws DomainError when m exceeds the candidate count.
std::vector<std::size_t> top_m_indices(std::span<const double> scores, std::size_t m);

struct NoiseSpec {
  std::size_t count = 0;  // k_dn
  double scale = 0.05;    // fraction of the ground-truth bounding-box diagonal

  void validate() const;
};

template <typename T>
struct DenoiseQueries {
  std::vector<Point3> gt_centers;  // c^gt
  Tensor<T> coords;                // c^gt + n, constant
  Tensor<T> features;
};

/// Square mask letting each group attend only within itself: `normal` leading
/// rows, `noise` trailing rows.
AttentionMask group_mask(std::size_t normal, std::size_t noise);

template <typename T>
class QueryGenerator {
 public:
  QueryGenerator() = default;
  QueryGenerator(ParamRegistry<T>& registry, const std::string& name, const ModelConfig& config);

  /// Row-max of W_I(F) and W_O(V), each [1×D].
  Tensor<T> pool_input(const Tensor<T>& proxies) const;
  Tensor<T> pool_output(const Tensor<T>& memory) const;

  /// Coordinates reshape(Linear(g)) and features MLP([c ⧺ g]) for `m` queries.
  QueryBank<T> dynamic_queries(const Tensor<T>& global, std::size_t m, bool input_side) const;
  /// M_I input-side plus M_O output-side entries, scored.
  QueryBank<T> adaptive_bank(const Tensor<T>& proxies, const Tensor<T>& memory) const;
  /// adaptive_bank from already pooled globals.
  QueryBank<T> bank_from(const Tensor<T>& global_input, const Tensor<T>& global_output) const;
  /// Keeps the top-M scored entries in ascending index order. Selected
  /// features are scaled by their score so the scoring head receives gradient.
  QueryBank<T> select(const QueryBank<T>& bank, std::size_t m, std::vector<std::size_t>* chosen = nullptr) const;

  /// Noised ground-truth centers with shared-MLP features, score-scaled in
  /// adapointr mode. Throws DomainError when the ground truth has fewer than
  /// `spec.count` points.
  DenoiseQueries<T> denoise_queries(const PointCloud& ground_truth, const Tensor<T>& global_output,
                                    const NoiseSpec& spec, Rng& rng) const;

  Tensor<T> query_features(const Tensor<T>& coords, const Tensor<T>& global) const;

  std::size_t m_input = 0;
  std::size_t m_output = 0;
  Linear<T> pool_in, pool_out;
  Linear<T> coord_in, coord_out;
  Linear<T> mlp1, mlp2;
  Linear<T> scorer;
};

}  // namespace proxytr
