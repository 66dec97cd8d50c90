#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "proxytr/attention.hpp"
#include "proxytr/config.hpp"
#include "proxytr/nn.hpp"
#include "proxytr/proxy.hpp"
#include "proxytr/querygen.hpp"
#include "proxytr/rebuild.hpp"

namespace proxytr {

/// Ground truth and noise for the auxiliary denoise task (training only).
struct DenoiseRequest {
  const PointCloud* ground_truth = nullptr;
  NoiseSpec noise;
  Rng* rng = nullptr;
};

template <typename T>
struct ModelOutput : CompletionResult<T> {
  std::vector<std::size_t> selected;  // bank indices of the rebuilt queries
  std::vector<QueryOrigin> origin;
  ProxySet<T> proxies;
  ProxySequenceState<T> memory;
  ProxySequenceState<T> decoded;  // normal rows first, then noised rows
};

/// Proxy extractor → encoder → query generation → decoder → folding head.
template <typename T>
class CompletionModel {
 public:
  /// Validates `config`; initial weights depend only on (config, seed).
  CompletionModel(const ModelConfig& config, std::uint64_t seed);

  CompletionModel(const CompletionModel&) = delete;
  CompletionModel& operator=(const CompletionModel&) = delete;
  CompletionModel(CompletionModel&&) = default;

  /// Throws DimensionError unless the cloud has exactly config().input_points points.
  ModelOutput<T> forward(const PointCloud& partial, const DenoiseRequest* denoise = nullptr) const;

  /// Gradient-free inference returning the dense cloud. In pointr mode the
  /// leading rows are the input points, bit for bit.
  PointCloud complete(const PointCloud& partial) const;

  const ModelConfig& config() const noexcept { return config_; }
  ParamRegistry<T>& params() noexcept { return registry_; }
  const ParamRegistry<T>& params() const noexcept { return registry_; }

  ProxyExtractor<T> extractor;
  Encoder<T> encoder;
  QueryGenerator<T> queries;
  Decoder<T> decoder;
  FoldingHead<T> head;

 private:
  ModelConfig config_;
  ParamRegistry<T> registry_;
};

template <typename T>
PointCloud to_cloud(const NDArray<T>& xyz);

}  // namespace proxytr
