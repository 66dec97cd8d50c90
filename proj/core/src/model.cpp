#include "proxytr/model.hpp"

#include <algorithm>

#include "proxytr/errors.hpp"

namespace proxytr {

namespace {

BlockConfig block_config(const ModelConfig& c) {
  BlockConfig b;
  b.width = c.width;
  b.heads = c.heads;
  b.ffn_hidden = c.ffn_width();
  b.k_geo = c.k_geo;
  return b;
}

const ModelConfig& validated(const ModelConfig& c) {
  c.validate();
  return c;
}

}  // namespace

template <typename T>
CompletionModel<T>::CompletionModel(const ModelConfig& config, std::uint64_t seed)
    : config_(validated(config)), registry_(seed) {
  extractor = ProxyExtractor<T>(registry_, "extractor", config_);
  encoder = Encoder<T>(registry_, "encoder", block_config(config_), config_.encoder_depth, config_.geometry_blocks);
  queries = QueryGenerator<T>(registry_, "query", config_);
  decoder = Decoder<T>(registry_, "decoder", block_config(config_), config_.decoder_depth, config_.geometry_blocks);
  head = FoldingHead<T>(registry_, "fold", config_.width, config_.fold_width(), config_.patch_grid());
}

template <typename T>
ModelOutput<T> CompletionModel<T>::forward(const PointCloud& partial, const DenoiseRequest* denoise) const {
  if (partial.size() != config_.input_points) {
    throw DimensionError("model expects " + std::to_string(config_.input_points) + " input points, got " +
                         std::to_string(partial.size()));
  }
  ModelOutput<T> out;
  out.proxies = extractor(partial);
  out.memory = encoder({out.proxies.centers, out.proxies.features});

  const Tensor<T> g_out = queries.pool_output(out.memory.features);
  QueryBank<T> selected;
  if (config_.mode == CompletionMode::adapointr) {
    const QueryBank<T> bank = queries.bank_from(queries.pool_input(out.proxies.features), g_out);
    selected = queries.select(bank, config_.queries, &out.selected);
  } else {
    selected = queries.dynamic_queries(g_out, config_.queries, false);
    out.selected.resize(config_.queries);
    for (std::size_t i = 0; i < out.selected.size(); ++i) out.selected[i] = i;
  }
  out.origin = selected.origin;

  const std::size_t m = config_.queries;
  ProxySequenceState<T> q{to_points(selected.coords.value()), selected.features};
  DenoiseQueries<T> dn;
  const bool with_denoise = denoise && denoise->ground_truth && denoise->noise.count > 0;
  if (with_denoise) {
    if (!denoise->rng) throw UsageError("denoise request needs an rng");
    dn = queries.denoise_queries(*denoise->ground_truth, g_out, denoise->noise, *denoise->rng);
    const std::vector<Point3> noised = to_points(dn.coords.value());
    q.coords.insert(q.coords.end(), noised.begin(), noised.end());
    q.features = concat_rows(std::vector<Tensor<T>>{q.features, dn.features});
  }
  const std::size_t k_dn = with_denoise ? denoise->noise.count : 0;
  out.decoded = decoder(q, out.memory, group_mask(m, k_dn));

  const Tensor<T> normal = k_dn ? slice_rows(out.decoded.features, 0, m) : out.decoded.features;
  out.coarse = selected.coords;
  out.dense = assemble(config_.mode, partial, head(normal, selected.coords));
  if (with_denoise) {
    out.denoise_patches = denoise_patches(head, slice_rows(out.decoded.features, m, m + k_dn), dn.gt_centers);
    out.denoise_centers = dn.gt_centers;
  }
  return out;
}

template <typename T>
PointCloud CompletionModel<T>::complete(const PointCloud& partial) const {
  NoGradGuard guard;
  std::vector<Point3> dense = to_points(forward(partial).dense.value());
  // The tensor copy of the input is rounded to T; keep the caller's points exact.
  if (config_.mode == CompletionMode::pointr) std::copy(partial.begin(), partial.end(), dense.begin());
  return PointCloud(std::move(dense));
}

template <typename T>
PointCloud to_cloud(const NDArray<T>& xyz) {
  return PointCloud(to_points(xyz));
}

template class CompletionModel<float>;
template class CompletionModel<double>;
template PointCloud to_cloud(const NDArray<float>&);
template PointCloud to_cloud(const NDArray<double>&);

}  // namespace proxytr
